mod common;

use slipt::policy::{assign_spatial, harvested_power, ReceiverNeeds, TxRole};

use common::brute_force_spatial;

fn needs(demand: Option<f64>) -> ReceiverNeeds {
    ReceiverNeeds { sensitivity: 1e-6, decode_rate: 500e3, efficiency: 0.2, demand }
}

#[test]
fn greedy_matches_brute_force_when_each_receiver_has_one_option() {
    // The third transmitter is too weak to decode anywhere.
    let link = vec![vec![5e-3, 1e-7], vec![1e-7, 4e-3], vec![5e-7, 5e-7]];
    let rx = [needs(Some(100e3)), needs(Some(100e3))];
    let greedy = assign_spatial(&link, &rx).unwrap();
    let (best_roles, best) = brute_force_spatial(&link, &rx).unwrap();
    assert_eq!(greedy.roles, vec![TxRole::Data, TxRole::Data, TxRole::Energy]);
    assert_eq!(greedy.roles, best_roles);
    assert_eq!(harvested_power(&greedy.roles, &link, &rx), best);
    assert_eq!(greedy.energy_sources, vec![vec![2], vec![2]]);
}

#[test]
fn greedy_can_miss_a_shared_data_transmitter() {
    // Transmitter 2 could serve both receivers, freeing the two strong ones
    // for energy; greedy instead takes each receiver's strongest link.
    let link = vec![vec![5e-3, 1e-4], vec![1e-4, 4e-3], vec![2e-3, 2e-3]];
    let rx = [needs(Some(100e3)), needs(Some(100e3))];
    let greedy = assign_spatial(&link, &rx).unwrap();
    let (best_roles, best) = brute_force_spatial(&link, &rx).unwrap();
    assert_eq!(best_roles, vec![TxRole::Energy, TxRole::Energy, TxRole::Data]);
    assert!(greedy.infeasible.is_empty());
    assert!(harvested_power(&greedy.roles, &link, &rx) < best);
}

#[test]
fn receivers_without_demand_only_harvest() {
    let link = vec![vec![1e-3, 2e-3], vec![3e-3, 0.0]];
    let rx = [needs(None), needs(Some(600e3))];
    let a = assign_spatial(&link, &rx).unwrap();
    assert_eq!(a.roles, vec![TxRole::Energy, TxRole::Energy]);
    assert_eq!(a.infeasible, vec![1]);
    assert_eq!(a.energy_sources, vec![vec![0, 1], vec![0]]);
}
