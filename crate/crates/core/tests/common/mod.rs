//! Helpers shared by the integration tests.
#![allow(dead_code)]

use slipt::policy::{ReceiverNeeds, TxRole};

/// Single node under a constant, fade-free beam delivering `harvest_w`
/// watts of electrical power at 20 % conversion: the transmitter sits at
/// 1 m in water with total attenuation 0.1/m and a beam narrower than the
/// cell, so the optical power at the cell is `tx * exp(-0.1)`.
pub fn constant_harvest_scenario(harvest_w: f64, store: &str, duration: &str, extra_node: &str) -> String {
    let tx_power = harvest_w / (0.2 * (-0.1f64).exp());
    format!(
        r#"{{
        duration: "{duration}",
        seed: 1,
        transmitters: [{{
            id: "tx", position: ["0m","0m","0m"], power: "{tx_power:.17e}W", wavelength: "450nm",
            water: {{ absorption: "0.06/m", scattering: "0.04/m" }}, beam_radius: "1cm",
        }}],
        nodes: [{{
            id: "n", position: ["0m","0m","1m"], cell: {{ efficiency: 0.2 }},
            store: {store},
            {extra_node}
        }}],
    }}"#
    )
}

/// Best total harvested power over every role vector that serves every
/// receiver with a data demand; `None` if no role vector does.
pub fn brute_force_spatial(link_power: &[Vec<f64>], receivers: &[ReceiverNeeds]) -> Option<(Vec<TxRole>, f64)> {
    let n_tx = link_power.len();
    let mut best: Option<(Vec<TxRole>, f64)> = None;
    for mask in 0u32..(1 << n_tx) {
        let roles: Vec<TxRole> =
            (0..n_tx).map(|t| if mask >> t & 1 == 1 { TxRole::Data } else { TxRole::Energy }).collect();
        let feasible = receivers.iter().enumerate().all(|(rx, needs)| {
            needs.demand.is_none()
                || (0..n_tx).any(|t| roles[t] == TxRole::Data && needs.can_decode(link_power[t][rx]))
        });
        if !feasible {
            continue;
        }
        let harvest: f64 = receivers
            .iter()
            .enumerate()
            .map(|(rx, needs)| {
                needs.efficiency
                    * (0..n_tx).filter(|&t| roles[t] == TxRole::Energy).map(|t| link_power[t][rx]).sum::<f64>()
            })
            .sum();
        if best.as_ref().is_none_or(|(_, h)| harvest > *h) {
            best = Some((roles, harvest));
        }
    }
    best
}
