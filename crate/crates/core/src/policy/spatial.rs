//! Role assignment for several transmitters serving several receivers.
//!
//! Each transmitter either carries data or sends unmodulated light for
//! harvesting. A receiver decodes from one data transmitter and harvests
//! from every energy transmitter whose light reaches it.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TxRole {
    Energy,
    Data,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("no transmitters to assign")]
    NoTransmitters,
    #[error("link power matrix row {tx} has {got} entries, expected {expected}")]
    RaggedMatrix { tx: usize, got: usize, expected: usize },
    #[error("link power from transmitter {tx} to receiver {rx} is not a non-negative number")]
    BadPower { tx: usize, rx: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReceiverNeeds {
    pub sensitivity: f64,
    pub decode_rate: f64,
    pub efficiency: f64,
    /// Required data rate, if the receiver wants a data stream at all.
    pub demand: Option<f64>,
}

impl ReceiverNeeds {
    /// Whether `power` from a single transmitter can carry this receiver's demand.
    pub fn can_decode(&self, power: f64) -> bool {
        match self.demand {
            Some(rate) => power >= self.sensitivity && self.decode_rate >= rate,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialAssignment {
    /// Role per transmitter.
    pub roles: Vec<TxRole>,
    /// Data transmitter per receiver.
    pub data_links: Vec<Option<usize>>,
    /// Energy transmitters whose light reaches each receiver.
    pub energy_sources: Vec<Vec<usize>>,
    /// Receivers whose data demand no transmitter can meet.
    pub infeasible: Vec<usize>,
}

fn check(link_power: &[Vec<f64>], receivers: usize) -> Result<(), SpatialError> {
    if link_power.is_empty() {
        return Err(SpatialError::NoTransmitters);
    }
    for (tx, row) in link_power.iter().enumerate() {
        if row.len() != receivers {
            return Err(SpatialError::RaggedMatrix { tx, got: row.len(), expected: receivers });
        }
        if let Some(rx) = row.iter().position(|p| !(*p >= 0.0)) {
            return Err(SpatialError::BadPower { tx, rx });
        }
    }
    Ok(())
}

/// Greedy assignment. Receivers are visited in index order; each one with
/// a demand takes its strongest feasible transmitter as a data source
/// (lowest index wins ties). Every transmitter not chosen for data sends
/// energy.
///
/// `link_power[tx][rx]` is the optical power transmitter `tx` delivers to
/// receiver `rx`.
pub fn assign_spatial(
    link_power: &[Vec<f64>],
    receivers: &[ReceiverNeeds],
) -> Result<SpatialAssignment, SpatialError> {
    check(link_power, receivers.len())?;
    let mut roles = vec![TxRole::Energy; link_power.len()];
    let mut data_links = vec![None; receivers.len()];
    let mut infeasible = Vec::new();

    for (rx, needs) in receivers.iter().enumerate() {
        if needs.demand.is_none() {
            continue;
        }
        let best = link_power
            .iter()
            .enumerate()
            .filter(|(_, row)| needs.can_decode(row[rx]))
            // max_by keeps the last of equal elements, so compare reversed
            // on index to make the lowest index win.
            .max_by(|(ia, a), (ib, b)| a[rx].total_cmp(&b[rx]).then(ib.cmp(ia)))
            .map(|(tx, _)| tx);
        match best {
            Some(tx) => {
                roles[tx] = TxRole::Data;
                data_links[rx] = Some(tx);
            }
            None => infeasible.push(rx),
        }
    }

    let energy_sources = (0..receivers.len())
        .map(|rx| {
            (0..link_power.len())
                .filter(|&tx| roles[tx] == TxRole::Energy && link_power[tx][rx] > 0.0)
                .collect()
        })
        .collect();

    Ok(SpatialAssignment { roles, data_links, energy_sources, infeasible })
}

/// Total electrical power harvested across receivers under `roles`.
pub fn harvested_power(roles: &[TxRole], link_power: &[Vec<f64>], receivers: &[ReceiverNeeds]) -> f64 {
    receivers
        .iter()
        .enumerate()
        .map(|(rx, needs)| {
            let optical: f64 = roles
                .iter()
                .zip(link_power)
                .filter(|(role, _)| **role == TxRole::Energy)
                .map(|(_, row)| row[rx])
                .sum();
            needs.efficiency * optical
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wants_data() -> ReceiverNeeds {
        ReceiverNeeds { sensitivity: 1e-6, decode_rate: 500e3, efficiency: 0.2, demand: Some(100e3) }
    }

    fn no_data() -> ReceiverNeeds {
        ReceiverNeeds { demand: None, ..wants_data() }
    }

    #[test]
    fn single_pair_is_forced_to_data() {
        let a = assign_spatial(&[vec![1e-3]], &[wants_data()]).unwrap();
        assert_eq!(a.roles, vec![TxRole::Data]);
        assert_eq!(a.data_links, vec![Some(0)]);
        assert!(a.energy_sources[0].is_empty());
    }

    #[test]
    fn identical_transmitters_tie_to_lowest_id() {
        let a = assign_spatial(&[vec![1e-3], vec![1e-3]], &[wants_data()]).unwrap();
        assert_eq!(a.roles, vec![TxRole::Data, TxRole::Energy]);
        assert_eq!(a.energy_sources[0], vec![1]);
    }

    #[test]
    fn no_demand_means_all_energy() {
        let a = assign_spatial(&[vec![1e-3], vec![2e-3]], &[no_data()]).unwrap();
        assert_eq!(a.roles, vec![TxRole::Energy; 2]);
        assert!((harvested_power(&a.roles, &[vec![1e-3], vec![2e-3]], &[no_data()]) - 0.2 * 3e-3).abs() < 1e-15);
    }

    #[test]
    fn unreachable_demand_is_reported_not_fatal() {
        let a = assign_spatial(&[vec![1e-9, 1e-3]], &[wants_data(), wants_data()]).unwrap();
        assert_eq!(a.infeasible, vec![0]);
        assert_eq!(a.data_links, vec![None, Some(0)]);

        let too_fast = ReceiverNeeds { demand: Some(1e6), ..wants_data() };
        let a = assign_spatial(&[vec![1.0]], &[too_fast]).unwrap();
        assert_eq!(a.infeasible, vec![0]);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(assign_spatial(&[], &[wants_data()]), Err(SpatialError::NoTransmitters));
        assert!(matches!(
            assign_spatial(&[vec![1.0, 2.0]], &[wants_data()]),
            Err(SpatialError::RaggedMatrix { .. })
        ));
        assert!(matches!(
            assign_spatial(&[vec![f64::NAN]], &[wants_data()]),
            Err(SpatialError::BadPower { .. })
        ));
    }
}
