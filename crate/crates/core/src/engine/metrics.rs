use std::collections::BTreeMap;

use serde::Serialize;

use crate::energy_store::{EnergyStore, IntegrateOutcome};

/// Running energy totals for one node.
///
/// `harvested` counts only energy the store absorbed and `consumed` only
/// energy the store actually delivered, so `harvested - consumed` always
/// equals the change in stored energy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyAccount {
    pub harvested: f64,
    pub consumed: f64,
    /// Harvest offered while the store was full.
    pub spilled: f64,
    /// Load demanded while the store was empty.
    pub unmet: f64,
}

impl EnergyAccount {
    /// Books a direct correction to stored energy.
    pub fn adjust(&mut self, delta: f64) {
        if delta >= 0.0 {
            self.harvested += delta;
        } else {
            self.consumed -= delta;
        }
    }
}

/// Applies constant harvest and load power for `dt` seconds.
///
/// The caller guarantees that nothing changes either power inside the
/// interval, so the single integration step is exact.
pub fn step_energy(
    store: &mut EnergyStore,
    account: &mut EnergyAccount,
    harvest_w: f64,
    load_w: f64,
    dt: f64,
) -> IntegrateOutcome {
    let dt = dt.max(0.0);
    let out = store.integrate(harvest_w - load_w, dt);
    // Only a store sitting on a rail can have clamped; anything else is
    // rounding in `applied`.
    let spilled = if store.is_full() { out.spilled() } else { 0.0 };
    let unmet = if store.is_empty() { out.unmet() } else { 0.0 };
    account.spilled += spilled;
    account.unmet += unmet;
    account.harvested += harvest_w * dt - spilled;
    account.consumed += load_w * dt - unmet;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMetrics {
    pub harvested_j: f64,
    pub consumed_j: f64,
    pub spilled_j: f64,
    pub unmet_j: f64,
    pub initial_stored_j: f64,
    pub final_stored_j: f64,
    pub decoded_bits: f64,
    pub uplink_bits: f64,
    pub records_stored: usize,
    pub delivered_records: usize,
    pub frames_received: u64,
    pub outage_s: f64,
    pub phase_occupancy_s: BTreeMap<String, f64>,
    pub charge_completions_s: Vec<f64>,
    pub brown_outs: u64,
    pub protocol_errors: u64,
}

impl NodeMetrics {
    /// `(harvested - consumed) - (final - initial)`; zero up to rounding.
    pub fn closure_error(&self) -> f64 {
        (self.harvested_j - self.consumed_j) - (self.final_stored_j - self.initial_stored_j)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub frame_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialSummary {
    pub roles: BTreeMap<String, String>,
    pub data_links: BTreeMap<String, Option<String>>,
    pub infeasible: Vec<String>,
    pub mean_harvest_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario_hash: String,
    pub seed: u64,
    pub duration_s: f64,
    pub policy: String,
    pub events_processed: u64,
    pub nodes: BTreeMap<String, NodeMetrics>,
    /// Keyed `"<transmitter>-><node>"`.
    pub links: BTreeMap<String, LinkMetrics>,
    pub spatial: Option<SpatialSummary>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics always serialize")
    }
}
