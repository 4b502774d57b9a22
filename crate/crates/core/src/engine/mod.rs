//! Discrete-event simulation of a scenario.
//!
//! Power drawn and harvested by every node is piecewise constant: it only
//! changes when an event is processed. Between events each node's store is
//! advanced with one exact constant-power step.

mod metrics;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{sample_fading, ChannelError, TurbulenceModel};
use crate::energy_store::EnergyStore;
use crate::harvester::{switch_mode, threshold_bits, CellMode};
use crate::node::{encode_command, decode_command, CommandEffect, NodeState, Phase, SensorRecord, Stimulus, FRAME_BITS};
use crate::policy::{assign_spatial, harvested_power, Policy, ReceiverNeeds, SpatialError, TimeSwitchSchedule, WavelengthRole};
use crate::rng::{stream, StreamRng};
use crate::scenario::{fading_stream_label, NodeSpec, Scenario, ValidationReport};
use crate::trace::TraceRow;

pub use metrics::{step_energy, EnergyAccount, LinkMetrics, Metrics, NodeMetrics, SpatialSummary};

/// Relative distance to a rail within which a store is snapped onto it at
/// a scheduled charge check.
const SNAP_TOLERANCE: f64 = 1e-9;

/// Per node, per transmitter.
type Masks = Vec<Vec<bool>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EventKind {
    SlotBoundary,
    FrameArrival,
    SenseTick,
    ChargeCheck,
    TimerExpiry,
    Custom,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SlotBoundary => "SlotBoundary",
            EventKind::FrameArrival => "FrameArrival",
            EventKind::SenseTick => "SenseTick",
            EventKind::ChargeCheck => "ChargeCheck",
            EventKind::TimerExpiry => "TimerExpiry",
            EventKind::Custom => "Custom",
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario is invalid:\n{0}")]
    Invalid(#[from] ValidationReport),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRow>,
    /// Memory-card contents per node id.
    pub storage: BTreeMap<String, Vec<SensorRecord>>,
}

/// The file seed unless overridden; one of the two must exist.
pub fn resolve_seed(scenario: &Scenario, override_seed: Option<u64>) -> Result<u64, ValidationReport> {
    override_seed.or(scenario.seed).ok_or_else(|| {
        let mut r = ValidationReport::default();
        r.push("seed", "is required (set it in the scenario or pass a seed override)");
        r
    })
}

pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(scenario, seed)?;
    sim.run();
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Start,
    Fade,
    /// A transmitter switches on or off.
    Light,
    ModeBoundary(CellMode),
    CellReady,
    Frame(usize),
    WakeDecide,
    SenseDone,
    UplinkDone,
    Charge,
    WakeTimer,
}

impl Action {
    fn kind(self) -> EventKind {
        match self {
            Action::Start | Action::Light => EventKind::Custom,
            Action::Fade | Action::ModeBoundary(_) => EventKind::SlotBoundary,
            Action::Frame(_) => EventKind::FrameArrival,
            Action::SenseDone => EventKind::SenseTick,
            Action::Charge => EventKind::ChargeCheck,
            Action::CellReady | Action::WakeDecide | Action::UplinkDone | Action::WakeTimer => EventKind::TimerExpiry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Guard {
    Always,
    /// Dropped if the node browned out since scheduling.
    Epoch(u64),
    /// Dropped if the charge prediction was superseded.
    Charge(u64),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    node: Option<usize>,
    guard: Guard,
    action: Action,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

/// How a node's cell is shared between harvesting and decoding.
#[derive(Debug, Clone, PartialEq)]
enum Sharing {
    Protocol,
    Switching { schedule: TimeSwitchSchedule, decodes: bool },
    Splitting(crate::policy::PowerSplit),
    Wavelength,
}

struct NodeRt {
    spec: NodeSpec,
    sharing: Sharing,
    fsm: NodeState,
    store: EnergyStore,
    account: EnergyAccount,
    mode: CellMode,
    cell_ready: bool,
    epoch: u64,
    charge_gen: u64,
    /// Long-run optical power from each transmitter.
    mean_power: Vec<f64>,
    fade: Vec<f64>,
    /// Which transmitters feed the harvester and the decoder.
    energy_from: Vec<bool>,
    data_from: Vec<bool>,
    lit: bool,
    harvest_w: f64,
    load_w: f64,
    decode_in: Option<f64>,
    full: bool,
    /// Link-level policies only: stopped after the store ran dry.
    suspended: bool,
    rx_waiting: bool,
    uplink_active: bool,
    sense_started: f64,
    sensing: Vec<u8>,
    last_t: f64,
    decoded_bits: f64,
    uplink_bits: f64,
    frames_received: u64,
    outage_s: f64,
    phase_time: BTreeMap<Phase, f64>,
    charge_completions: Vec<f64>,
    brown_outs: u64,
    protocol_errors: u64,
    initial_stored: f64,
    fade_rng: Vec<Option<StreamRng>>,
    frame_rng: StreamRng,
}

impl NodeRt {
    fn received(&self, tx: usize, on: &[bool]) -> f64 {
        if on[tx] {
            self.mean_power[tx] * self.fade[tx]
        } else {
            0.0
        }
    }

    fn sum_from(&self, mask: &[bool], on: &[bool]) -> f64 {
        (0..mask.len()).filter(|&t| mask[t]).map(|t| self.received(t, on)).sum()
    }

    fn total_incident(&self, on: &[bool]) -> f64 {
        (0..self.mean_power.len()).map(|t| self.received(t, on)).sum()
    }

    /// Recomputes harvest power, load power and decoder input from the
    /// current phase, cell mode and light.
    fn refresh(&mut self, on: &[bool]) {
        let cell = &self.spec.cell;
        let total = self.total_incident(on);
        self.lit = total >= cell.sensitivity;
        let pv = self.mode == CellMode::Photovoltaic && self.cell_ready;
        let pc = self.mode == CellMode::Photoconductive && self.cell_ready;
        let energy_in = self.sum_from(&self.energy_from, on);
        let data_in = self.sum_from(&self.data_from, on);
        let phase = self.fsm.phase;

        let (harvest_in, decode_in) = match &self.sharing {
            Sharing::Protocol => {
                let h = if pv && phase != Phase::CommandRx { total } else { 0.0 };
                let d = (pc && phase == Phase::CommandRx && !self.uplink_active).then_some(total);
                (h, d)
            }
            Sharing::Switching { decodes, .. } => {
                let h = if pv || self.suspended { energy_in } else { 0.0 };
                let d = (pc && *decodes && !self.suspended).then_some(data_in);
                (h, d)
            }
            Sharing::Splitting(ps) => {
                if self.suspended {
                    (total, None)
                } else {
                    let (h, d) = ps.split(total);
                    (h, Some(d))
                }
            }
            Sharing::Wavelength => (energy_in, (!self.suspended).then_some(data_in)),
        };
        self.harvest_w = cell.conversion_efficiency * harvest_in;
        self.decode_in = decode_in;
        self.load_w = match phase {
            Phase::Sleep | Phase::Harvest => self.spec.sleep_power,
            Phase::SenseSave => self.spec.sense_load.power(),
            Phase::WakeCheck | Phase::CommandRx => {
                if self.uplink_active {
                    self.spec.uplink.load.power()
                } else {
                    self.fsm.active_load.power()
                }
            }
        };
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.last_t;
        if dt <= 0.0 {
            return;
        }
        step_energy(&mut self.store, &mut self.account, self.harvest_w, self.load_w, dt);
        if let Some(d) = self.decode_in {
            let cell = &self.spec.cell;
            self.decoded_bits += threshold_bits(cell.decode_rate, cell.sensitivity, d, dt);
        }
        if !self.lit {
            self.outage_s += dt;
        }
        *self.phase_time.entry(self.fsm.phase).or_insert(0.0) += dt;
        self.last_t = t;
    }

    fn metrics(&self) -> NodeMetrics {
        NodeMetrics {
            harvested_j: self.account.harvested,
            consumed_j: self.account.consumed,
            spilled_j: self.account.spilled,
            unmet_j: self.account.unmet,
            initial_stored_j: self.initial_stored,
            final_stored_j: self.store.stored(),
            decoded_bits: self.decoded_bits,
            uplink_bits: self.uplink_bits,
            records_stored: self.fsm.storage.len(),
            delivered_records: self.fsm.delivered_records(),
            frames_received: self.frames_received,
            outage_s: self.outage_s,
            phase_occupancy_s: Phase::ALL
                .iter()
                .map(|p| (p.as_str().to_string(), self.phase_time.get(p).copied().unwrap_or(0.0)))
                .collect(),
            charge_completions_s: self.charge_completions.clone(),
            brown_outs: self.brown_outs,
            protocol_errors: self.protocol_errors,
        }
    }
}

struct Simulation<'s> {
    scenario: &'s Scenario,
    seed: u64,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<Event>>,
    nodes: Vec<NodeRt>,
    tx_on: Vec<bool>,
    trace: Vec<TraceRow>,
    links: BTreeMap<String, LinkMetrics>,
    events_processed: u64,
    spatial: Option<SpatialSummary>,
}

impl<'s> Simulation<'s> {
    fn new(scenario: &'s Scenario, seed: u64) -> Result<Self, EngineError> {
        let n_tx = scenario.transmitters.len();
        let mut mean = vec![vec![0.0; scenario.nodes.len()]; n_tx];
        for (t, row) in mean.iter_mut().enumerate() {
            for (n, cell) in row.iter_mut().enumerate() {
                *cell = scenario.link(t, n).mean_power()?;
            }
        }

        let mut spatial = None;
        let mut spatial_masks: Option<(Masks, Masks)> = None;
        if let Policy::Spatial { .. } = scenario.policy {
            if n_tx > 0 {
                let needs: Vec<ReceiverNeeds> = scenario
                    .nodes
                    .iter()
                    .map(|n| ReceiverNeeds {
                        sensitivity: n.cell.sensitivity,
                        decode_rate: n.cell.decode_rate,
                        efficiency: n.cell.conversion_efficiency,
                        demand: n.data_demand,
                    })
                    .collect();
                let a = assign_spatial(&mean, &needs)?;
                let tx_id = |t: usize| scenario.transmitters[t].id.clone();
                let node_id = |n: usize| scenario.nodes[n].id.clone();
                spatial = Some(SpatialSummary {
                    roles: a.roles.iter().enumerate().map(|(t, r)| (tx_id(t), format!("{r:?}"))).collect(),
                    data_links: a.data_links.iter().enumerate().map(|(n, d)| (node_id(n), d.map(tx_id))).collect(),
                    infeasible: a.infeasible.iter().map(|&n| node_id(n)).collect(),
                    mean_harvest_w: harvested_power(&a.roles, &mean, &needs),
                });
                let energy = (0..scenario.nodes.len())
                    .map(|n| (0..n_tx).map(|t| a.energy_sources[n].contains(&t)).collect())
                    .collect();
                let data = (0..scenario.nodes.len())
                    .map(|n| (0..n_tx).map(|t| a.data_links[n] == Some(t)).collect())
                    .collect();
                spatial_masks = Some((energy, data));
            }
        }

        let mut nodes = Vec::with_capacity(scenario.nodes.len());
        for (n, spec) in scenario.nodes.iter().enumerate() {
            let all = vec![true; n_tx];
            let (sharing, energy_from, data_from) = match (&spec.policy, &spatial_masks) {
                (Policy::Protocol, _) => (Sharing::Protocol, all.clone(), all),
                (Policy::TimeSwitching(s), _) => {
                    (Sharing::Switching { schedule: *s, decodes: true }, all.clone(), all)
                }
                (Policy::PowerSplitting(ps), _) => (Sharing::Splitting(*ps), all.clone(), all),
                (Policy::DualWavelength(plan), _) => {
                    let role = |t: usize| plan.classify(scenario.transmitters[t].wavelength_nm);
                    (
                        Sharing::Wavelength,
                        (0..n_tx).map(|t| role(t) == Some(WavelengthRole::Energy)).collect(),
                        (0..n_tx).map(|t| role(t) == Some(WavelengthRole::Data)).collect(),
                    )
                }
                (Policy::Spatial { schedule }, Some((energy, data))) => {
                    let decodes = data[n].iter().any(|&d| d);
                    (Sharing::Switching { schedule: *schedule, decodes }, energy[n].clone(), data[n].clone())
                }
                (Policy::Spatial { schedule }, None) => {
                    (Sharing::Switching { schedule: *schedule, decodes: false }, all.clone(), all)
                }
            };
            let mut fsm = NodeState::new(spec.v_threshold, spec.active_load.clone());
            fsm.enabled_sensors = spec.sensors.iter().filter(|s| s.enabled).map(|s| s.id).collect();
            let fade_rng = scenario
                .transmitters
                .iter()
                .map(|t| (t.scintillation > 0.0).then(|| stream(seed, &fading_stream_label(&t.id, &spec.id))))
                .collect();
            let store = spec.store.clone();
            nodes.push(NodeRt {
                sharing,
                fsm,
                initial_stored: store.stored(),
                full: store.is_full(),
                store,
                account: EnergyAccount::default(),
                mode: CellMode::Photovoltaic,
                cell_ready: true,
                epoch: 0,
                charge_gen: 0,
                mean_power: (0..n_tx).map(|t| mean[t][n]).collect(),
                fade: vec![1.0; n_tx],
                energy_from,
                data_from,
                lit: false,
                harvest_w: 0.0,
                load_w: 0.0,
                decode_in: None,
                suspended: false,
                rx_waiting: false,
                uplink_active: false,
                sense_started: 0.0,
                sensing: Vec::new(),
                last_t: 0.0,
                decoded_bits: 0.0,
                uplink_bits: 0.0,
                frames_received: 0,
                outage_s: 0.0,
                phase_time: BTreeMap::new(),
                charge_completions: Vec::new(),
                brown_outs: 0,
                protocol_errors: 0,
                fade_rng,
                frame_rng: stream(seed, &format!("frames/{}", spec.id)),
                spec: spec.clone(),
            });
        }

        let mut links = BTreeMap::new();
        for t in &scenario.transmitters {
            for n in &scenario.nodes {
                links.insert(format!("{}->{}", t.id, n.id), LinkMetrics::default());
            }
        }

        Ok(Simulation {
            scenario,
            seed,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            tx_on: scenario.transmitters.iter().map(|t| t.is_on(0.0)).collect(),
            nodes,
            trace: Vec::new(),
            links,
            events_processed: 0,
            spatial,
        })
    }

    fn schedule(&mut self, time: f64, node: Option<usize>, guard: Guard, action: Action) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        let time = time.max(self.now);
        self.seq += 1;
        self.queue.push(Reverse(Event { time, seq: self.seq, node, guard, action }));
    }

    fn schedule_node(&mut self, time: f64, n: usize, action: Action) {
        let guard = Guard::Epoch(self.nodes[n].epoch);
        self.schedule(time, Some(n), guard, action);
    }

    fn run(&mut self) {
        let duration = self.scenario.duration;
        if self.scenario.transmitters.iter().any(|t| t.scintillation > 0.0) {
            self.resample_fades();
            self.schedule(self.scenario.engine.fading_slot, None, Guard::Always, Action::Fade);
        }
        for spec in &self.scenario.transmitters {
            for &(a, b) in &spec.windows {
                for edge in [a, b] {
                    if edge > 0.0 && edge < duration {
                        self.schedule(edge, None, Guard::Always, Action::Light);
                    }
                }
            }
        }
        for n in 0..self.nodes.len() {
            self.schedule(0.0, Some(n), Guard::Always, Action::Start);
            if matches!(self.nodes[n].sharing, Sharing::Protocol) {
                if let Some(w) = self.nodes[n].spec.wake_interval {
                    self.schedule(w, Some(n), Guard::Always, Action::WakeTimer);
                }
            }
        }

        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > duration {
                break;
            }
            let valid = match (ev.node, ev.guard) {
                (_, Guard::Always) | (None, _) => true,
                (Some(n), Guard::Epoch(e)) => self.nodes[n].epoch == e,
                (Some(n), Guard::Charge(g)) => self.nodes[n].charge_gen == g,
            };
            if !valid {
                continue;
            }
            self.now = ev.time;
            for node in &mut self.nodes {
                node.advance(ev.time);
            }
            self.events_processed += 1;
            match ev.node {
                Some(n) => {
                    self.handle_node(n, ev.action);
                    self.settle(n);
                    self.record(n, ev.action.kind());
                }
                None => {
                    self.handle_global(ev.action);
                    for n in 0..self.nodes.len() {
                        self.settle(n);
                        self.record(n, ev.action.kind());
                    }
                }
            }
        }

        self.now = duration;
        for n in 0..self.nodes.len() {
            self.nodes[n].advance(duration);
            self.record(n, EventKind::Custom);
        }
    }

    fn record(&mut self, n: usize, kind: EventKind) {
        let node = &self.nodes[n];
        self.trace.push(TraceRow {
            time: self.now,
            node_id: node.spec.id.clone(),
            event_kind: kind.as_str(),
            phase: node.fsm.phase.as_str(),
            stored_j: node.store.stored(),
            v_b: node.store.terminal_voltage(),
            harvested_j_cum: node.account.harvested,
            decoded_bits_cum: node.decoded_bits,
        });
    }

    fn resample_fades(&mut self) {
        let scenario = self.scenario;
        for node in &mut self.nodes {
            for (t, spec) in scenario.transmitters.iter().enumerate() {
                if let Some(rng) = node.fade_rng[t].as_mut() {
                    let model = TurbulenceModel {
                        scintillation_index: spec.scintillation,
                        rng_stream_id: fading_stream_label(&spec.id, &node.spec.id),
                    };
                    node.fade[t] = sample_fading(&model, rng).expect("scintillation is validated non-negative");
                }
            }
        }
    }

    fn handle_global(&mut self, action: Action) {
        match action {
            Action::Fade => {
                self.resample_fades();
                // Slot k sits at k * slot so boundaries do not drift.
                let slot = self.scenario.engine.fading_slot;
                let k = (self.now / slot).round() + 1.0;
                self.schedule(k * slot, None, Guard::Always, Action::Fade);
            }
            Action::Light => {
                let now = self.now;
                self.tx_on = self.scenario.transmitters.iter().map(|t| t.is_on(now)).collect();
            }
            _ => unreachable!("node action dispatched globally"),
        }
        for n in 0..self.nodes.len() {
            self.light_changed(n);
        }
    }

    /// Reacts to a change in received light: wakes a sleeping node on a
    /// rising edge across the detection threshold.
    fn light_changed(&mut self, n: usize) {
        let was_lit = self.nodes[n].lit;
        self.nodes[n].refresh(&self.tx_on);
        if !was_lit
            && self.nodes[n].lit
            && self.nodes[n].sharing == Sharing::Protocol
            && self.nodes[n].fsm.phase == Phase::Sleep
        {
            self.wake(n, Stimulus::LightDetected(self.nodes[n].store.terminal_voltage()));
        }
    }

    fn handle_node(&mut self, n: usize, action: Action) {
        match action {
            Action::Start => {
                if self.nodes[n].sharing == Sharing::Protocol {
                    self.nodes[n].lit = false;
                    self.light_changed(n);
                } else {
                    self.enter_link_mode(n);
                    if let Sharing::Switching { schedule, decodes: true } = self.nodes[n].sharing {
                        if let Some((t, next)) = schedule.next_boundary(0.0) {
                            self.schedule(t, Some(n), Guard::Always, Action::ModeBoundary(next));
                        }
                    }
                }
            }
            Action::WakeTimer => {
                if let Some(w) = self.nodes[n].spec.wake_interval {
                    let k = (self.now / w).round() + 1.0;
                    self.schedule(k * w, Some(n), Guard::Always, Action::WakeTimer);
                }
                if self.nodes[n].fsm.phase == Phase::Sleep {
                    self.wake(n, Stimulus::Timeout);
                }
            }
            Action::WakeDecide => self.decide(n),
            Action::SenseDone => self.sense_done(n),
            Action::CellReady => {
                self.nodes[n].cell_ready = true;
                if self.nodes[n].rx_waiting {
                    self.nodes[n].rx_waiting = false;
                    self.start_frames(n);
                }
            }
            Action::Frame(i) => self.frame_arrival(n, i),
            Action::UplinkDone => {
                self.nodes[n].uplink_active = false;
                self.finish_rx(n);
            }
            Action::ModeBoundary(mode) => self.mode_boundary(n, mode),
            Action::Charge => self.snap(n),
            Action::Fade | Action::Light => unreachable!("global action dispatched to a node"),
        }
    }

    fn step(&mut self, n: usize, stimulus: Stimulus) {
        match self.nodes[n].fsm.step(stimulus) {
            Ok(actions) => self.apply(n, actions),
            Err(e) => {
                log::warn!("node {}: {e}", self.nodes[n].spec.id);
                self.nodes[n].protocol_errors += 1;
            }
        }
    }

    fn apply(&mut self, n: usize, actions: Vec<crate::node::Action>) {
        use crate::node::Action as A;
        for action in actions {
            match action {
                A::MeasureVoltage | A::Sleep => {}
                A::SwitchCell(mode) => self.switch_cell(n, mode),
                A::StartSensing(ids) => {
                    let node = &mut self.nodes[n];
                    node.sense_started = self.now;
                    node.sensing = ids
                        .into_iter()
                        .filter(|id| node.spec.sensors.iter().any(|s| s.id == *id))
                        .collect();
                    let done = self.now + node.sensing.len() as f64 * node.spec.sample_time;
                    self.schedule_node(done, n, Action::SenseDone);
                }
                A::ReceiveCommands => {
                    if self.nodes[n].cell_ready {
                        self.start_frames(n);
                    } else {
                        self.nodes[n].rx_waiting = true;
                    }
                }
            }
        }
        self.nodes[n].refresh(&self.tx_on);
    }

    fn switch_cell(&mut self, n: usize, mode: CellMode) {
        let node = &mut self.nodes[n];
        if node.mode == mode {
            return;
        }
        let mut cell = node.spec.cell.clone();
        cell.mode = node.mode;
        let (cell, ready_at) = switch_mode(&cell, mode, self.now);
        node.mode = cell.mode;
        if ready_at > self.now {
            node.cell_ready = false;
            self.schedule_node(ready_at, n, Action::CellReady);
        } else {
            node.cell_ready = true;
        }
    }

    fn wake(&mut self, n: usize, stimulus: Stimulus) {
        self.step(n, stimulus);
        let wait = self.scenario.engine.wake_check_time;
        if wait > 0.0 {
            self.schedule_node(self.now + wait, n, Action::WakeDecide);
        } else {
            self.decide(n);
        }
    }

    fn decide(&mut self, n: usize) {
        self.nodes[n].refresh(&self.tx_on);
        let stimulus = if self.nodes[n].lit {
            Stimulus::LightDetected(self.nodes[n].store.terminal_voltage())
        } else {
            Stimulus::Timeout
        };
        self.step(n, stimulus);
    }

    fn sense_done(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        let ids = std::mem::take(&mut node.sensing);
        for (k, id) in ids.into_iter().enumerate() {
            let ts = node.sense_started + (k + 1) as f64 * node.spec.sample_time;
            let sensor = node.spec.sensors.iter().find(|s| s.id == id).expect("filtered at start");
            let value = sensor.signal.value_at(ts);
            if let Err(e) = node.fsm.record_sensor(id, value, ts) {
                log::debug!("node {}: {e}", node.spec.id);
            }
        }
        self.step(n, Stimulus::SenseComplete);
    }

    fn start_frames(&mut self, n: usize) {
        let node = &self.nodes[n];
        let count = node.spec.commands.len();
        if count == 0 {
            self.execute_commands(n);
            return;
        }
        let frame_time = f64::from(FRAME_BITS) / node.spec.cell.decode_rate;
        let t0 = self.now;
        for i in 0..count {
            self.schedule_node(t0 + (i + 1) as f64 * frame_time, n, Action::Frame(i));
        }
    }

    fn frame_arrival(&mut self, n: usize, i: usize) {
        let fer = self.scenario.engine.frame_error_rate;
        let on = self.tx_on.clone();
        let node = &mut self.nodes[n];
        let cmd = node.spec.commands[i];
        let mut bytes = encode_command(cmd);
        let ok = if !node.lit {
            false
        } else {
            if fer > 0.0 && node.frame_rng.random::<f64>() < fer {
                let bit = node.frame_rng.random_range(0..FRAME_BITS as usize);
                bytes[bit / 8] ^= 1 << (bit % 8);
            }
            match decode_command(&bytes) {
                Ok(c) => {
                    node.fsm.pending_commands.push_back(c);
                    node.frames_received += 1;
                    true
                }
                Err(_) => false,
            }
        };
        if !ok {
            let strongest = (0..node.mean_power.len())
                .max_by(|&a, &b| node.received(a, &on).total_cmp(&node.received(b, &on)).then(b.cmp(&a)));
            if let Some(t) = strongest {
                let key = format!("{}->{}", self.scenario.transmitters[t].id, node.spec.id);
                self.links.entry(key).or_default().frame_errors += 1;
            }
        }
        if i + 1 == self.nodes[n].spec.commands.len() {
            self.execute_commands(n);
        }
    }

    fn execute_commands(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        let mut busy = 0.0;
        while let Some(cmd) = node.fsm.pending_commands.pop_front() {
            if let CommandEffect::Transmit { records, .. } = node.fsm.apply_command(cmd) {
                let up = &node.spec.uplink;
                let bits = records.len() as f64 * f64::from(up.record_bits);
                let secs = up.stream.unwrap_or(bits / up.rate);
                node.uplink_bits += secs * up.rate;
                busy += secs;
            }
        }
        if busy > 0.0 {
            node.uplink_active = true;
            node.refresh(&self.tx_on);
            self.schedule_node(self.now + busy, n, Action::UplinkDone);
        } else {
            self.finish_rx(n);
        }
    }

    fn finish_rx(&mut self, n: usize) {
        self.step(n, Stimulus::CommandsComplete);
        if self.nodes[n].fsm.phase == Phase::Harvest && self.nodes[n].store.is_full() {
            self.step(n, Stimulus::FullCharge);
        }
    }

    /// Puts a node under a link-level policy into the phase its schedule
    /// calls for at the current time.
    fn enter_link_mode(&mut self, n: usize) {
        let now = self.now;
        let node = &mut self.nodes[n];
        node.suspended = false;
        match node.sharing.clone() {
            Sharing::Switching { schedule, decodes } => {
                let mode = if decodes { schedule.mode_at(now) } else { CellMode::Photovoltaic };
                node.mode = mode;
                node.cell_ready = true;
                node.fsm.phase = if mode == CellMode::Photoconductive { Phase::CommandRx } else { Phase::Harvest };
            }
            Sharing::Splitting(_) | Sharing::Wavelength => {
                node.mode = CellMode::Photovoltaic;
                node.cell_ready = true;
                node.fsm.phase = Phase::CommandRx;
            }
            Sharing::Protocol => unreachable!("protocol nodes use the state machine"),
        }
        self.nodes[n].refresh(&self.tx_on);
    }

    fn mode_boundary(&mut self, n: usize, mode: CellMode) {
        let Sharing::Switching { schedule, .. } = self.nodes[n].sharing else {
            return;
        };
        let now = self.now;
        if let Some((t, next)) = schedule.next_boundary(now) {
            self.schedule(t, Some(n), Guard::Always, Action::ModeBoundary(next));
        }
        if self.nodes[n].suspended {
            return;
        }
        self.switch_cell(n, mode);
        self.nodes[n].fsm.phase = if mode == CellMode::Photoconductive { Phase::CommandRx } else { Phase::Harvest };
        self.nodes[n].refresh(&self.tx_on);
    }

    fn snap(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        let cap = node.store.capacity();
        let s = node.store.stored();
        let target = if (cap - s).abs() <= SNAP_TOLERANCE * cap {
            cap
        } else if s.abs() <= SNAP_TOLERANCE * cap {
            0.0
        } else {
            return;
        };
        let delta = node.store.set_stored(target);
        node.account.adjust(delta);
    }

    /// Reacts to the store reaching a rail, then predicts the next time it
    /// will.
    fn settle(&mut self, n: usize) {
        self.nodes[n].refresh(&self.tx_on);
        let protocol = self.nodes[n].sharing == Sharing::Protocol;

        let full = self.nodes[n].store.is_full();
        if full && !self.nodes[n].full {
            self.nodes[n].full = true;
            self.nodes[n].charge_completions.push(self.now);
            if protocol {
                match self.nodes[n].fsm.phase {
                    Phase::Harvest => self.step(n, Stimulus::FullCharge),
                    Phase::Sleep => self.wake(n, Stimulus::Timeout),
                    _ => {}
                }
            }
        } else if !full {
            self.nodes[n].full = false;
        }

        let node = &self.nodes[n];
        if node.store.is_empty() && node.load_w > node.harvest_w && node.fsm.phase.draws_load() {
            self.brown_out(n);
        }

        let node = &self.nodes[n];
        let cap = node.store.capacity();
        let restart_level = (self.scenario.engine.restart_soc - SNAP_TOLERANCE) * cap;
        if node.suspended && node.store.stored() >= restart_level {
            self.enter_link_mode(n);
        }

        self.predict_charge(n);
    }

    fn brown_out(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        node.brown_outs += 1;
        node.epoch += 1;
        node.uplink_active = false;
        node.rx_waiting = false;
        node.sensing.clear();
        log::debug!("node {} browned out at {} s", node.spec.id, self.now);
        if node.sharing == Sharing::Protocol {
            let actions = node.fsm.brown_out();
            self.apply(n, actions);
        } else {
            node.suspended = true;
            node.fsm.phase = Phase::Sleep;
            node.mode = CellMode::Photovoltaic;
            node.cell_ready = true;
            node.refresh(&self.tx_on);
        }
    }

    fn predict_charge(&mut self, n: usize) {
        let restart = self.scenario.engine.restart_soc;
        let node = &mut self.nodes[n];
        node.charge_gen += 1;
        let net = node.harvest_w - node.load_w;
        let cap = node.store.capacity();
        let target = if net > 0.0 {
            if node.suspended {
                Some(restart * cap)
            } else if !node.store.is_full() {
                Some(cap)
            } else {
                None
            }
        } else if net < 0.0 && !node.store.is_empty() {
            Some(0.0)
        } else {
            None
        };
        let Some(dt) = target.and_then(|level| node.store.time_to_level(level, net)) else {
            return;
        };
        let guard = Guard::Charge(node.charge_gen);
        let when = self.now + dt;
        if when <= self.scenario.duration {
            self.schedule(when, Some(n), guard, Action::Charge);
        }
    }

    fn finish(mut self) -> RunOutput {
        let scenario = self.scenario;
        let nodes = std::mem::take(&mut self.nodes);
        RunOutput {
            metrics: Metrics {
                scenario_hash: scenario.hash.clone(),
                seed: self.seed,
                duration_s: scenario.duration,
                policy: scenario.policy.name().to_string(),
                events_processed: self.events_processed,
                nodes: nodes.iter().map(|n| (n.spec.id.clone(), n.metrics())).collect(),
                links: self.links,
                spatial: self.spatial,
            },
            trace: self.trace,
            storage: nodes.into_iter().map(|n| (n.spec.id, n.fsm.storage)).collect(),
        }
    }
}
