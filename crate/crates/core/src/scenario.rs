//! Scenario files: parsing, validation and resolution into SI values.
//!
//! A scenario is JSON5 text with sections `transmitters[]`, `nodes[]`,
//! `policy` and `engine`. Every dimensioned value carries a unit suffix.
//! Validation never stops at the first problem; it collects every
//! violation together with the config path that caused it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::channel::{BeamGeometry, LinkParams, TurbulenceModel, WaterPreset, WaterProperties};
use crate::energy_store::{EnergyStore, DEFAULT_CAP_RATED_VOLTAGE, DEFAULT_V_EMPTY, DEFAULT_V_FULL};
use crate::harvester::{self, CellMode, SolarCell};
use crate::node::{Command, LoadCatalog, LoadProfile, SensorId, DEFAULT_V_THRESHOLD};
use crate::policy::{DualWavelengthPlan, Policy, PowerSplit, TimeSwitchSchedule};
use crate::units::{parse_fraction, parse_quantity, Dimension};

pub const TANK_1M5: &str = include_str!("../scenarios/tank_1m5.json5");
pub const VERTICAL_SUPERCAP: &str = include_str!("../scenarios/vertical_supercap.json5");

/// Reference scenarios shipped with the crate.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "tank_1m5" => Some(TANK_1M5),
        "vertical_supercap" => Some(VERTICAL_SUPERCAP),
        _ => None,
    }
}

pub const BUNDLED_NAMES: [&str; 2] = ["tank_1m5", "vertical_supercap"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{} {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmitterSpec {
    pub id: String,
    pub position: [f64; 3],
    pub tx_power: f64,
    pub wavelength_nm: f64,
    pub water: WaterProperties,
    pub beam_radius: f64,
    pub divergence: f64,
    pub scintillation: f64,
    /// Intervals `[start, end)` during which the source is lit. Empty means always.
    pub windows: Vec<(f64, f64)>,
}

impl TransmitterSpec {
    pub fn is_on(&self, t: f64) -> bool {
        self.windows.is_empty() || self.windows.iter().any(|&(a, b)| t >= a && t < b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SensorSignal {
    Constant(f64),
    /// Piecewise-linear samples `(time, value)`, held flat outside the range.
    Replay(Vec<(f64, f64)>),
}

impl SensorSignal {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            SensorSignal::Constant(v) => *v,
            SensorSignal::Replay(points) => {
                let first = points[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return if t1 == t0 { v1 } else { v0 + (v1 - v0) * (t - t0) / (t1 - t0) };
                    }
                }
                points[points.len() - 1].1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorSpec {
    pub id: SensorId,
    pub kind: String,
    pub enabled: bool,
    pub signal: SensorSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UplinkSpec {
    pub rate: f64,
    pub load: LoadProfile,
    pub record_bits: u32,
    /// Fixed streaming time per send, replacing the per-record size.
    pub stream: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSpec {
    pub id: String,
    pub position: [f64; 3],
    pub cell: SolarCell,
    pub aperture_radius: f64,
    pub store: EnergyStore,
    pub v_threshold: f64,
    pub active_load: LoadProfile,
    pub sense_load: LoadProfile,
    pub sample_time: f64,
    pub sleep_power: f64,
    pub wake_interval: Option<f64>,
    pub sensors: Vec<SensorSpec>,
    pub commands: Vec<Command>,
    pub uplink: UplinkSpec,
    pub data_demand: Option<f64>,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineOptions {
    /// Turbulence coherence time; fades are redrawn on this grid.
    pub fading_slot: f64,
    /// Probability that a command frame arrives with one bit flipped.
    pub frame_error_rate: f64,
    /// State of charge at which a browned-out node under a link-level
    /// policy resumes operation.
    pub restart_soc: f64,
    pub wake_check_time: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { fading_slot: 1.0, frame_error_rate: 0.0, restart_soc: 0.1, wake_check_time: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub duration: f64,
    pub seed: Option<u64>,
    pub transmitters: Vec<TransmitterSpec>,
    pub nodes: Vec<NodeSpec>,
    pub policy: Policy,
    pub engine: EngineOptions,
    /// SHA-256 of the canonical (key-sorted) JSON form of the source.
    pub hash: String,
}

impl Scenario {
    /// Parses JSON5 text.
    pub fn parse_value(text: &str) -> Result<Value, ValidationReport> {
        json5::from_str::<Value>(text).map_err(|e| {
            let mut report = ValidationReport::default();
            report.push("", format!("scenario is not valid JSON5: {e}"));
            report
        })
    }

    pub fn from_text(text: &str) -> Result<Scenario, ValidationReport> {
        Scenario::from_value(&Scenario::parse_value(text)?)
    }

    pub fn from_value(value: &Value) -> Result<Scenario, ValidationReport> {
        let mut cx = Cx::default();
        let scenario = cx.scenario(value);
        if cx.report.is_empty() {
            Ok(scenario.expect("no violations implies a resolved scenario"))
        } else {
            cx.report.violations.sort();
            cx.report.violations.dedup();
            Err(cx.report)
        }
    }

    pub fn link(&self, tx: usize, node: usize) -> LinkParams {
        let t = &self.transmitters[tx];
        let n = &self.nodes[node];
        LinkParams {
            tx_power: t.tx_power,
            wavelength_nm: t.wavelength_nm,
            water: t.water,
            geometry: BeamGeometry {
                initial_radius: t.beam_radius,
                half_angle_divergence: t.divergence,
                receiver_aperture_radius: n.aperture_radius,
                distance: distance(t.position, n.position),
            },
            turbulence: TurbulenceModel {
                scintillation_index: t.scintillation,
                rng_stream_id: fading_stream_label(&t.id, &n.id),
            },
        }
    }
}

pub fn fading_stream_label(tx: &str, node: &str) -> String {
    format!("fading/{tx}/{node}")
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn canonical_hash(value: &Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical.
    let canonical = serde_json::to_string(value).expect("json values always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Replaces the value at a dotted path such as `policy.alpha` or
/// `nodes[0].cell.efficiency`, creating missing object keys on the way.
pub fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), String> {
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(format!("malformed parameter path `{path}`"));
    }
    for (i, seg) in segments.iter().enumerate() {
        let (key, indices) = split_indices(seg).ok_or_else(|| format!("malformed segment `{seg}` in `{path}`"))?;
        let obj = cur.as_object_mut().ok_or_else(|| format!("`{path}`: parent of `{key}` is not an object"))?;
        let last = i + 1 == segments.len() && indices.is_empty();
        if last {
            obj.insert(key.to_string(), new);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
        for (j, idx) in indices.iter().enumerate() {
            let arr = cur.as_array_mut().ok_or_else(|| format!("`{path}`: `{key}` is not an array"))?;
            let len = arr.len();
            cur = arr.get_mut(*idx).ok_or_else(|| format!("`{path}`: index {idx} out of range (len {len})"))?;
            if i + 1 == segments.len() && j + 1 == indices.len() {
                *cur = new;
                return Ok(());
            }
        }
    }
    unreachable!("loop returns on the final segment")
}

fn split_indices(seg: &str) -> Option<(&str, Vec<usize>)> {
    let (key, mut rest) = match seg.find('[') {
        Some(i) => (&seg[..i], &seg[i..]),
        None => (seg, ""),
    };
    let mut idx = Vec::new();
    while !rest.is_empty() {
        let close = rest.find(']')?;
        idx.push(rest.get(1..close)?.parse().ok()?);
        rest = &rest[close + 1..];
    }
    (!key.is_empty()).then_some((key, idx))
}

/// Parses a sweep value: JSON if it parses, otherwise a bare string.
pub fn sweep_value(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap_or_else(|_| Value::String(text.trim().to_string()))
}

// ---------------------------------------------------------------------------
// Resolution

#[derive(Default)]
struct Cx {
    report: ValidationReport,
}

/// An object being read; tracks which keys were consumed so leftovers can
/// be reported as unknown.
struct Obj<'v> {
    path: String,
    map: &'v Map<String, Value>,
    used: BTreeSet<&'static str>,
}

impl<'v> Obj<'v> {
    fn get(&mut self, key: &'static str) -> Option<&'v Value> {
        self.used.insert(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Cx {
    fn bad(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.report.push(path, message);
    }

    fn object<'v>(&mut self, path: &str, value: &'v Value) -> Option<Obj<'v>> {
        match value.as_object() {
            Some(map) => Some(Obj { path: path.to_string(), map, used: BTreeSet::new() }),
            None => {
                self.bad(path, "must be an object");
                None
            }
        }
    }

    fn finish(&mut self, obj: Obj<'_>) {
        for key in obj.map.keys() {
            if !obj.used.contains(key.as_str()) {
                self.bad(obj.at(key), "is not a recognised key");
            }
        }
    }

    fn quantity(&mut self, obj: &mut Obj<'_>, key: &'static str, dim: Dimension) -> Option<f64> {
        let path = obj.at(key);
        let value = obj.get(key)?;
        self.quantity_value(&path, value, dim)
    }

    fn quantity_value(&mut self, path: &str, value: &Value, dim: Dimension) -> Option<f64> {
        match value {
            Value::String(s) => match parse_quantity(s, dim) {
                Ok(v) if v.is_finite() => Some(v),
                Ok(_) => {
                    self.bad(path, "must be finite");
                    None
                }
                Err(e) => {
                    self.bad(path, format!("is not a valid {dim}: {e}"));
                    None
                }
            },
            Value::Number(_) => {
                self.bad(path, format!("needs an explicit unit suffix ({dim})"));
                None
            }
            _ => {
                self.bad(path, format!("must be a {dim} string such as \"1.5m\""));
                None
            }
        }
    }

    fn required<T>(&mut self, obj: &Obj<'_>, key: &str, got: Option<T>, present: bool) -> Option<T> {
        if got.is_none() && !present {
            self.bad(obj.at(key), "is required");
        }
        got
    }

    fn req_quantity(&mut self, obj: &mut Obj<'_>, key: &'static str, dim: Dimension) -> Option<f64> {
        let present = obj.map.get(key).is_some_and(|v| !v.is_null());
        let got = self.quantity(obj, key, dim);
        self.required(obj, key, got, present)
    }

    fn fraction(&mut self, obj: &mut Obj<'_>, key: &'static str) -> Option<f64> {
        let path = obj.at(key);
        match obj.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => match parse_fraction(s) {
                Ok(v) => Some(v),
                Err(e) => {
                    self.bad(path, format!("is not a number: {e}"));
                    None
                }
            },
            _ => {
                self.bad(path, "must be a number");
                None
            }
        }
    }

    fn string(&mut self, obj: &mut Obj<'_>, key: &'static str) -> Option<String> {
        let path = obj.at(key);
        match obj.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.bad(path, "must be a string");
                None
            }
        }
    }

    fn boolean(&mut self, obj: &mut Obj<'_>, key: &'static str) -> Option<bool> {
        let path = obj.at(key);
        match obj.get(key)? {
            Value::Bool(b) => Some(*b),
            _ => {
                self.bad(path, "must be true or false");
                None
            }
        }
    }

    fn array<'v>(&mut self, obj: &mut Obj<'v>, key: &'static str) -> Option<&'v Vec<Value>> {
        let path = obj.at(key);
        match obj.get(key)? {
            Value::Array(a) => Some(a),
            _ => {
                self.bad(path, "must be an array");
                None
            }
        }
    }

    fn position(&mut self, obj: &mut Obj<'_>) -> Option<[f64; 3]> {
        let path = obj.at("position");
        let Some(items) = self.array(obj, "position") else {
            self.bad(path, "is required");
            return None;
        };
        if items.len() != 3 {
            self.bad(&path, "must have exactly three coordinates");
            return None;
        }
        let mut out = [0.0; 3];
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.quantity_value(&format!("{path}[{i}]"), item, Dimension::Length) {
                Some(v) => out[i] = v,
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn scenario(&mut self, value: &Value) -> Option<Scenario> {
        let mut root = self.object("", value)?;

        let duration = self.req_quantity(&mut root, "duration", Dimension::Time);
        if let Some(d) = duration {
            if !(d > 0.0) {
                self.bad("duration", format!("must be positive (got {d} s)"));
            }
        }
        let seed = match root.get("seed") {
            None => None,
            Some(v) => match v.as_u64() {
                Some(s) => Some(s),
                None => {
                    self.bad("seed", "must be a non-negative 64-bit integer");
                    None
                }
            },
        };

        let waters = self.water_types(&mut root);
        let catalog = self.load_catalog(&mut root);
        let policy_path = "policy";
        let policy = match root.get("policy") {
            Some(v) => self.policy(policy_path, v),
            None => Some(Policy::Protocol),
        };
        let engine = match root.get("engine") {
            Some(v) => self.engine(v),
            None => Some(EngineOptions::default()),
        };

        let mut transmitters = Vec::new();
        if let Some(items) = self.array(&mut root, "transmitters") {
            for (i, item) in items.iter().enumerate() {
                if let Some(t) = self.transmitter(&format!("transmitters[{i}]"), item, &waters) {
                    transmitters.push(t);
                }
            }
        }
        let tx_count = root.map.get("transmitters").and_then(Value::as_array).map_or(0, Vec::len);

        let mut nodes = Vec::new();
        let node_items = self.array(&mut root, "nodes");
        if node_items.is_none() {
            self.bad("nodes", "is required");
        }
        for (i, item) in node_items.into_iter().flatten().enumerate() {
            if let Some(n) = self.node(&format!("nodes[{i}]"), item, &catalog, policy.as_ref()) {
                nodes.push(n);
            }
        }
        let node_count = root.map.get("nodes").and_then(Value::as_array).map_or(0, Vec::len);
        for section in ["transmitters", "nodes"] {
            let ids = root.map.get(section).and_then(Value::as_array).into_iter().flatten();
            self.unique_ids(section, ids.map(|item| item.get("id").and_then(Value::as_str)));
        }
        self.finish(root);

        // Only cross-check links once every entity resolved cleanly.
        if transmitters.len() == tx_count && nodes.len() == node_count {
            for (ti, t) in transmitters.iter().enumerate() {
                for (ni, n) in nodes.iter().enumerate() {
                    let d = distance(t.position, n.position);
                    if t.beam_radius + d * t.divergence.tan() <= 0.0 {
                        self.bad(
                            format!("transmitters[{ti}].beam_radius"),
                            format!("gives a zero-width beam at nodes[{ni}]"),
                        );
                    }
                }
            }
            if let Some(Policy::DualWavelength(plan)) = &policy {
                for (ti, t) in transmitters.iter().enumerate() {
                    if plan.classify(t.wavelength_nm).is_none() {
                        self.bad(
                            format!("transmitters[{ti}].wavelength"),
                            format!("{} nm matches neither plan wavelength", t.wavelength_nm),
                        );
                    }
                }
            }
        }

        Some(Scenario {
            duration: duration?,
            seed,
            transmitters,
            nodes,
            policy: policy?,
            engine: engine?,
            hash: canonical_hash(value),
        })
    }

    fn unique_ids<'a>(&mut self, path: &str, ids: impl Iterator<Item = Option<&'a str>>) {
        let mut seen = BTreeSet::new();
        for (i, id) in ids.enumerate() {
            let Some(id) = id else { continue };
            if !seen.insert(id) {
                self.bad(format!("{path}[{i}].id"), format!("duplicates id `{id}`"));
            }
        }
    }

    fn water_types(&mut self, root: &mut Obj<'_>) -> BTreeMap<String, Vec<(f64, WaterProperties)>> {
        let mut out = BTreeMap::new();
        let Some(value) = root.get("water") else { return out };
        let Some(obj) = self.object("water", value) else { return out };
        // Every key is a user-chosen water name.
        for (name, bands_value) in obj.map {
            let path = format!("water.{name}");
            let Some(bands) = bands_value.as_object() else {
                self.bad(&path, "must map wavelengths to coefficients");
                continue;
            };
            let mut table = Vec::new();
            for (wl, coeffs) in bands {
                let band_path = format!("{path}.{wl}");
                let nm = match parse_quantity(wl, Dimension::Wavelength) {
                    Ok(v) => v,
                    Err(e) => {
                        self.bad(&band_path, format!("key is not a wavelength: {e}"));
                        continue;
                    }
                };
                if let Some(w) = self.water_coeffs(&band_path, coeffs) {
                    table.push((nm, w));
                }
            }
            if table.is_empty() {
                self.bad(&path, "needs at least one wavelength band");
            }
            out.insert(name.clone(), table);
        }
        out
    }

    fn water_coeffs(&mut self, path: &str, value: &Value) -> Option<WaterProperties> {
        let mut obj = self.object(path, value)?;
        let a = self.req_quantity(&mut obj, "absorption", Dimension::Attenuation);
        let s = self.req_quantity(&mut obj, "scattering", Dimension::Attenuation);
        self.finish(obj);
        match WaterProperties::new(a?, s?) {
            Ok(w) => Some(w),
            Err(e) => {
                self.bad(path, e.to_string());
                None
            }
        }
    }

    fn load_catalog(&mut self, root: &mut Obj<'_>) -> LoadCatalog {
        let mut catalog = LoadCatalog::default();
        let Some(value) = root.get("load_profiles") else { return catalog };
        let Some(obj) = self.object("load_profiles", value) else { return catalog };
        for (name, spec) in obj.map {
            let path = format!("load_profiles.{name}");
            let Some(mut p) = self.object(&path, spec) else { continue };
            let v = self.req_quantity(&mut p, "supply", Dimension::Voltage);
            let i = self.req_quantity(&mut p, "current", Dimension::Current);
            let tp = self.quantity(&mut p, "throughput", Dimension::DataRate);
            self.finish(p);
            if let (Some(v), Some(i)) = (v, i) {
                if !(v * i > 0.0) {
                    self.bad(&path, "must draw positive power");
                    continue;
                }
                catalog.insert(LoadProfile::new(name, v, i, tp));
            }
        }
        catalog
    }

    fn profile(&mut self, obj: &mut Obj<'_>, key: &'static str, catalog: &LoadCatalog, default: &str) -> Option<LoadProfile> {
        let path = obj.at(key);
        let name = self.string(obj, key).unwrap_or_else(|| default.to_string());
        match catalog.get(&name) {
            Ok(p) => Some(p.clone()),
            Err(e) => {
                self.bad(path, e.to_string());
                None
            }
        }
    }

    fn policy(&mut self, path: &str, value: &Value) -> Option<Policy> {
        let mut obj = self.object(path, value)?;
        let kind = self.string(&mut obj, "kind");
        let policy = match kind.as_deref() {
            None => {
                self.bad(obj.at("kind"), "is required");
                None
            }
            Some("protocol") => Some(Policy::Protocol),
            Some("time_switching") => self.schedule(&mut obj).map(Policy::TimeSwitching),
            Some("spatial") => self.schedule(&mut obj).map(|schedule| Policy::Spatial { schedule }),
            Some("power_splitting") => {
                let alpha = self.fraction(&mut obj, "alpha");
                match alpha {
                    None => {
                        if !obj.map.contains_key("alpha") {
                            self.bad(obj.at("alpha"), "is required");
                        }
                        None
                    }
                    Some(a) => match PowerSplit::new(a) {
                        Ok(ps) => Some(Policy::PowerSplitting(ps)),
                        Err(_) => {
                            self.bad(obj.at("alpha"), format!("outside [0,1] (got {a})"));
                            None
                        }
                    },
                }
            }
            Some("dual_wavelength") => {
                let e = self.req_quantity(&mut obj, "energy_wavelength", Dimension::Wavelength);
                let d = self.req_quantity(&mut obj, "data_wavelength", Dimension::Wavelength);
                match DualWavelengthPlan::new(e?, d?) {
                    Ok(plan) => Some(Policy::DualWavelength(plan)),
                    Err(err) => {
                        self.bad(obj.at("data_wavelength"), err.to_string());
                        None
                    }
                }
            }
            Some(other) => {
                self.bad(
                    obj.at("kind"),
                    format!("`{other}` is not one of protocol, time_switching, power_splitting, spatial, dual_wavelength"),
                );
                None
            }
        };
        // Accept alpha on any policy kind so sweeps over it stay valid.
        if !matches!(policy, Some(Policy::PowerSplitting(_))) {
            if let Some(a) = self.fraction(&mut obj, "alpha") {
                if !(0.0..=1.0).contains(&a) {
                    self.bad(obj.at("alpha"), format!("outside [0,1] (got {a})"));
                }
            }
        }
        self.finish(obj);
        policy
    }

    fn schedule(&mut self, obj: &mut Obj<'_>) -> Option<TimeSwitchSchedule> {
        let t1 = self.req_quantity(obj, "t1", Dimension::Time);
        let t2 = self.req_quantity(obj, "t2", Dimension::Time);
        let offset = self.quantity(obj, "offset", Dimension::Time).unwrap_or(0.0);
        let (t1, t2) = (t1?, t2?);
        match TimeSwitchSchedule::new(t1, t2, offset) {
            Ok(s) => Some(s),
            Err(e) => {
                self.bad(obj.at("t1"), e.to_string());
                None
            }
        }
    }

    fn engine(&mut self, value: &Value) -> Option<EngineOptions> {
        let mut obj = self.object("engine", value)?;
        let d = EngineOptions::default();
        let fading_slot = self.quantity(&mut obj, "fading_slot", Dimension::Time).unwrap_or(d.fading_slot);
        if !(fading_slot > 0.0) {
            self.bad("engine.fading_slot", "must be positive");
        }
        let frame_error_rate = self.fraction(&mut obj, "frame_error_rate").unwrap_or(d.frame_error_rate);
        if !(0.0..=1.0).contains(&frame_error_rate) {
            self.bad("engine.frame_error_rate", "outside [0,1]");
        }
        let restart_soc = self.fraction(&mut obj, "restart_soc").unwrap_or(d.restart_soc);
        if !(restart_soc > 0.0 && restart_soc <= 1.0) {
            self.bad("engine.restart_soc", "outside (0,1]");
        }
        let wake_check_time =
            self.quantity(&mut obj, "wake_check_time", Dimension::Time).unwrap_or(d.wake_check_time);
        if !(wake_check_time >= 0.0) {
            self.bad("engine.wake_check_time", "must be non-negative");
        }
        self.finish(obj);
        Some(EngineOptions { fading_slot, frame_error_rate, restart_soc, wake_check_time })
    }

    fn transmitter(
        &mut self,
        path: &str,
        value: &Value,
        waters: &BTreeMap<String, Vec<(f64, WaterProperties)>>,
    ) -> Option<TransmitterSpec> {
        let mut obj = self.object(path, value)?;
        let id = self.string(&mut obj, "id");
        if id.is_none() {
            self.bad(obj.at("id"), "is required");
        }
        let position = self.position(&mut obj);
        let tx_power = self.req_quantity(&mut obj, "power", Dimension::Power);
        if tx_power.is_some_and(|p| p < 0.0) {
            self.bad(obj.at("power"), "must be non-negative");
        }
        let wavelength = self.req_quantity(&mut obj, "wavelength", Dimension::Wavelength);
        let water = match (obj.get("water"), wavelength) {
            (None, _) => {
                self.bad(obj.at("water"), "is required");
                None
            }
            (Some(Value::String(name)), Some(nm)) => {
                if let Some(table) = waters.get(name) {
                    table
                        .iter()
                        .min_by(|a, b| (a.0 - nm).abs().total_cmp(&(b.0 - nm).abs()))
                        .map(|(_, w)| *w)
                } else if let Some(preset) = WaterPreset::find(name) {
                    Some(preset.at(nm))
                } else {
                    self.bad(obj.at("water"), format!("unknown water type `{name}`"));
                    None
                }
            }
            (Some(Value::String(_)), None) => None,
            (Some(v), _) => self.water_coeffs(&obj.at("water"), v),
        };
        let beam_radius = self.quantity(&mut obj, "beam_radius", Dimension::Length).unwrap_or(0.0);
        let divergence = self.quantity(&mut obj, "divergence", Dimension::Angle).unwrap_or(0.0);
        if beam_radius < 0.0 {
            self.bad(obj.at("beam_radius"), "must be non-negative");
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&divergence) {
            self.bad(obj.at("divergence"), "must lie in [0, 90deg)");
        }
        let scintillation = self.fraction(&mut obj, "scintillation").unwrap_or(0.0);
        if !(scintillation >= 0.0) {
            self.bad(obj.at("scintillation"), format!("must be non-negative (got {scintillation})"));
        }
        let windows = self.windows(&mut obj);
        self.finish(obj);
        Some(TransmitterSpec {
            id: id?,
            position: position?,
            tx_power: tx_power?,
            wavelength_nm: wavelength?,
            water: water?,
            beam_radius,
            divergence,
            scintillation,
            windows: windows?,
        })
    }

    fn windows(&mut self, obj: &mut Obj<'_>) -> Option<Vec<(f64, f64)>> {
        let path = obj.at("on");
        let Some(items) = self.array(obj, "on") else { return Some(Vec::new()) };
        let mut out = Vec::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let p = format!("{path}[{i}]");
            let pair = item.as_array().filter(|a| a.len() == 2);
            let Some(pair) = pair else {
                self.bad(&p, "must be a [start, end] pair");
                ok = false;
                continue;
            };
            let a = self.quantity_value(&format!("{p}[0]"), &pair[0], Dimension::Time);
            let b = self.quantity_value(&format!("{p}[1]"), &pair[1], Dimension::Time);
            match (a, b) {
                (Some(a), Some(b)) if a >= 0.0 && b > a => out.push((a, b)),
                (Some(_), Some(_)) => {
                    self.bad(&p, "must satisfy 0 <= start < end");
                    ok = false;
                }
                _ => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn node(&mut self, path: &str, value: &Value, catalog: &LoadCatalog, top_policy: Option<&Policy>) -> Option<NodeSpec> {
        let mut obj = self.object(path, value)?;
        let id = self.string(&mut obj, "id");
        if id.is_none() {
            self.bad(obj.at("id"), "is required");
        }
        let position = self.position(&mut obj);
        let cell = match obj.get("cell") {
            Some(v) => self.cell(&join(path, "cell"), v),
            None => Some((SolarCell::default(), None)),
        };
        let store = match obj.get("store") {
            Some(v) => self.store(&join(path, "store"), v),
            None => {
                self.bad(obj.at("store"), "is required");
                None
            }
        };
        let v_threshold = self.quantity(&mut obj, "v_threshold", Dimension::Voltage).unwrap_or(DEFAULT_V_THRESHOLD);
        let active_load = self.profile(&mut obj, "active_load", catalog, "iot_10mhz");
        let sense_load = self.profile(&mut obj, "sense_load", catalog, "sense_and_save");
        let sample_time = self.quantity(&mut obj, "sample_time", Dimension::Time).unwrap_or(2.0);
        if sample_time < 0.0 {
            self.bad(obj.at("sample_time"), "must be non-negative");
        }
        let sleep_power = self.quantity(&mut obj, "sleep_power", Dimension::Power).unwrap_or(0.0);
        if sleep_power < 0.0 {
            self.bad(obj.at("sleep_power"), "must be non-negative");
        }
        let wake_interval = self.quantity(&mut obj, "wake_interval", Dimension::Time);
        if wake_interval.is_some_and(|w| !(w > 0.0)) {
            self.bad(obj.at("wake_interval"), "must be positive");
        }
        let sensors = self.sensors(&mut obj);
        let commands = self.commands(&mut obj);
        let uplink = match obj.get("uplink") {
            Some(v) => self.uplink(&join(path, "uplink"), v, catalog),
            None => Some(default_uplink(catalog)),
        };
        let data_demand = self.quantity(&mut obj, "data_demand", Dimension::DataRate);
        if data_demand.is_some_and(|d| d < 0.0) {
            self.bad(obj.at("data_demand"), "must be non-negative");
        }
        let policy = match obj.get("policy") {
            Some(v) => {
                let p = self.policy(&join(path, "policy"), v);
                if matches!(top_policy, Some(Policy::Spatial { .. })) || matches!(p, Some(Policy::Spatial { .. })) {
                    self.bad(join(path, "policy"), "cannot be overridden per node when spatial assignment is in use");
                }
                p
            }
            None => top_policy.cloned(),
        };
        self.finish(obj);

        let (cell, aperture) = cell?;
        let aperture_radius = aperture.unwrap_or_else(|| cell.equivalent_radius());
        Some(NodeSpec {
            id: id?,
            position: position?,
            cell,
            aperture_radius,
            store: store?,
            v_threshold,
            active_load: active_load?,
            sense_load: sense_load?,
            sample_time,
            sleep_power,
            wake_interval,
            sensors: sensors?,
            commands: commands?,
            uplink: uplink?,
            data_demand,
            policy: policy?,
        })
    }

    fn cell(&mut self, path: &str, value: &Value) -> Option<(SolarCell, Option<f64>)> {
        let mut obj = self.object(path, value)?;
        let d = SolarCell::default();
        let cell = SolarCell {
            area: self.quantity(&mut obj, "area", Dimension::Area).unwrap_or(d.area),
            conversion_efficiency: self.fraction(&mut obj, "efficiency").unwrap_or(d.conversion_efficiency),
            decode_bandwidth: self.quantity(&mut obj, "bandwidth", Dimension::Frequency).unwrap_or(d.decode_bandwidth),
            decode_rate: self.quantity(&mut obj, "rate", Dimension::DataRate).unwrap_or(harvester::DEFAULT_DECODE_RATE),
            sensitivity: self.quantity(&mut obj, "sensitivity", Dimension::Power).unwrap_or(d.sensitivity),
            mode: CellMode::Photovoltaic,
            switch_latency: self.quantity(&mut obj, "switch_latency", Dimension::Time).unwrap_or(d.switch_latency),
        };
        let aperture = self.quantity(&mut obj, "aperture_radius", Dimension::Length);
        if aperture.is_some_and(|r| !(r > 0.0)) {
            self.bad(obj.at("aperture_radius"), "must be positive");
        }
        self.finish(obj);
        if let Err(e) = cell.validate() {
            self.bad(path, e.to_string());
            return None;
        }
        Some((cell, aperture))
    }

    fn store(&mut self, path: &str, value: &Value) -> Option<EnergyStore> {
        let mut obj = self.object(path, value)?;
        let kind = self.string(&mut obj, "kind");
        let soc = self.fraction(&mut obj, "soc");
        let stored = self.quantity(&mut obj, "stored", Dimension::Energy);
        if soc.is_some() && stored.is_some() {
            self.bad(obj.at("soc"), "conflicts with `stored`; give one of them");
        }
        let store = match kind.as_deref() {
            Some("battery") => {
                let capacity = self.req_quantity(&mut obj, "capacity", Dimension::Energy);
                let v_empty = self.quantity(&mut obj, "v_empty", Dimension::Voltage).unwrap_or(DEFAULT_V_EMPTY);
                let v_full = self.quantity(&mut obj, "v_full", Dimension::Voltage).unwrap_or(DEFAULT_V_FULL);
                capacity.map(|c| EnergyStore::battery(c, 0.0, v_empty, v_full))
            }
            Some("supercapacitor") => {
                let c = self.req_quantity(&mut obj, "capacitance", Dimension::Capacitance);
                let v = self.quantity(&mut obj, "rated_voltage", Dimension::Voltage).unwrap_or(DEFAULT_CAP_RATED_VOLTAGE);
                c.map(|c| EnergyStore::supercapacitor(c, v, 0.0))
            }
            Some(other) => {
                self.bad(obj.at("kind"), format!("`{other}` is not battery or supercapacitor"));
                None
            }
            None => {
                self.bad(obj.at("kind"), "is required");
                None
            }
        };
        self.finish(obj);
        let mut store = match store? {
            Ok(s) => s,
            Err(e) => {
                self.bad(path, e.to_string());
                return None;
            }
        };
        let initial = match (soc, stored) {
            (Some(f), _) => f * store.capacity(),
            (None, Some(j)) => j,
            (None, None) => 0.0,
        };
        if !(0.0..=store.capacity()).contains(&initial) {
            self.bad(join(path, if soc.is_some() { "soc" } else { "stored" }), "is outside the store's capacity");
            return None;
        }
        store.set_stored(initial);
        Some(store)
    }

    fn sensors(&mut self, obj: &mut Obj<'_>) -> Option<Vec<SensorSpec>> {
        let path = obj.at("sensors");
        let Some(items) = self.array(obj, "sensors") else { return Some(Vec::new()) };
        let mut out = Vec::new();
        let mut ok = true;
        let mut ids = BTreeSet::new();
        for (i, item) in items.iter().enumerate() {
            let p = format!("{path}[{i}]");
            let Some(mut s) = self.object(&p, item) else {
                ok = false;
                continue;
            };
            let id = match s.get("id").map(|v| v.as_u64()) {
                Some(Some(id)) if id <= 255 => Some(id as u8),
                Some(_) => {
                    self.bad(s.at("id"), "must be an integer in 0..=255");
                    None
                }
                None => {
                    self.bad(s.at("id"), "is required");
                    None
                }
            };
            if let Some(id) = id {
                if !ids.insert(id) {
                    self.bad(s.at("id"), format!("duplicates sensor id {id}"));
                }
            }
            let kind = self.string(&mut s, "kind").unwrap_or_else(|| "generic".to_string());
            let enabled = self.boolean(&mut s, "enabled").unwrap_or(true);
            let signal = match s.get("value") {
                None => Some(SensorSignal::Constant(0.0)),
                Some(Value::Number(n)) => n.as_f64().map(SensorSignal::Constant),
                Some(Value::Array(points)) => self.replay(&s.at("value"), points),
                Some(_) => {
                    self.bad(s.at("value"), "must be a number or a list of [time, value] points");
                    None
                }
            };
            self.finish(s);
            match (id, signal) {
                (Some(id), Some(signal)) => out.push(SensorSpec { id, kind, enabled, signal }),
                _ => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn replay(&mut self, path: &str, points: &[Value]) -> Option<SensorSignal> {
        let mut out = Vec::new();
        for (i, point) in points.iter().enumerate() {
            let p = format!("{path}[{i}]");
            let pair = point.as_array().filter(|a| a.len() == 2);
            let Some(pair) = pair else {
                self.bad(&p, "must be a [time, value] pair");
                return None;
            };
            let t = self.quantity_value(&format!("{p}[0]"), &pair[0], Dimension::Time)?;
            let Some(v) = pair[1].as_f64() else {
                self.bad(format!("{p}[1]"), "must be a number");
                return None;
            };
            if out.last().is_some_and(|&(last, _)| t < last) {
                self.bad(&p, "times must be non-decreasing");
                return None;
            }
            out.push((t, v));
        }
        if out.is_empty() {
            self.bad(path, "needs at least one point");
            return None;
        }
        Some(SensorSignal::Replay(out))
    }

    fn commands(&mut self, obj: &mut Obj<'_>) -> Option<Vec<Command>> {
        let path = obj.at("commands");
        let Some(items) = self.array(obj, "commands") else { return Some(Vec::new()) };
        let mut out = Vec::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match item.as_str().and_then(Command::parse) {
                Some(c) => out.push(c),
                None => {
                    self.bad(
                        format!("{path}[{i}]"),
                        "must be SensorOn(id), SensorOff(id), SendData or Retransmit",
                    );
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn uplink(&mut self, path: &str, value: &Value, catalog: &LoadCatalog) -> Option<UplinkSpec> {
        let mut obj = self.object(path, value)?;
        let d = default_uplink(catalog);
        let rate = self.quantity(&mut obj, "rate", Dimension::DataRate).unwrap_or(d.rate);
        if !(rate > 0.0) {
            self.bad(obj.at("rate"), "must be positive");
        }
        let load = self.profile(&mut obj, "load", catalog, &d.load.name);
        let record_bits = match obj.get("record_bits") {
            None => Some(d.record_bits),
            Some(v) => match v.as_u64().filter(|b| *b > 0 && *b <= u64::from(u32::MAX)) {
                Some(b) => Some(b as u32),
                None => {
                    self.bad(obj.at("record_bits"), "must be a positive integer");
                    None
                }
            },
        };
        let stream = self.quantity(&mut obj, "stream", Dimension::Time);
        if stream.is_some_and(|s| !(s > 0.0)) {
            self.bad(obj.at("stream"), "must be positive");
        }
        self.finish(obj);
        Some(UplinkSpec { rate, load: load?, record_bits: record_bits?, stream })
    }
}

fn default_uplink(catalog: &LoadCatalog) -> UplinkSpec {
    let load = catalog.get("soc_3mhz").expect("built-in profile").clone();
    UplinkSpec { rate: load.throughput.unwrap_or(115.2e3), load, record_bits: 96, stream: None }
}
