//! Current-draw catalog for a fully awake device, keyed by enabled feature.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile {
    pub name: String,
    pub supply_voltage: f64,
    pub current: f64,
    pub throughput: Option<f64>,
}

impl LoadProfile {
    pub fn new(name: &str, supply_voltage: f64, current: f64, throughput: Option<f64>) -> Self {
        LoadProfile { name: name.to_string(), supply_voltage, current, throughput }
    }

    pub fn power(&self) -> f64 {
        self.supply_voltage * self.current
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown load profile `{0}`")]
pub struct UnknownProfile(pub String);

/// (name, supply V, current A, throughput bit/s)
const TABLE_ONE: &[(&str, f64, f64, Option<f64>)] = &[
    ("wifi_bluetooth", 3.7, 0.102, Some(500e3)),
    ("iot_10mhz", 3.7, 0.036, Some(500e3)),
    ("soc_3mhz", 3.7, 0.011, Some(115.2e3)),
    ("video_streaming", 5.0, 0.110, None),
    ("sense_and_save", 3.7, 0.007, None),
    ("video_wifi_bt", 5.0, 0.236, Some(500e3)),
];

/// Built-in profiles plus any scenario-defined additions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadCatalog {
    profiles: BTreeMap<String, LoadProfile>,
}

impl Default for LoadCatalog {
    fn default() -> Self {
        let profiles = TABLE_ONE
            .iter()
            .map(|&(name, v, i, tp)| (name.to_string(), LoadProfile::new(name, v, i, tp)))
            .collect();
        LoadCatalog { profiles }
    }
}

impl LoadCatalog {
    pub fn insert(&mut self, profile: LoadProfile) {
        self.profiles.insert(profile.name.clone(), profile);
    }

    pub fn get(&self, name: &str) -> Result<&LoadProfile, UnknownProfile> {
        self.profiles.get(name).ok_or_else(|| UnknownProfile(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

/// Power of a built-in profile.
pub fn load_power(profile_name: &str) -> Result<f64, UnknownProfile> {
    LoadCatalog::default().get(profile_name).map(LoadProfile::power)
}
