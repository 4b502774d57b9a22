//! Solar-cell receiver with two exclusive operating modes.
//!
//! In photovoltaic mode the cell sources power into the energy store; in
//! photoconductive mode it is reverse-biased and used as a photodetector.
//! A relay flips between the two and the cell is unusable while it settles.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Active area of a 55 mm x 70 mm cell.
pub const DEFAULT_AREA: f64 = 0.055 * 0.070;
pub const DEFAULT_BANDWIDTH: f64 = 30e3;
pub const DEFAULT_DECODE_RATE: f64 = 500e3;
pub const DEFAULT_SENSITIVITY: f64 = 1e-6;
pub const DEFAULT_SWITCH_LATENCY: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CellMode {
    Photovoltaic,
    Photoconductive,
}

impl fmt::Display for CellMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellMode::Photovoltaic => f.write_str("photovoltaic"),
            CellMode::Photoconductive => f.write_str("photoconductive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarvesterError {
    #[error("operation needs the cell in {needed} mode but it is {actual}")]
    WrongMode { needed: CellMode, actual: CellMode },
    #[error("invalid solar cell: {0}")]
    Invalid(String),
    #[error("incident power must be non-negative, got {0}")]
    NegativeIncident(f64),
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolarCell {
    pub area: f64,
    pub conversion_efficiency: f64,
    pub decode_bandwidth: f64,
    pub decode_rate: f64,
    pub sensitivity: f64,
    pub mode: CellMode,
    pub switch_latency: f64,
}

impl Default for SolarCell {
    fn default() -> Self {
        SolarCell {
            area: DEFAULT_AREA,
            conversion_efficiency: 0.2,
            decode_bandwidth: DEFAULT_BANDWIDTH,
            decode_rate: DEFAULT_DECODE_RATE,
            sensitivity: DEFAULT_SENSITIVITY,
            mode: CellMode::Photovoltaic,
            switch_latency: DEFAULT_SWITCH_LATENCY,
        }
    }
}

impl SolarCell {
    pub fn validate(&self) -> Result<(), HarvesterError> {
        let eta = self.conversion_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(HarvesterError::Invalid(format!("efficiency {eta} outside (0, 1]")));
        }
        if !(self.area > 0.0) {
            return Err(HarvesterError::Invalid(format!("area {} must be positive", self.area)));
        }
        if !(self.switch_latency >= 0.0) {
            return Err(HarvesterError::Invalid(format!(
                "switch latency {} must be non-negative",
                self.switch_latency
            )));
        }
        if !(self.decode_rate >= 0.0) || !(self.sensitivity >= 0.0) || !(self.decode_bandwidth >= 0.0) {
            return Err(HarvesterError::Invalid(
                "decode rate, bandwidth and sensitivity must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Radius of a disc with the same area as the cell.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area / std::f64::consts::PI).sqrt()
    }

    fn require(&self, needed: CellMode) -> Result<(), HarvesterError> {
        if self.mode == needed {
            Ok(())
        } else {
            Err(HarvesterError::WrongMode { needed, actual: self.mode })
        }
    }
}

/// Electrical power delivered from `incident` optical watts.
pub fn harvest_power(cell: &SolarCell, incident: f64) -> Result<f64, HarvesterError> {
    cell.require(CellMode::Photovoltaic)?;
    if !(incident >= 0.0) {
        return Err(HarvesterError::NegativeIncident(incident));
    }
    Ok(cell.conversion_efficiency * incident)
}

/// Bits delivered by a hard-threshold receiver: full rate at or above
/// `sensitivity`, nothing below it.
pub fn threshold_bits(rate: f64, sensitivity: f64, incident: f64, duration: f64) -> f64 {
    if incident >= sensitivity {
        rate * duration
    } else {
        0.0
    }
}

pub fn decode_throughput(cell: &SolarCell, incident: f64, duration: f64) -> Result<f64, HarvesterError> {
    cell.require(CellMode::Photoconductive)?;
    if !(duration >= 0.0) {
        return Err(HarvesterError::NegativeDuration(duration));
    }
    if !(incident >= 0.0) {
        return Err(HarvesterError::NegativeIncident(incident));
    }
    Ok(threshold_bits(cell.decode_rate, cell.sensitivity, incident, duration))
}

/// Flips the relay. Returns the reconfigured cell and the instant from
/// which it may be used again; switching to the current mode is a no-op.
pub fn switch_mode(cell: &SolarCell, target: CellMode, now: f64) -> (SolarCell, f64) {
    if cell.mode == target {
        return (cell.clone(), now);
    }
    let mut next = cell.clone();
    next.mode = target;
    (next, now + cell.switch_latency)
}
