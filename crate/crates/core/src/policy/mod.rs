//! Resource-allocation schemes the engine consults to decide, per node and
//! per instant, which optical power is harvested and which is decoded.

mod spatial;

use serde::Serialize;
use thiserror::Error;

use crate::harvester::CellMode;

pub use spatial::{assign_spatial, harvested_power, ReceiverNeeds, SpatialAssignment, SpatialError, TxRole};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("power split ratio {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("slot lengths must be non-negative with a positive sum (t1 = {t1}, t2 = {t2})")]
    BadSchedule { t1: f64, t2: f64 },
    #[error("energy and data wavelengths must differ (both {0} nm)")]
    SameWavelength(f64),
}

/// Periodic harvest (`t1`) / decode (`t2`) alternation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSwitchSchedule {
    t1: f64,
    t2: f64,
    phase_offset: f64,
}

impl TimeSwitchSchedule {
    pub fn new(t1: f64, t2: f64, phase_offset: f64) -> Result<Self, PolicyError> {
        if !(t1 >= 0.0 && t2 >= 0.0 && t1 + t2 > 0.0 && phase_offset.is_finite()) {
            return Err(PolicyError::BadSchedule { t1, t2 });
        }
        Ok(TimeSwitchSchedule { t1, t2, phase_offset })
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn period(&self) -> f64 {
        self.t1 + self.t2
    }

    /// Fraction of each period spent harvesting.
    pub fn duty_cycle(&self) -> f64 {
        self.t1 / self.period()
    }

    pub fn mode_at(&self, t: f64) -> CellMode {
        if self.t2 == 0.0 {
            return CellMode::Photovoltaic;
        }
        if self.t1 == 0.0 {
            return CellMode::Photoconductive;
        }
        let local = (t - self.phase_offset).rem_euclid(self.period());
        if local < self.t1 {
            CellMode::Photovoltaic
        } else {
            CellMode::Photoconductive
        }
    }

    /// First slot boundary strictly after `t`, with the mode that begins
    /// there. `None` for degenerate schedules that never switch.
    pub fn next_boundary(&self, t: f64) -> Option<(f64, CellMode)> {
        if self.t1 == 0.0 || self.t2 == 0.0 {
            return None;
        }
        let period = self.period();
        let k = ((t - self.phase_offset) / period).floor();
        // Boundaries are computed as offset + k*T (+ t1) rather than by
        // accumulation so they stay exact for representable slot lengths.
        [k - 1.0, k, k + 1.0]
            .into_iter()
            .flat_map(|k| {
                let start = self.phase_offset + k * period;
                [(start, CellMode::Photovoltaic), (start + self.t1, CellMode::Photoconductive)]
            })
            .find(|(time, _)| *time > t)
    }
}

/// Lossless beam splitter sending a fixed share to the harvester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSplit {
    alpha: f64,
}

impl PowerSplit {
    pub fn new(alpha: f64) -> Result<Self, PolicyError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(PowerSplit { alpha })
        } else {
            Err(PolicyError::AlphaOutOfRange(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(harvest, decode)` shares. The larger share is computed directly
    /// and the smaller one by subtraction, which is exact because the
    /// larger share is at least half of `incident`; the two therefore sum
    /// to `incident` with no rounding.
    pub fn split(&self, incident: f64) -> (f64, f64) {
        if self.alpha >= 0.5 {
            let harvest = self.alpha * incident;
            (harvest, incident - harvest)
        } else {
            let decode = (1.0 - self.alpha) * incident;
            (incident - decode, decode)
        }
    }
}

/// One wavelength powers the harvester, another carries data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualWavelengthPlan {
    pub energy_wavelength: f64,
    pub data_wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WavelengthRole {
    Energy,
    Data,
}

impl DualWavelengthPlan {
    /// Transmitters within this many nanometres of a plan wavelength belong to it.
    pub const MATCH_TOLERANCE_NM: f64 = 0.5;

    pub fn new(energy_wavelength: f64, data_wavelength: f64) -> Result<Self, PolicyError> {
        if (energy_wavelength - data_wavelength).abs() <= Self::MATCH_TOLERANCE_NM {
            return Err(PolicyError::SameWavelength(energy_wavelength));
        }
        Ok(DualWavelengthPlan { energy_wavelength, data_wavelength })
    }

    pub fn classify(&self, wavelength: f64) -> Option<WavelengthRole> {
        if (wavelength - self.energy_wavelength).abs() <= Self::MATCH_TOLERANCE_NM {
            Some(WavelengthRole::Energy)
        } else if (wavelength - self.data_wavelength).abs() <= Self::MATCH_TOLERANCE_NM {
            Some(WavelengthRole::Data)
        } else {
            None
        }
    }
}

/// The scheme a node operates under.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Wake/check/sense/receive/harvest protocol drives the cell mode.
    Protocol,
    TimeSwitching(TimeSwitchSchedule),
    PowerSplitting(PowerSplit),
    /// Transmitter roles from [`assign_spatial`]; receivers with a data
    /// link alternate on `schedule`, the rest harvest continuously.
    Spatial { schedule: TimeSwitchSchedule },
    DualWavelength(DualWavelengthPlan),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Protocol => "protocol",
            Policy::TimeSwitching(_) => "time_switching",
            Policy::PowerSplitting(_) => "power_splitting",
            Policy::Spatial { .. } => "spatial",
            Policy::DualWavelength(_) => "dual_wavelength",
        }
    }
}
