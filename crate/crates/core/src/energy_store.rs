//! Battery and supercapacitor energy bookkeeping.
//!
//! Both stores are ideal constant-power integrators clamped to
//! `[0, capacity]`. They differ only in how stored energy maps to terminal
//! voltage.

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_V_EMPTY: f64 = 3.0;
pub const DEFAULT_V_FULL: f64 = 4.2;
pub const DEFAULT_CAP_RATED_VOLTAGE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("store never fills at net power {0} W")]
    NeverFull(f64),
    #[error("invalid energy store: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Battery {
    pub capacity: f64,
    pub stored: f64,
    pub v_empty: f64,
    pub v_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supercapacitor {
    pub capacitance: f64,
    pub rated_voltage: f64,
    pub stored: f64,
}

impl Supercapacitor {
    pub fn capacity(&self) -> f64 {
        0.5 * self.capacitance * self.rated_voltage * self.rated_voltage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyStore {
    Battery(Battery),
    Supercapacitor(Supercapacitor),
}

/// What one call to [`EnergyStore::integrate`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOutcome {
    /// `net_power * dt` before clamping.
    pub requested: f64,
    /// Signed change actually applied to `stored`.
    pub applied: f64,
}

impl IntegrateOutcome {
    /// Energy offered but not absorbed because the store was full.
    pub fn spilled(&self) -> f64 {
        (self.requested - self.applied).max(0.0)
    }

    /// Energy demanded but not delivered because the store was empty.
    pub fn unmet(&self) -> f64 {
        (self.applied - self.requested).max(0.0)
    }
}

impl EnergyStore {
    pub fn battery(capacity: f64, stored: f64, v_empty: f64, v_full: f64) -> Result<Self, StoreError> {
        let store = EnergyStore::Battery(Battery { capacity, stored, v_empty, v_full });
        store.validate()?;
        Ok(store)
    }

    pub fn supercapacitor(capacitance: f64, rated_voltage: f64, stored: f64) -> Result<Self, StoreError> {
        let store = EnergyStore::Supercapacitor(Supercapacitor { capacitance, rated_voltage, stored });
        store.validate()?;
        Ok(store)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        match self {
            EnergyStore::Battery(b) => {
                if !(b.capacity > 0.0) {
                    return Err(StoreError::Invalid(format!("capacity {} must be positive", b.capacity)));
                }
                if !(b.v_empty < b.v_full) {
                    return Err(StoreError::Invalid(format!(
                        "v_empty {} must be below v_full {}",
                        b.v_empty, b.v_full
                    )));
                }
            }
            EnergyStore::Supercapacitor(c) => {
                if !(c.capacitance > 0.0 && c.rated_voltage > 0.0) {
                    return Err(StoreError::Invalid(
                        "capacitance and rated voltage must be positive".into(),
                    ));
                }
            }
        }
        let stored = self.stored();
        if !(0.0..=self.capacity()).contains(&stored) {
            return Err(StoreError::Invalid(format!(
                "stored energy {stored} J outside [0, {}]",
                self.capacity()
            )));
        }
        Ok(())
    }

    pub fn capacity(&self) -> f64 {
        match self {
            EnergyStore::Battery(b) => b.capacity,
            EnergyStore::Supercapacitor(c) => c.capacity(),
        }
    }

    pub fn stored(&self) -> f64 {
        match self {
            EnergyStore::Battery(b) => b.stored,
            EnergyStore::Supercapacitor(c) => c.stored,
        }
    }

    fn stored_mut(&mut self) -> &mut f64 {
        match self {
            EnergyStore::Battery(b) => &mut b.stored,
            EnergyStore::Supercapacitor(c) => &mut c.stored,
        }
    }

    pub fn state_of_charge(&self) -> f64 {
        self.stored() / self.capacity()
    }

    pub fn is_full(&self) -> bool {
        self.stored() >= self.capacity()
    }

    pub fn is_empty(&self) -> bool {
        self.stored() <= 0.0
    }

    /// Sets the stored energy, clamped to the valid range. Returns the
    /// signed change.
    pub fn set_stored(&mut self, joules: f64) -> f64 {
        let cap = self.capacity();
        let slot = self.stored_mut();
        let before = *slot;
        *slot = joules.clamp(0.0, cap);
        *slot - before
    }

    /// Applies `net_power` for `dt` seconds with clamping.
    pub fn integrate(&mut self, net_power: f64, dt: f64) -> IntegrateOutcome {
        let requested = net_power * dt.max(0.0);
        let applied = self.set_stored(self.stored() + requested);
        IntegrateOutcome { requested, applied }
    }

    pub fn terminal_voltage(&self) -> f64 {
        match self {
            EnergyStore::Battery(b) => b.v_empty + (b.v_full - b.v_empty) * (b.stored / b.capacity),
            EnergyStore::Supercapacitor(c) => (2.0 * c.stored / c.capacitance).sqrt(),
        }
    }

    /// Seconds until full under constant positive `net_power`.
    pub fn time_to_full(&self, net_power: f64) -> Result<f64, StoreError> {
        if !(net_power > 0.0) {
            return Err(StoreError::NeverFull(net_power));
        }
        Ok((self.capacity() - self.stored()).max(0.0) / net_power)
    }

    /// Seconds until `stored` reaches `target` joules under constant
    /// `net_power`, if it ever does.
    pub fn time_to_level(&self, target: f64, net_power: f64) -> Option<f64> {
        let gap = target - self.stored();
        if gap == 0.0 {
            Some(0.0)
        } else if gap.signum() == net_power.signum() && net_power != 0.0 {
            Some(gap / net_power)
        } else {
            None
        }
    }
}
