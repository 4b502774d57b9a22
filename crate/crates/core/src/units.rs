//! Physical quantities with explicit unit suffixes.
//!
//! Scenario files spell every dimensioned value as a number followed by a
//! unit, e.g. `"840mWh"`, `"30kHz"`, `"1.5m"` or `"0.151/m"`. Values are
//! converted to SI base units on parse.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Length,
    Area,
    Time,
    Power,
    Energy,
    Frequency,
    DataRate,
    Voltage,
    Current,
    Capacitance,
    Attenuation,
    Angle,
    Wavelength,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Length => "length",
            Dimension::Area => "area",
            Dimension::Time => "time",
            Dimension::Power => "power",
            Dimension::Energy => "energy",
            Dimension::Frequency => "frequency",
            Dimension::DataRate => "data rate",
            Dimension::Voltage => "voltage",
            Dimension::Current => "current",
            Dimension::Capacitance => "capacitance",
            Dimension::Attenuation => "attenuation",
            Dimension::Angle => "angle",
            Dimension::Wavelength => "wavelength",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("empty quantity")]
    Empty,
    #[error("`{0}` has no numeric part")]
    NoNumber(String),
    #[error("`{input}` is missing a unit suffix (expected {expected})")]
    MissingUnit { input: String, expected: Dimension },
    #[error("dimensionless value has unexpected suffix `{0}`")]
    UnexpectedSuffix(String),
    #[error("unknown unit `{unit}` for {expected}")]
    UnknownUnit { unit: String, expected: Dimension },
}

// (suffix, scale to SI). Wavelengths stay in nanometres because they are
// used as labels, not in arithmetic.
fn table(dim: Dimension) -> &'static [(&'static str, f64)] {
    match dim {
        Dimension::Length => &[("km", 1e3), ("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6)],
        Dimension::Area => &[
            ("m2", 1.0),
            ("m^2", 1.0),
            ("cm2", 1e-4),
            ("cm^2", 1e-4),
            ("mm2", 1e-6),
            ("mm^2", 1e-6),
        ],
        Dimension::Time => &[
            ("h", 3600.0),
            ("min", 60.0),
            ("s", 1.0),
            ("ms", 1e-3),
            ("us", 1e-6),
        ],
        Dimension::Power => &[("kW", 1e3), ("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("nW", 1e-9)],
        Dimension::Energy => &[
            ("kJ", 1e3),
            ("J", 1.0),
            ("mJ", 1e-3),
            ("Wh", 3600.0),
            ("mWh", 3.6),
        ],
        Dimension::Frequency => &[("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0)],
        Dimension::DataRate => &[
            ("Gbit/s", 1e9),
            ("Mbit/s", 1e6),
            ("kbit/s", 1e3),
            ("bit/s", 1.0),
            ("Mbps", 1e6),
            ("kbps", 1e3),
            ("bps", 1.0),
        ],
        Dimension::Voltage => &[("kV", 1e3), ("V", 1.0), ("mV", 1e-3)],
        Dimension::Current => &[("A", 1.0), ("mA", 1e-3), ("uA", 1e-6)],
        Dimension::Capacitance => &[("F", 1.0), ("mF", 1e-3), ("uF", 1e-6)],
        Dimension::Attenuation => &[("/m", 1.0), ("1/m", 1.0), ("/km", 1e-3)],
        Dimension::Angle => &[("rad", 1.0), ("mrad", 1e-3), ("deg", std::f64::consts::PI / 180.0)],
        Dimension::Wavelength => &[("nm", 1.0), ("um", 1e3)],
    }
}

/// Splits `"12.5mWh"` into `("12.5", "mWh")`.
fn split_number(input: &str) -> (&str, &str) {
    let bytes = input.as_bytes();
    let mut end = 0;
    let mut seen_exp = false;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let sign_ok = (c == '+' || c == '-')
            && (end == 0 || matches!(bytes[end - 1] as char, 'e' | 'E'));
        let exp_ok = (c == 'e' || c == 'E')
            && !seen_exp
            && end > 0
            && bytes.get(end + 1).is_some_and(|n| {
                n.is_ascii_digit() || ((*n == b'-' || *n == b'+') && bytes.get(end + 2).is_some_and(u8::is_ascii_digit))
            });
        if c.is_ascii_digit() || c == '.' || sign_ok || exp_ok {
            seen_exp |= exp_ok;
            end += 1;
        } else {
            break;
        }
    }
    (&input[..end], input[end..].trim())
}

/// Parses a quantity string of the given dimension into SI units.
pub fn parse_quantity(input: &str, dim: Dimension) -> Result<f64, UnitError> {
    let input = input.trim();
    if input.is_empty() {
        return Err(UnitError::Empty);
    }
    let (num, unit) = split_number(input);
    let value: f64 = num.parse().map_err(|_| UnitError::NoNumber(input.to_string()))?;
    if unit.is_empty() {
        return Err(UnitError::MissingUnit { input: input.to_string(), expected: dim });
    }
    table(dim)
        .iter()
        .find(|(suffix, _)| *suffix == unit)
        .map(|(_, scale)| value * scale)
        .ok_or_else(|| UnitError::UnknownUnit { unit: unit.to_string(), expected: dim })
}

/// Parses a dimensionless fraction: a bare number or a percentage.
pub fn parse_fraction(input: &str) -> Result<f64, UnitError> {
    let input = input.trim();
    let (num, unit) = split_number(input);
    let value: f64 = num.parse().map_err(|_| UnitError::NoNumber(input.to_string()))?;
    match unit {
        "" => Ok(value),
        "%" => Ok(value / 100.0),
        other => Err(UnitError::UnexpectedSuffix(other.to_string())),
    }
}
