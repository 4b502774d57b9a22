//! Underwater optical propagation: exponential attenuation, geometric
//! capture of a diverging beam, and log-normal turbulence fading.
//!
//! All functions are pure. Randomness enters only through a caller-owned
//! RNG, so concurrent evaluation is safe as long as each worker owns its
//! stream.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("degenerate geometry: beam radius at the receiver is zero")]
    DegenerateGeometry,
}

fn non_negative(what: &'static str, value: f64) -> Result<f64, ChannelError> {
    // NaN fails this check as well.
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ChannelError::Negative { what, value })
    }
}

/// Attenuation coefficients of a water body at one wavelength.
///
/// Field naming follows the convention where the total extinction is the
/// sum of an absorption part and a scattering part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaterProperties {
    absorption_coeff: f64,
    scattering_coeff: f64,
    total_attenuation: f64,
}

impl WaterProperties {
    pub fn new(absorption_coeff: f64, scattering_coeff: f64) -> Result<Self, ChannelError> {
        let absorption_coeff = non_negative("absorption coefficient", absorption_coeff)?;
        let scattering_coeff = non_negative("scattering coefficient", scattering_coeff)?;
        Ok(WaterProperties {
            absorption_coeff,
            scattering_coeff,
            total_attenuation: absorption_coeff + scattering_coeff,
        })
    }

    pub fn absorption_coeff(&self) -> f64 {
        self.absorption_coeff
    }

    pub fn scattering_coeff(&self) -> f64 {
        self.scattering_coeff
    }

    /// Extinction coefficient in 1/m.
    pub fn total_attenuation(&self) -> f64 {
        self.total_attenuation
    }
}

/// A named water type with coefficients tabulated at a few wavelengths.
#[derive(Debug, Clone, Copy)]
pub struct WaterPreset {
    pub name: &'static str,
    /// (wavelength nm, absorption 1/m, scattering 1/m)
    pub bands: &'static [(f64, f64, f64)],
}

// Literature-typical values for the classic ocean water types in the
// blue/green window. The red entries add the pure-water absorption rise
// above 600 nm and a mildly reduced scattering term. These are modelling
// defaults, not measurements of any particular site.
pub const WATER_PRESETS: &[WaterPreset] = &[
    WaterPreset {
        name: "pure_sea",
        bands: &[(450.0, 0.053, 0.003), (520.0, 0.053, 0.003), (650.0, 0.353, 0.0024)],
    },
    WaterPreset {
        name: "clear_ocean",
        bands: &[(450.0, 0.114, 0.037), (520.0, 0.114, 0.037), (650.0, 0.414, 0.0296)],
    },
    WaterPreset {
        name: "coastal",
        bands: &[(450.0, 0.179, 0.219), (520.0, 0.179, 0.219), (650.0, 0.479, 0.1752)],
    },
    WaterPreset {
        name: "turbid_harbor",
        bands: &[(450.0, 0.366, 1.824), (520.0, 0.366, 1.824), (650.0, 0.666, 1.4592)],
    },
];

impl WaterPreset {
    pub fn find(name: &str) -> Option<&'static WaterPreset> {
        WATER_PRESETS.iter().find(|p| p.name == name)
    }

    /// Coefficients of the band nearest to `wavelength_nm`; ties go to the
    /// shorter wavelength.
    pub fn at(&self, wavelength_nm: f64) -> WaterProperties {
        let (_, a, s) = self
            .bands
            .iter()
            .copied()
            .min_by(|x, y| (x.0 - wavelength_nm).abs().total_cmp(&(y.0 - wavelength_nm).abs()))
            .expect("presets have at least one band");
        WaterProperties::new(a, s).expect("preset coefficients are non-negative")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamGeometry {
    pub initial_radius: f64,
    pub half_angle_divergence: f64,
    pub receiver_aperture_radius: f64,
    pub distance: f64,
}

impl BeamGeometry {
    /// Beam radius at the receiver plane, `w0 + z tan(theta)`.
    pub fn beam_radius(&self) -> f64 {
        self.initial_radius + self.distance * self.half_angle_divergence.tan()
    }

    fn check(&self) -> Result<(), ChannelError> {
        non_negative("initial beam radius", self.initial_radius)?;
        non_negative("divergence half-angle", self.half_angle_divergence)?;
        non_negative("receiver aperture radius", self.receiver_aperture_radius)?;
        non_negative("link distance", self.distance)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurbulenceModel {
    pub scintillation_index: f64,
    pub rng_stream_id: String,
}

impl TurbulenceModel {
    pub fn calm() -> Self {
        TurbulenceModel { scintillation_index: 0.0, rng_stream_id: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkParams {
    pub tx_power: f64,
    pub wavelength_nm: f64,
    pub water: WaterProperties,
    pub geometry: BeamGeometry,
    pub turbulence: TurbulenceModel,
}

impl LinkParams {
    /// Received power with the fading coefficient fixed at one.
    pub fn mean_power(&self) -> Result<f64, ChannelError> {
        let tx_power = non_negative("transmit power", self.tx_power)?;
        let capture = geometric_capture(&self.geometry)?;
        let through_water =
            attenuate(tx_power, self.water.total_attenuation(), self.geometry.distance)?;
        Ok(through_water * capture)
    }
}

/// Beer's-law decay `I0 exp(-alpha z)`.
pub fn attenuate(intensity_in: f64, alpha: f64, distance: f64) -> Result<f64, ChannelError> {
    let intensity_in = non_negative("intensity", intensity_in)?;
    let alpha = non_negative("attenuation coefficient", alpha)?;
    let distance = non_negative("distance", distance)?;
    Ok(intensity_in * (-alpha * distance).exp())
}

/// Fraction of a uniform (top-hat) beam disc that lands on a circular
/// aperture centred on the beam axis.
pub fn geometric_capture(geometry: &BeamGeometry) -> Result<f64, ChannelError> {
    geometry.check()?;
    let w = geometry.beam_radius();
    if w <= 0.0 {
        return Err(ChannelError::DegenerateGeometry);
    }
    if geometry.receiver_aperture_radius >= w {
        return Ok(1.0);
    }
    let ratio = geometry.receiver_aperture_radius / w;
    Ok(ratio * ratio)
}

/// Parameters `(mu, sigma)` of the underlying normal for a unit-mean
/// log-normal with the given scintillation index.
pub fn lognormal_params(scintillation_index: f64) -> (f64, f64) {
    let log_var = scintillation_index.ln_1p();
    (-0.5 * log_var, log_var.sqrt())
}

/// Draws one fading coefficient. Unit mean, variance equal to the
/// scintillation index, always strictly positive.
pub fn sample_fading<R: Rng + ?Sized>(
    model: &TurbulenceModel,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let s2 = non_negative("scintillation index", model.scintillation_index)?;
    if s2 == 0.0 {
        return Ok(1.0);
    }
    let (mu, sigma) = lognormal_params(s2);
    let dist = LogNormal::new(mu, sigma).expect("sigma is finite and positive");
    // exp() can underflow to zero for absurd draws; keep the coefficient positive.
    Ok(dist.sample(rng).max(f64::MIN_POSITIVE))
}

/// `tx_power * capture * exp(-alpha z) * fading` with one fresh fade.
pub fn received_power<R: Rng + ?Sized>(link: &LinkParams, rng: &mut R) -> Result<f64, ChannelError> {
    let mean = link.mean_power()?;
    Ok(mean * sample_fading(&link.turbulence, rng)?)
}
