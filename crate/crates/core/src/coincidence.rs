//! Coincidence probabilities from two-photon path amplitudes.
//!
//! For paths `k` with analyzer-projected amplitudes `a_k` and arrival times
//! `(t_u,k, t_l,k)` the detected rate is
//!
//! ```text
//! P = N ∫ dnu S(nu) | Σ_k a_k exp{i[(w_u0 + nu) t_u,k + (w_l0 - nu) t_l,k]} |²
//! ```
//!
//! Expanding the square, every cross term integrates to
//! `2 Re(a_j a_k* e^{iΦ_jk}) g(D_jk)` with `Φ_jk = w_u0 Δt_u + w_l0 Δt_l` and
//! `D_jk = Δt_u - Δt_l`, where `g` is the correlation envelope. Cross terms are
//! scaled by the source visibility. `N` puts the incoherent plateau at ±45°
//! analyzers at exactly 1/2.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{OpticsError, PathAmplitude};
use crate::spectral::{SpectralError, SpectralModel};
use crate::SPEED_OF_LIGHT;

/// Relative tolerance on `1/λ_u + 1/λ_l = 1/λ_p`.
pub const ENERGY_CONSERVATION_TOLERANCE: f64 = 1e-9;
/// Positions below this magnitude (m) count as "at the reference".
pub const PROTOCOL_TOLERANCE: f64 = 1e-12;
const CLAMP_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("plateau normalizer vanishes: no path survives the ±45° analyzers")]
    NormalizationFailure,
    #[error("coincidence probability {0} lies outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("factorized fringe law does not apply: {0}")]
    ProtocolViolation(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Photon-pair source as seen at the interferometer input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonSource {
    pub pump_wavelength: f64,
    pub center_wavelength_u: f64,
    pub center_wavelength_l: f64,
    pub spectral: SpectralModel,
    /// Preparation path offset Δx₀ (m).
    pub delta_x0: f64,
    pub visibility: f64,
}

impl BiphotonSource {
    pub fn new(
        pump_wavelength: f64,
        center_wavelength_u: f64,
        center_wavelength_l: f64,
        spectral: SpectralModel,
        delta_x0: f64,
        visibility: f64,
    ) -> Result<Self, CoincidenceError> {
        let source = Self {
            pump_wavelength,
            center_wavelength_u,
            center_wavelength_l,
            spectral,
            delta_x0,
            visibility,
        };
        source.validate()?;
        Ok(source)
    }

    /// Both photons at twice the pump wavelength.
    pub fn degenerate(
        pump_wavelength: f64,
        spectral: SpectralModel,
        visibility: f64,
    ) -> Result<Self, CoincidenceError> {
        let center = 2.0 * pump_wavelength;
        Self::new(pump_wavelength, center, center, spectral, 0.0, visibility)
    }

    /// Photons split symmetrically in frequency around half the pump
    /// frequency, with a wavelength difference `delta_lambda` quoted at the
    /// degenerate center (`Δf = c Δλ / λ²`). The upper photon is the bluer one.
    pub fn nondegenerate(
        pump_wavelength: f64,
        delta_lambda: f64,
        spectral: SpectralModel,
        visibility: f64,
    ) -> Result<Self, CoincidenceError> {
        let center = 2.0 * pump_wavelength;
        let delta_f = SPEED_OF_LIGHT * delta_lambda / (center * center);
        let half_pump = 0.5 * SPEED_OF_LIGHT / pump_wavelength;
        let f_u = half_pump + 0.5 * delta_f;
        let f_l = half_pump - 0.5 * delta_f;
        Self::new(
            pump_wavelength,
            SPEED_OF_LIGHT / f_u,
            SPEED_OF_LIGHT / f_l,
            spectral,
            0.0,
            visibility,
        )
    }

    pub fn with_delta_x0(mut self, delta_x0: f64) -> Self {
        self.delta_x0 = delta_x0;
        self
    }

    pub fn with_visibility(mut self, visibility: f64) -> Result<Self, CoincidenceError> {
        self.visibility = visibility;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CoincidenceError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(positive(self.pump_wavelength)
            && positive(self.center_wavelength_u)
            && positive(self.center_wavelength_l))
        {
            return Err(CoincidenceError::InvalidSource(
                "wavelengths must be finite and positive".into(),
            ));
        }
        let mismatch = (1.0 / self.center_wavelength_u + 1.0 / self.center_wavelength_l)
            * self.pump_wavelength
            - 1.0;
        if mismatch.abs() > ENERGY_CONSERVATION_TOLERANCE {
            return Err(CoincidenceError::InvalidSource(format!(
                "1/λ_u + 1/λ_l differs from 1/λ_p by {mismatch:e} (relative)"
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(CoincidenceError::InvalidSource(format!(
                "visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        if !self.delta_x0.is_finite() {
            return Err(CoincidenceError::InvalidSource("Δx₀ must be finite".into()));
        }
        Ok(())
    }

    pub fn omega_u(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.center_wavelength_u
    }

    pub fn omega_l(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.center_wavelength_l
    }

    /// `w_u0 - w_l0` (rad/s).
    pub fn delta_omega(&self) -> f64 {
        self.omega_u() - self.omega_l()
    }

    /// `|Δω| / 2π` (Hz).
    pub fn beat_frequency(&self) -> f64 {
        self.delta_omega().abs() / (2.0 * PI)
    }

    /// Single-photon center wavelength of the degenerate configuration.
    pub fn degenerate_wavelength(&self) -> f64 {
        2.0 * self.pump_wavelength
    }

    pub fn is_degenerate(&self) -> bool {
        (self.center_wavelength_u - self.center_wavelength_l).abs()
            <= 1e-12 * self.center_wavelength_u
    }
}

/// Linear analyzer angles (radians from H) in front of the two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSettings {
    pub theta1: f64,
    pub theta2: f64,
}

impl AnalyzerSettings {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }

    /// +45°/+45°.
    pub fn peak() -> Self {
        Self::new(FRAC_PI_4, FRAC_PI_4)
    }

    /// +45°/-45°.
    pub fn dip() -> Self {
        Self::new(FRAC_PI_4, -FRAC_PI_4)
    }

    pub fn for_sign(sign: FringeSign) -> Self {
        match sign {
            FringeSign::Peak => Self::peak(),
            FringeSign::Dip => Self::dip(),
        }
    }
}

/// Which of the ± fringe pair an analyzer combination selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FringeSign {
    Peak,
    Dip,
}

impl FringeSign {
    pub fn factor(self) -> f64 {
        match self {
            FringeSign::Peak => 1.0,
            FringeSign::Dip => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FringeSign::Peak => "peak",
            FringeSign::Dip => "dip",
        }
    }
}

/// How the detuning integral of each cross term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integration {
    #[default]
    ClosedForm,
    Quadrature,
}

fn cross_envelope(
    model: &SpectralModel,
    tau: f64,
    integration: Integration,
) -> Result<f64, CoincidenceError> {
    Ok(match integration {
        Integration::ClosedForm => model.correlation_envelope(tau),
        Integration::Quadrature => model.envelope_numeric(tau)?,
    })
}

/// Un-normalized detection probability (Born rule with visibility-scaled
/// cross terms).
pub fn raw_coincidence(
    paths: &[PathAmplitude],
    source: &BiphotonSource,
    analyzers: AnalyzerSettings,
    integration: Integration,
) -> Result<f64, CoincidenceError> {
    let w_u = source.omega_u();
    let w_l = source.omega_l();
    let amps: Vec<Complex64> = paths
        .iter()
        .map(|p| p.projected(analyzers.theta1, analyzers.theta2))
        .collect();
    let times: Vec<(f64, f64)> = paths.iter().map(|p| p.arrival_times()).collect();

    let diagonal: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let mut cross = 0.0;
    for j in 0..amps.len() {
        for k in (j + 1)..amps.len() {
            let overlap = amps[j] * amps[k].conj();
            if overlap == Complex64::new(0.0, 0.0) {
                continue;
            }
            let du = times[j].0 - times[k].0;
            let dl = times[j].1 - times[k].1;
            let phase = w_u * du + w_l * dl;
            let envelope = cross_envelope(&source.spectral, du - dl, integration)?;
            cross += 2.0 * (overlap * Complex64::from_polar(1.0, phase)).re * envelope;
        }
    }
    Ok(diagonal + source.visibility * cross)
}

/// Sum of single-path weights behind ±45° analyzers: the plateau level
/// before normalization.
pub fn plateau_level(paths: &[PathAmplitude]) -> f64 {
    paths
        .iter()
        .map(|p| p.projected(FRAC_PI_4, FRAC_PI_4).norm_sqr())
        .sum()
}

/// Coincidence probability with the closed-form envelope.
pub fn coincidence_probability(
    paths: &[PathAmplitude],
    source: &BiphotonSource,
    analyzers: AnalyzerSettings,
) -> Result<f64, CoincidenceError> {
    coincidence_probability_with(paths, source, analyzers, Integration::ClosedForm)
}

pub fn coincidence_probability_with(
    paths: &[PathAmplitude],
    source: &BiphotonSource,
    analyzers: AnalyzerSettings,
    integration: Integration,
) -> Result<f64, CoincidenceError> {
    let plateau = plateau_level(paths);
    if plateau.is_nan() || plateau <= 0.0 {
        return Err(CoincidenceError::NormalizationFailure);
    }
    let p = 0.5 / plateau * raw_coincidence(paths, source, analyzers, integration)?;
    if !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&p) {
        return Err(CoincidenceError::ProbabilityOutOfRange(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Factorized fringe law
/// `½[1 ± V f cos(Δω Δx₁/c) cos(2π/λ |Δx₂ - Δx₃|)]`.
///
/// Positions are optical path changes per arm (stage travel times the
/// geometry factor). `f` is the envelope at the total long-arm mismatch
/// `|2(Δx₁ - Δx₀) - Δx₂ - Δx₃| / c`, which is `g(2Δx₁/c)` on an M1 scan.
/// Valid only when one stage group is scanned at a time; a nondegenerate
/// source is accepted only on the M1 protocol with `Δx₀ = 0`.
pub fn analytic_probability(
    dx1: f64,
    dx2: f64,
    dx3: f64,
    source: &BiphotonSource,
    sign: FringeSign,
) -> Result<f64, CoincidenceError> {
    let active = |x: f64| x.abs() > PROTOCOL_TOLERANCE;
    if active(dx1) && (active(dx2) || active(dx3)) {
        return Err(CoincidenceError::ProtocolViolation(format!(
            "Δx₁ = {dx1:e} m and (Δx₂, Δx₃) = ({dx2:e}, {dx3:e}) m scanned together"
        )));
    }
    if !source.is_degenerate() && (active(dx2) || active(dx3) || active(source.delta_x0)) {
        return Err(CoincidenceError::ProtocolViolation(
            "nondegenerate source is only covered on the Δx₁ scan with Δx₀ = 0".into(),
        ));
    }
    let mismatch = (2.0 * (dx1 - source.delta_x0) - dx2 - dx3).abs() / SPEED_OF_LIGHT;
    let envelope = source.spectral.correlation_envelope(mismatch);
    let beat = (source.delta_omega() * dx1 / SPEED_OF_LIGHT).cos();
    let k = 2.0 * PI / source.degenerate_wavelength();
    let fringe = (k * (dx2 - dx3).abs()).cos();
    Ok(0.5 * (1.0 + sign.factor() * source.visibility * envelope * beat * fringe))
}

/// `(1 + V cos[2(θ₂ - θ₁)]) / (1 + V)`.
pub fn polarization_correlation(analyzers: AnalyzerSettings, visibility: f64) -> f64 {
    (1.0 + visibility * (2.0 * (analyzers.theta2 - analyzers.theta1)).cos()) / (1.0 + visibility)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterferenceReport {
    /// Long-arm mismatch (including source offsets) is inside the
    /// single-photon envelope.
    pub condition_i: bool,
    /// Mismatch between the two two-photon amplitudes is inside the
    /// two-photon coherence time.
    pub condition_ii: bool,
    /// Set because the monochromatic pump makes the two-photon coherence
    /// time unbounded, so `condition_ii` holds by construction.
    pub two_photon_coherence_unbounded: bool,
    /// Largest `|Δt_u - Δt_l|` over interfering path pairs (s).
    pub max_mismatch: f64,
}

pub fn check_interference_conditions(
    paths: &[PathAmplitude],
    source: &BiphotonSource,
) -> InterferenceReport {
    let mut max_mismatch: Option<f64> = None;
    for (j, a) in paths.iter().enumerate() {
        for b in &paths[j + 1..] {
            if a.ports != b.ports {
                continue;
            }
            let (ua, la) = a.arrival_times();
            let (ub, lb) = b.arrival_times();
            let d = ((ua - ub) - (la - lb)).abs();
            max_mismatch = Some(max_mismatch.map_or(d, |m: f64| m.max(d)));
        }
    }
    let support = source.spectral.support_time();
    InterferenceReport {
        condition_i: max_mismatch.is_some_and(|m| m < support),
        condition_ii: true,
        two_photon_coherence_unbounded: true,
        max_mismatch: max_mismatch.unwrap_or(f64::NAN),
    }
}
