//! Biphoton spectral density and its Fourier-domain correlation envelope.
//!
//! The pump is treated as monochromatic, so the joint spectrum collapses onto
//! a single detuning variable `nu`: the upper photon sits at `w_u0 + nu` and the
//! lower one at `w_l0 - nu`. A [`SpectralModel`] is the normalized density
//! `S(nu)` of that detuning. Its cosine transform
//!
//! ```text
//! g(tau) = ∫ S(nu) cos(nu tau) dnu
//! ```
//!
//! is the envelope that multiplies every two-photon interference term.
//!
//! For the `SincSquared` kind (the type-II case) the two-photon temporal wave
//! function is rectangular with full width `T_w`, and `g` is the triangle
//! `max(0, 1 - |tau|/T_w)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fewest trapezoid intervals any quadrature starts from.
const MIN_INTERVALS: usize = 4096;
/// Largest grid the doubling loop may reach before giving up.
const MAX_INTERVALS: usize = 1 << 24;
/// Absolute change between successive doublings accepted as converged.
const DOUBLING_TOLERANCE: f64 = 1e-8;
/// Number of density oscillation periods kept inside the sinc² window;
/// everything outside is added analytically.
const SINC_WINDOW_PERIODS: f64 = 8192.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("correlation width must be finite and positive, got {0}")]
    InvalidWidth(f64),
    #[error("quadrature did not converge: last doubling changed the result by {change:e} at {intervals} intervals")]
    QuadratureNotConverged { change: f64, intervals: usize },
}

/// Shape family of the detuning density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralKind {
    /// `sinc²` density; triangular envelope of half-base `T_w`.
    SincSquared,
    /// Gaussian density; envelope `exp(-tau²/2σ²)` with `σ` the width.
    Gaussian,
    /// Flat density on `|nu| ≤ π/T_c`; envelope `sin(x)/x` with first zero at `T_c`.
    RectangularDensity,
}

/// A validated spectral model. The width is a time in seconds whose meaning
/// depends on [`SpectralKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    kind: SpectralKind,
    correlation_width: f64,
}

impl SpectralModel {
    pub fn new(kind: SpectralKind, correlation_width: f64) -> Result<Self, SpectralError> {
        if !(correlation_width.is_finite() && correlation_width > 0.0) {
            return Err(SpectralError::InvalidWidth(correlation_width));
        }
        Ok(Self {
            kind,
            correlation_width,
        })
    }

    pub fn sinc_squared(full_width: f64) -> Result<Self, SpectralError> {
        Self::new(SpectralKind::SincSquared, full_width)
    }

    pub fn gaussian(sigma_tau: f64) -> Result<Self, SpectralError> {
        Self::new(SpectralKind::Gaussian, sigma_tau)
    }

    pub fn rectangular(first_zero: f64) -> Result<Self, SpectralError> {
        Self::new(SpectralKind::RectangularDensity, first_zero)
    }

    /// Flat density given by its angular-frequency half-width `Δ`.
    pub fn rectangular_half_width(half_width: f64) -> Result<Self, SpectralError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(SpectralError::InvalidWidth(half_width));
        }
        Self::rectangular(PI / half_width)
    }

    pub fn kind(&self) -> SpectralKind {
        self.kind
    }

    pub fn correlation_width(&self) -> f64 {
        self.correlation_width
    }

    /// Half-width of the flat density (rad/s). Only meaningful for the
    /// rectangular kind.
    pub fn rectangular_half_width_value(&self) -> f64 {
        PI / self.correlation_width
    }

    /// Delay beyond which the envelope is treated as washed out.
    pub fn support_time(&self) -> f64 {
        match self.kind {
            SpectralKind::SincSquared => self.correlation_width,
            SpectralKind::Gaussian => 4.0 * self.correlation_width,
            SpectralKind::RectangularDensity => self.correlation_width,
        }
    }

    /// Normalized density `S(nu)` at detuning `nu` (rad/s).
    pub fn spectral_density(&self, nu: f64) -> f64 {
        let w = self.correlation_width;
        match self.kind {
            SpectralKind::SincSquared => {
                let s = sinc(0.5 * nu * w);
                w / (2.0 * PI) * s * s
            }
            SpectralKind::Gaussian => {
                let x = nu * w;
                w / (2.0 * PI).sqrt() * (-0.5 * x * x).exp()
            }
            SpectralKind::RectangularDensity => {
                let half = PI / w;
                if nu.abs() <= half {
                    0.5 / half
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form cosine transform of the density.
    pub fn correlation_envelope(&self, tau: f64) -> f64 {
        let w = self.correlation_width;
        match self.kind {
            SpectralKind::SincSquared => (1.0 - tau.abs() / w).max(0.0),
            SpectralKind::Gaussian => {
                let x = tau / w;
                (-0.5 * x * x).exp()
            }
            SpectralKind::RectangularDensity => sinc(PI * tau / w),
        }
    }

    /// Cosine transform by trapezoid quadrature with grid doubling.
    ///
    /// This never calls [`Self::correlation_envelope`]; it is the oracle the
    /// closed forms are checked against.
    pub fn envelope_numeric(&self, tau: f64) -> Result<f64, SpectralError> {
        let w = self.correlation_width;
        let tau = tau.abs();
        let integrand = |nu: f64| self.spectral_density(nu) * (nu * tau).cos();
        match self.kind {
            SpectralKind::SincSquared => {
                // The integrand is band-limited to w + tau, so a step below
                // π/(w + tau) samples it without aliasing.
                let window = 2.0 * PI * SINC_WINDOW_PERIODS / w;
                let step = PI / (w + tau);
                let intervals = intervals_for(2.0 * window / step);
                let inner = trapezoid_doubling(integrand, -window, window, intervals)?;
                Ok(inner + sinc_squared_tail(w, tau, window))
            }
            SpectralKind::Gaussian => {
                let window = 12.0 / w;
                let step = 2.0 * PI / (tau + 12.0 * w);
                let intervals = intervals_for(2.0 * window / step);
                trapezoid_doubling(integrand, -window, window, intervals)
            }
            SpectralKind::RectangularDensity => {
                let half = PI / w;
                trapezoid_doubling(integrand, -half, half, MIN_INTERVALS)
            }
        }
    }

    /// `∫ S(nu) dnu` by quadrature; equal to 1 for a valid model.
    pub fn density_integral(&self) -> Result<f64, SpectralError> {
        self.envelope_numeric(0.0)
    }
}

fn intervals_for(required: f64) -> usize {
    let required = required.ceil().max(MIN_INTERVALS as f64) as usize;
    required.next_power_of_two()
}

/// `sin(x)/x` with the removable singularity filled in.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Composite trapezoid on `[a, b]`, halving the step until two successive
/// estimates agree to [`DOUBLING_TOLERANCE`].
fn trapezoid_doubling<F>(f: F, a: f64, b: f64, intervals: usize) -> Result<f64, SpectralError>
where
    F: Fn(f64) -> f64,
{
    let mut n = intervals.max(1);
    let mut h = (b - a) / n as f64;
    let interior: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    let mut estimate = h * (0.5 * (f(a) + f(b)) + interior);
    loop {
        if n >= MAX_INTERVALS {
            return Err(SpectralError::QuadratureNotConverged {
                change: f64::NAN,
                intervals: n,
            });
        }
        let midpoints: f64 = (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum();
        let refined = 0.5 * estimate + 0.5 * h * midpoints;
        n *= 2;
        h *= 0.5;
        let change = (refined - estimate).abs();
        estimate = refined;
        if change <= DOUBLING_TOLERANCE {
            return Ok(estimate);
        }
        if n >= MAX_INTERVALS {
            return Err(SpectralError::QuadratureNotConverged {
                change,
                intervals: n,
            });
        }
    }
}

/// `∫_{|nu|>X} S(nu) cos(nu tau) dnu` for the sinc² density of width `w`.
///
/// Uses `sin²(nu w/2) = (1 - cos(nu w))/2` to split the tail into three
/// `∫ cos(b nu)/nu² dnu` pieces, each available through the sine integral.
fn sinc_squared_tail(w: f64, tau: f64, window: f64) -> f64 {
    let e = |b: f64| cosine_over_square_tail(b.abs(), window);
    2.0 / (PI * w) * (e(tau) - 0.5 * e(w + tau) - 0.5 * e(w - tau))
}

/// `∫_X^∞ cos(b nu) / nu² dnu` for `b ≥ 0`, `X > 0`.
fn cosine_over_square_tail(b: f64, x: f64) -> f64 {
    if b == 0.0 {
        return 1.0 / x;
    }
    let z = b * x;
    if z >= 40.0 {
        // π/2 - Si(z) = f(z) cos z + g(z) sin z with the asymptotic series
        // for the auxiliary functions; 1 - z f(z) is summed directly.
        let (one_minus_zf, zg) = auxiliary_series(z);
        (z.cos() * one_minus_zf - z.sin() * zg) / x
    } else {
        (z.cos() - z * (FRAC_PI_2 - sine_integral(z))) / x
    }
}

/// Returns `(1 - z f(z), z g(z))` from the asymptotic expansions of the
/// sine-integral auxiliary functions. Accurate to ~1e-17 for `z ≥ 40`.
fn auxiliary_series(z: f64) -> (f64, f64) {
    let inv2 = 1.0 / (z * z);
    // z f(z) = Σ (-1)^n (2n)! / z^{2n};   z g(z) = (1/z) Σ (-1)^n (2n+1)! / z^{2n}
    let mut one_minus_zf = 0.0;
    let mut zg = 0.0;
    let mut f_term = 1.0; // (2n)!/z^{2n}
    let mut g_term = 1.0; // (2n+1)!/z^{2n}
    let mut sign = 1.0;
    for n in 0..30 {
        if n > 0 {
            let k = 2.0 * n as f64;
            f_term *= (k - 1.0) * k * inv2;
            g_term *= k * (k + 1.0) * inv2;
            one_minus_zf -= sign * f_term;
        }
        zg += sign * g_term;
        if f_term < 1e-20 && g_term < 1e-20 {
            break;
        }
        sign = -sign;
    }
    (one_minus_zf, zg / z)
}

/// Sine integral `Si(z) = ∫_0^z sin(t)/t dt` by composite Simpson, for
/// moderate `z` (used below 40).
pub(crate) fn sine_integral(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let panels = ((z.abs() * 512.0).ceil() as usize).max(16);
    let panels = panels + panels % 2;
    let h = z / panels as f64;
    let mut acc = sinc(0.0) + sinc(z);
    for i in 1..panels {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * sinc(i as f64 * h);
    }
    acc * h / 3.0
}
