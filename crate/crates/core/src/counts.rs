//! Poissonian coincidence counting and the estimators that turn count
//! datasets back into visibilities, beat frequencies and envelope centers.
//!
//! Nonlinear fits use damped least squares (Levenberg-Marquardt) on
//! normalised coordinates, with analytic Jacobians and starting points from a
//! coarse grid search or a discrete spectrum. Parameter uncertainties come
//! from the inverse normal matrix scaled by the reduced χ².

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenarios::ScanResult;
use crate::SPEED_OF_LIGHT;

/// Smallest dataset any estimator accepts.
pub const MIN_RECORDS: usize = 10;
const ITERATION_BUDGET: usize = 500;
const SPECTRUM_SAMPLES: usize = 4096;
/// A triangle narrower than this many grid spacings is a single-bin outlier,
/// not a resolved feature.
const MIN_RESOLVED_SPACINGS: f64 = 2.0;
/// Detection threshold for free-position triangle features. Scanning apex
/// and width over pure Poisson noise routinely turns up 3-4σ bumps.
pub const DETECTION_SIGNIFICANCE: f64 = 5.0;
/// Fitted modulation must exceed this many standard errors to count as a beat.
pub const BEAT_SIGNIFICANCE: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountsError {
    #[error("invalid counting configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {got} records, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("no beat detected: {0}")]
    NoBeatDetected(String),
    #[error("feature out of window: {0}")]
    FeatureOutOfWindow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    /// Coincidence rate at P = 1/2 (Hz).
    pub plateau_rate: f64,
    /// Integration time per grid point (s).
    pub bin_duration: f64,
    /// Accidental coincidence rate (Hz).
    pub accidental_rate: f64,
    pub rng_seed: u64,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self {
            plateau_rate: 2000.0,
            bin_duration: 1.0,
            accidental_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl CountingConfig {
    pub fn new(
        plateau_rate: f64,
        bin_duration: f64,
        accidental_rate: f64,
        rng_seed: u64,
    ) -> Result<Self, CountsError> {
        let cfg = Self {
            plateau_rate,
            bin_duration,
            accidental_rate,
            rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CountsError> {
        if !(self.plateau_rate.is_finite() && self.plateau_rate > 0.0) {
            return Err(CountsError::InvalidConfig(format!(
                "plateau_rate must be > 0, got {}",
                self.plateau_rate
            )));
        }
        if !(self.bin_duration.is_finite() && self.bin_duration > 0.0) {
            return Err(CountsError::InvalidConfig(format!(
                "bin_duration must be > 0, got {}",
                self.bin_duration
            )));
        }
        if !(self.accidental_rate.is_finite() && self.accidental_rate >= 0.0) {
            return Err(CountsError::InvalidConfig(format!(
                "accidental_rate must be >= 0, got {}",
                self.accidental_rate
            )));
        }
        Ok(())
    }

    /// Expected coincidence rate (Hz) at probability `p`.
    pub fn rate(&self, p: f64) -> f64 {
        2.0 * self.plateau_rate * p + self.accidental_rate
    }

    /// Mean accidental counts per bin.
    pub fn accidental_counts(&self) -> f64 {
        self.accidental_rate * self.bin_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    /// Stage position (m) or analyzer angle (rad).
    pub position: f64,
    /// Hz.
    pub expected_rate: f64,
    pub counts: u64,
    /// `√counts`.
    pub uncertainty: f64,
}

impl CountRecord {
    pub fn new(position: f64, expected_rate: f64, counts: u64) -> Self {
        Self {
            position,
            expected_rate,
            counts,
            uncertainty: (counts as f64).sqrt(),
        }
    }
}

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive mean");
    dist.sample(rng) as u64
}

/// One Poisson draw per grid point, from a single stream seeded by
/// `cfg.rng_seed`.
pub fn sample_probabilities(
    positions: &[f64],
    probabilities: &[f64],
    cfg: &CountingConfig,
) -> Result<Vec<CountRecord>, CountsError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    Ok(positions
        .iter()
        .zip(probabilities)
        .map(|(&x, &p)| {
            let rate = cfg.rate(p);
            CountRecord::new(x, rate, poisson_draw(&mut rng, rate * cfg.bin_duration))
        })
        .collect())
}

pub fn sample_counts(
    scan: &ScanResult,
    cfg: &CountingConfig,
) -> Result<Vec<CountRecord>, CountsError> {
    sample_probabilities(&scan.positions, &scan.probabilities, cfg)
}

/// Weighted dataset handed to the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    /// Noiseless values with unit weights.
    pub fn exact(x: &[f64], y: &[f64]) -> Self {
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            sigma: vec![1.0; x.len()],
        }
    }

    pub fn from_scan(scan: &ScanResult) -> Self {
        Self::exact(&scan.positions, &scan.probabilities)
    }

    /// Sampled counts, with `σ = √max(counts, 1)`.
    pub fn from_counts(records: &[CountRecord]) -> Self {
        Self {
            x: records.iter().map(|r| r.position).collect(),
            y: records.iter().map(|r| r.counts as f64).collect(),
            sigma: records
                .iter()
                .map(|r| (r.counts.max(1) as f64).sqrt())
                .collect(),
        }
    }

    /// Expected counts per bin, noiseless.
    pub fn from_expected(records: &[CountRecord], bin_duration: f64) -> Self {
        let y: Vec<f64> = records
            .iter()
            .map(|r| r.expected_rate * bin_duration)
            .collect();
        let x: Vec<f64> = records.iter().map(|r| r.position).collect();
        Self::exact(&x, &y)
    }

    /// Removes a constant background (e.g. mean accidental counts).
    pub fn subtract_background(&self, level: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|y| y - level).collect(),
            sigma: self.sigma.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn check(&self, need: usize) -> Result<(), CountsError> {
        if self.len() < need.max(MIN_RECORDS) {
            return Err(CountsError::InsufficientData {
                got: self.len(),
                need: need.max(MIN_RECORDS),
            });
        }
        let finite = self.x.iter().chain(&self.y).all(|v| v.is_finite())
            && self.sigma.iter().all(|s| s.is_finite() && *s > 0.0);
        if !finite {
            return Err(CountsError::FitDiverged(
                "non-finite data or weights".into(),
            ));
        }
        Ok(())
    }

    /// Maps positions to [-1, 1] and values to unit scale.
    fn normalised(&self) -> Result<(Scaled, Scale), CountsError> {
        let (lo, hi) = self
            .x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        let ys = self.y.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        if hi <= lo || ys == 0.0 {
            return Err(CountsError::FitDiverged("degenerate data range".into()));
        }
        let scale = Scale {
            x_mid: 0.5 * (lo + hi),
            x_half: 0.5 * (hi - lo),
            y: ys,
        };
        let scaled = Scaled {
            u: self
                .x
                .iter()
                .map(|x| (x - scale.x_mid) / scale.x_half)
                .collect(),
            v: self.y.iter().map(|y| y / ys).collect(),
            s: self.sigma.iter().map(|s| s / ys).collect(),
        };
        Ok((scaled, scale))
    }
}

impl From<&[CountRecord]> for FitData {
    fn from(records: &[CountRecord]) -> Self {
        Self::from_counts(records)
    }
}

struct Scaled {
    u: Vec<f64>,
    v: Vec<f64>,
    s: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Scale {
    x_mid: f64,
    x_half: f64,
    y: f64,
}

impl Scale {
    fn position(&self, u: f64) -> f64 {
        self.x_mid + u * self.x_half
    }
}

struct Fit {
    params: Vec<f64>,
    covariance: DMatrix<f64>,
    reduced_chi2: f64,
}

impl Fit {
    fn sigma(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    /// Standard error of a scalar function with gradient `g`.
    fn propagate(&self, g: &[f64]) -> f64 {
        let g = DVector::from_column_slice(g);
        (g.transpose() * &self.covariance * &g)[(0, 0)]
            .max(0.0)
            .sqrt()
    }
}

fn chi2<F>(d: &Scaled, p: &[f64], model: &F) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let mut grad = vec![0.0; p.len()];
    d.u.iter()
        .zip(&d.v)
        .zip(&d.s)
        .map(|((&u, &v), &s)| ((v - model(u, p, &mut grad)) / s).powi(2))
        .sum()
}

fn covariance(jtj: &DMatrix<f64>, chi2: f64, dof: usize) -> Result<DMatrix<f64>, CountsError> {
    let inv = jtj
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| CountsError::FitDiverged("singular normal matrix".into()))?;
    Ok(inv * (chi2 / dof.max(1) as f64))
}

/// Damped least squares. `model(u, params, grad)` returns the model value and
/// writes ∂f/∂params into `grad`; it may return NaN to reject a parameter set.
fn levenberg_marquardt<F>(d: &Scaled, init: Vec<f64>, model: F) -> Result<Fit, CountsError>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = init.len();
    let m = d.u.len();
    let mut p = init;
    let mut grad = vec![0.0; n];
    let mut current = chi2(d, &p, &model);
    if !current.is_finite() {
        return Err(CountsError::FitDiverged(
            "initial residual is not finite".into(),
        ));
    }
    let initial = current;
    let mut lambda = 1e-3;
    let mut accepted = 0usize;
    let normal = |p: &[f64], grad: &mut Vec<f64>| {
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for ((&u, &v), &s) in d.u.iter().zip(&d.v).zip(&d.s) {
            let f = model(u, p, grad);
            let r = (v - f) / s;
            for a in 0..n {
                let ja = grad[a] / s;
                jtr[a] += ja * r;
                for b in 0..=a {
                    jtj[(a, b)] += ja * grad[b] / s;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[(b, a)] = jtj[(a, b)];
            }
        }
        (jtj, jtr)
    };

    let (mut jtj, mut jtr) = normal(&p, &mut grad);
    for _ in 0..ITERATION_BUDGET {
        if current <= 1e-30 * m as f64 {
            break;
        }
        let mut damped = jtj.clone();
        for a in 0..n {
            damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let value = chi2(d, &trial, &model);
        if value.is_finite() && value < current {
            let small = step
                .iter()
                .zip(&trial)
                .all(|(s, t)| s.abs() <= 1e-12 * (t.abs() + 1e-9));
            let relative = (current - value) / current;
            p = trial;
            current = value;
            accepted += 1;
            lambda = (lambda / 10.0).max(1e-15);
            (jtj, jtr) = normal(&p, &mut grad);
            if small || relative < 1e-15 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    let gradient = jtr.amax();
    if accepted == 0 && gradient > 1e-8 * initial.max(1.0) {
        return Err(CountsError::FitDiverged(format!(
            "residual did not decrease from {initial:e} within {ITERATION_BUDGET} iterations"
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(CountsError::FitDiverged("non-finite parameters".into()));
    }
    let dof = m.saturating_sub(n);
    Ok(Fit {
        covariance: covariance(&jtj, current, dof)?,
        reduced_chi2: current / dof.max(1) as f64,
        params: p,
    })
}

/// Weighted linear least squares for `Σ c_j basis_j(u)`.
fn linear_fit(d: &Scaled, basis: &dyn Fn(f64, &mut [f64]), n: usize) -> Result<Fit, CountsError> {
    let mut jtj = DMatrix::<f64>::zeros(n, n);
    let mut jtv = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; n];
    for ((&u, &v), &s) in d.u.iter().zip(&d.v).zip(&d.s) {
        basis(u, &mut row);
        let w = 1.0 / (s * s);
        for a in 0..n {
            jtv[a] += w * row[a] * v;
            for b in 0..n {
                jtj[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let coeffs = jtj
        .clone()
        .cholesky()
        .map(|c| c.solve(&jtv))
        .ok_or_else(|| CountsError::FitDiverged("singular linear system".into()))?;
    let params: Vec<f64> = coeffs.iter().copied().collect();
    let mut total = 0.0;
    for ((&u, &v), &s) in d.u.iter().zip(&d.v).zip(&d.s) {
        basis(u, &mut row);
        let f: f64 = row.iter().zip(&params).map(|(a, b)| a * b).sum();
        total += ((v - f) / s).powi(2);
    }
    let dof = d.u.len().saturating_sub(n);
    Ok(Fit {
        covariance: covariance(&jtj, total, dof)?,
        reduced_chi2: total / dof.max(1) as f64,
        params,
    })
}

/// Sign with `side(0) = 0`.
fn side(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.signum()
    }
}

fn triangle(u: f64, c: f64, w: f64) -> f64 {
    (1.0 - (u - c).abs() / w).max(0.0)
}

/// `p + a·max(0, 1 - |u-c|/w)`; the apex kink takes a zero subgradient in `c`.
fn triangle_model(u: f64, q: &[f64], g: &mut [f64]) -> f64 {
    let (p, a, c, w) = (q[0], q[1], q[2], q[3]);
    if w <= 0.0 {
        return f64::NAN;
    }
    let t = triangle(u, c, w);
    g[0] = 1.0;
    g[1] = t;
    if t > 0.0 {
        let dist = u - c;
        g[2] = a * side(dist) / w;
        g[3] = a * dist.abs() / (w * w);
    } else {
        g[2] = 0.0;
        g[3] = 0.0;
    }
    p + a * t
}

/// `p + A cos(ku) + B sin(ku)`.
fn sinusoid_model(u: f64, q: &[f64], g: &mut [f64]) -> f64 {
    let (s, c) = (q[3] * u).sin_cos();
    g[0] = 1.0;
    g[1] = c;
    g[2] = s;
    g[3] = (-q[1] * s + q[2] * c) * u;
    q[0] + q[1] * c + q[2] * s
}

/// `p + a·tri((u-c)/w)·cos(ku + φ)`.
fn beat_model(u: f64, q: &[f64], g: &mut [f64]) -> f64 {
    let (p, a, c, w, k, phi) = (q[0], q[1], q[2], q[3], q[4], q[5]);
    if w <= 0.0 {
        return f64::NAN;
    }
    let e = triangle(u, c, w);
    let (sn, cs) = (k * u + phi).sin_cos();
    g[0] = 1.0;
    g[1] = e * cs;
    if e > 0.0 {
        let dist = u - c;
        g[2] = a * cs * side(dist) / w;
        g[3] = a * cs * dist.abs() / (w * w);
    } else {
        g[2] = 0.0;
        g[3] = 0.0;
    }
    g[4] = -a * e * sn * u;
    g[5] = -a * e * sn;
    p + a * e * cs
}

/// Mean of the outermost tenth of points on each side.
fn edge_level(d: &Scaled) -> f64 {
    let mut idx: Vec<usize> = (0..d.u.len()).collect();
    idx.sort_by(|&a, &b| d.u[a].total_cmp(&d.u[b]));
    let k = (d.u.len() / 10).max(1);
    let edges: Vec<f64> = idx[..k]
        .iter()
        .chain(&idx[idx.len() - k..])
        .map(|&i| d.v[i])
        .collect();
    edges.iter().sum::<f64>() / edges.len() as f64
}

fn min_spacing(d: &Scaled) -> f64 {
    let mut u = d.u.clone();
    u.sort_by(f64::total_cmp);
    u.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Discrete power spectrum of `values` over `[k_lo, k_hi]`; returns the
/// sample grid, the power, and the index of the maximum.
fn spectrum(u: &[f64], values: &[f64], k_lo: f64, k_hi: f64) -> (Vec<f64>, Vec<f64>, usize) {
    let ks: Vec<f64> = (0..SPECTRUM_SAMPLES)
        .map(|i| k_lo + (k_hi - k_lo) * i as f64 / (SPECTRUM_SAMPLES - 1) as f64)
        .collect();
    let power: Vec<f64> = ks
        .par_iter()
        .map(|&k| {
            let (re, im) = u.iter().zip(values).fold((0.0, 0.0), |(re, im), (&x, &r)| {
                let (s, c) = (k * x).sin_cos();
                (re + r * c, im + r * s)
            });
            re * re + im * im
        })
        .collect();
    let best = power
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > power[b] { i } else { b });
    (ks, power, best)
}

fn triangle_init(d: &Scaled) -> Result<Vec<f64>, CountsError> {
    let du = min_spacing(d);
    let widths: Vec<f64> = (0..24)
        .map(|i| 1.5 * du * (2.0 / (1.5 * du)).powf(i as f64 / 23.0))
        .collect();
    let mut best = (f64::INFINITY, vec![0.0; 4]);
    for &c in &d.u {
        for &w in &widths {
            // Two-parameter weighted linear fit of (p, a) at fixed apex and width.
            let (mut s00, mut s01, mut s11, mut b0, mut b1, mut vv) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for ((&u, &v), &s) in d.u.iter().zip(&d.v).zip(&d.s) {
                let t = triangle(u, c, w);
                let q = 1.0 / (s * s);
                s00 += q;
                s01 += q * t;
                s11 += q * t * t;
                b0 += q * v;
                b1 += q * t * v;
                vv += q * v * v;
            }
            let det = s00 * s11 - s01 * s01;
            if det.abs() < 1e-300 {
                continue;
            }
            let p = (b0 * s11 - b1 * s01) / det;
            let a = (s00 * b1 - s01 * b0) / det;
            let residual = vv - p * b0 - a * b1;
            if residual < best.0 {
                best = (residual, vec![p, a, c, w]);
            }
        }
    }
    if best.0.is_finite() {
        Ok(best.1)
    } else {
        Err(CountsError::FitDiverged(
            "triangle grid search found no candidate".into(),
        ))
    }
}

/// Triangle amplitude clears the detection threshold with a usable error.
fn significant(fit: &Fit) -> bool {
    let (a, s) = (fit.params[1].abs(), fit.sigma(1));
    if s == 0.0 {
        return fit.reduced_chi2 < 1e-20 && a > 0.0;
    }
    s.is_finite() && a >= DETECTION_SIGNIFICANCE * s
}

fn triangle_fit(d: &Scaled) -> Result<Fit, CountsError> {
    let init = triangle_init(d)?;
    levenberg_marquardt(d, init, triangle_model)
}

/// Visibility models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityModel {
    /// Triangle on a flat plateau; `V = |amplitude| / plateau`.
    TrianglePeakDip,
    /// Single-frequency fringe; `V = (max - min)/(max + min)`.
    Sinusoid,
    /// `p[1 + V cos 2(θ - θ₀)]` over analyzer angle in radians.
    PolarizationCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    pub model: VisibilityModel,
    pub visibility: f64,
    pub sigma: f64,
    /// Fitted reference level in data units.
    pub plateau: f64,
    /// Signed feature amplitude in data units.
    pub amplitude: f64,
    pub reduced_chi2: f64,
}

pub fn estimate_visibility(
    data: &FitData,
    model: VisibilityModel,
) -> Result<VisibilityEstimate, CountsError> {
    data.check(MIN_RECORDS)?;
    let (d, scale) = data.normalised()?;
    let (fit, amplitude_index) = match model {
        VisibilityModel::TrianglePeakDip => {
            let fit = triangle_fit(&d)?;
            if fit.params[3] < MIN_RESOLVED_SPACINGS * min_spacing(&d) {
                return Err(CountsError::FitDiverged(
                    "triangle collapsed below the grid resolution".into(),
                ));
            }
            if !significant(&fit) {
                return Err(CountsError::FitDiverged(format!(
                    "no feature above {DETECTION_SIGNIFICANCE}σ"
                )));
            }
            (fit, None)
        }
        VisibilityModel::Sinusoid => (sinusoid_fit(&d)?, Some(())),
        VisibilityModel::PolarizationCurve => {
            // Angles are absolute, so fit in the unscaled abscissa.
            let d = Scaled {
                u: data.x.clone(),
                v: d.v,
                s: d.s,
            };
            let fit = linear_fit(
                &d,
                &|u, row| {
                    row[0] = 1.0;
                    row[1] = (2.0 * u).cos();
                    row[2] = (2.0 * u).sin();
                },
                3,
            )?;
            (fit, Some(()))
        }
    };
    let q = &fit.params;
    let p = q[0];
    if p <= 0.0 {
        return Err(CountsError::FitDiverged(format!(
            "fitted plateau {p:e} is not positive"
        )));
    }
    let (visibility, gradient, amplitude) = match amplitude_index {
        None => {
            let a = q[1];
            let mut g = vec![0.0; q.len()];
            g[0] = -a.abs() / (p * p);
            g[1] = a.signum() / p;
            (a.abs() / p, g, a)
        }
        Some(()) => {
            let r = q[1].hypot(q[2]);
            let mut g = vec![0.0; q.len()];
            g[0] = -r / (p * p);
            if r > 0.0 {
                g[1] = q[1] / (p * r);
                g[2] = q[2] / (p * r);
            }
            (r / p, g, r)
        }
    };
    Ok(VisibilityEstimate {
        model,
        visibility,
        sigma: fit.propagate(&gradient),
        plateau: p * scale.y,
        amplitude: amplitude * scale.y,
        reduced_chi2: fit.reduced_chi2,
    })
}

fn sinusoid_fit(d: &Scaled) -> Result<Fit, CountsError> {
    let du = min_spacing(d);
    let level = d.v.iter().sum::<f64>() / d.v.len() as f64;
    let residual: Vec<f64> = d.v.iter().map(|v| v - level).collect();
    let (ks, _, best) = spectrum(&d.u, &residual, PI / 2.0, PI / du);
    let k0 = ks[best];
    let lin = linear_fit(
        d,
        &|u, row| {
            row[0] = 1.0;
            row[1] = (k0 * u).cos();
            row[2] = (k0 * u).sin();
        },
        3,
    )?;
    let init = vec![lin.params[0], lin.params[1], lin.params[2], k0];
    levenberg_marquardt(d, init, sinusoid_model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodEstimate {
    /// Spatial (or angular) period in the position unit.
    pub period: f64,
    pub sigma: f64,
    pub visibility: f64,
    pub sigma_visibility: f64,
}

/// Fringe period from the sinusoid model.
pub fn estimate_period(data: &FitData) -> Result<PeriodEstimate, CountsError> {
    data.check(MIN_RECORDS)?;
    let (d, scale) = data.normalised()?;
    let fit = sinusoid_fit(&d)?;
    let v = estimate_visibility(data, VisibilityModel::Sinusoid)?;
    let k = fit.params[3].abs() / scale.x_half;
    let period = 2.0 * PI / k;
    Ok(PeriodEstimate {
        period,
        sigma: period * fit.sigma(3) / fit.params[3].abs(),
        visibility: v.visibility,
        sigma_visibility: v.sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeatEstimate {
    /// Hz.
    pub delta_f: f64,
    pub sigma_delta_f: f64,
    /// m.
    pub delta_lambda: f64,
    pub sigma_delta_lambda: f64,
    /// Spatial beat period (m).
    pub period: f64,
    /// Modulation depth relative to the plateau.
    pub modulation: f64,
    pub sigma_modulation: f64,
    pub envelope_center: f64,
    pub envelope_half_width: f64,
}

/// Fits `envelope × cosine` and converts the spatial period `Λ` to
/// `Δf = c/Λ` and `Δλ = λ²Δf/c`.
pub fn estimate_beat_frequency(
    data: &FitData,
    center_wavelength: f64,
) -> Result<BeatEstimate, CountsError> {
    data.check(MIN_RECORDS)?;
    if !(center_wavelength.is_finite() && center_wavelength > 0.0) {
        return Err(CountsError::InvalidConfig(format!(
            "center wavelength must be > 0, got {center_wavelength}"
        )));
    }
    let (d, scale) = data.normalised()?;
    let du = min_spacing(&d);
    let level = edge_level(&d);
    let residual: Vec<f64> = d.v.iter().map(|v| v - level).collect();
    // At least two periods must fit in the window (span 2 in scaled units).
    let k_lo = 2.0 * PI;
    let k_hi = PI / du;
    if k_hi <= k_lo {
        return Err(CountsError::NoBeatDetected(
            "grid too coarse for two periods".into(),
        ));
    }
    let (ks, _, best) = spectrum(&d.u, &residual, k_lo, k_hi);
    if best == 0 {
        return Err(CountsError::NoBeatDetected(
            "no spectral peak above the two-period limit".into(),
        ));
    }
    let k0 = ks[best];

    let mut init = None;
    let mut best_chi = f64::INFINITY;
    for i in 0..41 {
        let c = -1.0 + 2.0 * i as f64 / 40.0;
        for j in 0..16 {
            let w = 4.0 * du * (3.0 / (4.0 * du)).powf(j as f64 / 15.0);
            let Ok(lin) = linear_fit(
                &d,
                &|u, row| {
                    let e = triangle(u, c, w);
                    row[0] = 1.0;
                    row[1] = e * (k0 * u).cos();
                    row[2] = e * (k0 * u).sin();
                },
                3,
            ) else {
                continue;
            };
            if lin.reduced_chi2 < best_chi {
                best_chi = lin.reduced_chi2;
                let (a, b) = (lin.params[1], lin.params[2]);
                init = Some(vec![lin.params[0], a.hypot(b), c, w, k0, (-b).atan2(a)]);
            }
        }
    }
    let init = init.ok_or_else(|| CountsError::FitDiverged("beat grid search failed".into()))?;
    let fit = levenberg_marquardt(&d, init, beat_model)?;
    let q = &fit.params;
    let (amp, sigma_amp) = (q[1].abs(), fit.sigma(1));
    if amp < BEAT_SIGNIFICANCE * sigma_amp || q[4].abs() < k_lo {
        return Err(CountsError::NoBeatDetected(format!(
            "modulation {amp:e} with standard error {sigma_amp:e}"
        )));
    }
    let k = q[4].abs() / scale.x_half;
    let period = 2.0 * PI / k;
    let delta_f = SPEED_OF_LIGHT / period;
    let rel = fit.sigma(4) / q[4].abs();
    let lambda2 = center_wavelength * center_wavelength;
    Ok(BeatEstimate {
        delta_f,
        sigma_delta_f: delta_f * rel,
        delta_lambda: lambda2 * delta_f / SPEED_OF_LIGHT,
        sigma_delta_lambda: lambda2 * delta_f * rel / SPEED_OF_LIGHT,
        period,
        modulation: amp / q[0],
        sigma_modulation: fit.propagate(&[
            -amp / (q[0] * q[0]),
            q[1].signum() / q[0],
            0.0,
            0.0,
            0.0,
            0.0,
        ]),
        envelope_center: scale.position(q[2]),
        envelope_half_width: q[3] * scale.x_half,
    })
}

/// Wavelength difference for a frequency difference at `center_wavelength`.
pub fn delta_lambda_from_delta_f(delta_f: f64, center_wavelength: f64) -> f64 {
    center_wavelength * center_wavelength * delta_f / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeEstimate {
    /// Apex position.
    pub center: f64,
    /// Base half-width, equal to the triangle's FWHM.
    pub width: f64,
    pub sigma: f64,
    pub sigma_width: f64,
    pub plateau: f64,
    pub amplitude: f64,
    pub visibility: f64,
}

impl EnvelopeEstimate {
    pub fn fwhm(&self) -> f64 {
        self.width
    }
}

/// Triangle fit for the apex position and half-width.
pub fn fit_envelope_center(data: &FitData) -> Result<EnvelopeEstimate, CountsError> {
    data.check(MIN_RECORDS)?;
    let (d, scale) = data.normalised()?;
    let fit = triangle_fit(&d)?;
    let q = &fit.params;
    if q[3] < MIN_RESOLVED_SPACINGS * min_spacing(&d) {
        return Err(CountsError::FeatureOutOfWindow(
            "no envelope resolved by the grid".into(),
        ));
    }
    if q[2].abs() > 1.0 {
        return Err(CountsError::FeatureOutOfWindow(format!(
            "fitted apex {:e} lies outside the scan",
            scale.position(q[2])
        )));
    }
    if !significant(&fit) {
        return Err(CountsError::FeatureOutOfWindow(
            "no significant envelope in the scan".into(),
        ));
    }
    Ok(EnvelopeEstimate {
        center: scale.position(q[2]),
        width: q[3] * scale.x_half,
        sigma: fit.sigma(2) * scale.x_half,
        sigma_width: fit.sigma(3) * scale.x_half,
        plateau: q[0] * scale.y,
        amplitude: q[1] * scale.y,
        visibility: q[1].abs() / q[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub std_dev: f64,
    /// Resamples whose estimator succeeded.
    pub resamples: usize,
}

/// Parametric bootstrap: redraws every bin from `Poisson(expected_rate ·
/// bin_duration)`, runs `estimator` on each resample in parallel, and
/// summarises the outputs. Resample `i` uses stream `i` of the master seed.
pub fn parametric_bootstrap<F>(
    records: &[CountRecord],
    cfg: &CountingConfig,
    resamples: usize,
    estimator: F,
) -> Result<BootstrapSummary, CountsError>
where
    F: Fn(&FitData) -> Result<f64, CountsError> + Sync,
{
    cfg.validate()?;
    let values: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(i + 1);
            let redrawn: Vec<CountRecord> = records
                .iter()
                .map(|r| {
                    let n = poisson_draw(&mut rng, r.expected_rate * cfg.bin_duration);
                    CountRecord::new(r.position, r.expected_rate, n)
                })
                .collect();
            estimator(&FitData::from_counts(&redrawn)).ok()
        })
        .collect();
    if values.len() < 2 {
        return Err(CountsError::FitDiverged(
            "bootstrap produced fewer than two estimates".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BootstrapSummary {
        mean,
        std_dev: var.sqrt(),
        resamples: values.len(),
    })
}
