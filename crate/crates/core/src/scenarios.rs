//! Translation stages, scan grids and the reference experiment presets.
//!
//! Stage conventions (`g` = geometry factor, optical path change per unit
//! stage travel):
//!
//! * M1 is a double-sided mirror shared by both long arms. Moving it by `dx1`
//!   (positive toward the lower arm) shortens the upper long arm and
//!   lengthens the lower one: `ΔL_u = g(-dx1 + dx2)`, `ΔL_l = g(dx1 - dx3)`.
//! * M2 lengthens the upper long arm, and M3 (the PZT) shortens the lower
//!   long arm. The RR phase therefore depends on `dx2 - dx3`, and the M1
//!   motion leaves it untouched.
//! * `dx0` is the preparation offset; it enters as per-term source delays.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coincidence::{
    analytic_probability, check_interference_conditions, coincidence_probability, AnalyzerSettings,
    BiphotonSource, CoincidenceError, FringeSign, InterferenceReport,
};
use crate::optics::{enumerate_paths, LongArm, OpticsError, PathAmplitude, TwoPhotonInput};
use crate::spectral::SpectralModel;
use crate::SPEED_OF_LIGHT;

/// Pump wavelength of the reference setup (m).
pub const PUMP_WAVELENGTH: f64 = 406.2e-9;
/// Default `c·T_w` (m): a 200 µm triangle base along the M1 axis.
pub const DEFAULT_CORRELATION_LENGTH: f64 = 200e-6;
/// `c·T_w` used for the nondegenerate preset, wide enough to hold several
/// beat periods inside the envelope.
pub const BEAT_CORRELATION_LENGTH: f64 = 2e-3;
/// Center-wavelength difference of the nondegenerate preset (m).
pub const NONDEGENERATE_DELTA_LAMBDA: f64 = 1.52e-9;
/// Preparation offset of the delayed-compensation preset (m).
pub const COMPENSATION_DX0: f64 = 1e-3;

const ENVELOPE_POINTS: usize = 201;
const PHASE_POINTS: usize = 101;
const MIN_POINTS_PER_PERIOD: f64 = 8.0;
const STROBOSCOPIC_PERIODS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid stage configuration: {0}")]
    InvalidStage(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Coincidence(#[from] CoincidenceError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Stage positions (m) and analyzer angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub dx0: f64,
    pub dx1: f64,
    pub dx2: f64,
    pub dx3: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub geometry_factor: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            dx0: 0.0,
            dx1: 0.0,
            dx2: 0.0,
            dx3: 0.0,
            theta1: FRAC_PI_4,
            theta2: FRAC_PI_4,
            geometry_factor: 1.0,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let all = [
            self.dx0,
            self.dx1,
            self.dx2,
            self.dx3,
            self.theta1,
            self.theta2,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(ScenarioError::InvalidStage(
                "non-finite position or angle".into(),
            ));
        }
        if !(self.geometry_factor.is_finite() && self.geometry_factor > 0.0) {
            return Err(ScenarioError::InvalidStage(format!(
                "geometry_factor must be > 0, got {}",
                self.geometry_factor
            )));
        }
        Ok(())
    }

    pub fn analyzers(&self) -> AnalyzerSettings {
        AnalyzerSettings::new(self.theta1, self.theta2)
    }
}

/// Long-arm path changes and the source-side term offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmDelays {
    /// ΔL_u (m).
    pub long_arm_u: f64,
    /// ΔL_l (m).
    pub long_arm_l: f64,
    /// Delay of the lower photon in the HH term (s).
    pub hh_lower_offset: f64,
    /// Delay of the upper photon in the VV term (s).
    pub vv_upper_offset: f64,
}

impl ArmDelays {
    /// `(ΔL_u - ΔL_l) / c`: RR-vs-TT differential delay without source offsets.
    pub fn differential_delay(&self) -> f64 {
        (self.long_arm_u - self.long_arm_l) / SPEED_OF_LIGHT
    }
}

pub fn stage_to_delays(cfg: &StageConfig) -> ArmDelays {
    let g = cfg.geometry_factor;
    let lag = cfg.dx0 / SPEED_OF_LIGHT;
    ArmDelays {
        long_arm_u: g * (-cfg.dx1 + cfg.dx2),
        long_arm_l: g * (cfg.dx1 - cfg.dx3),
        hh_lower_offset: lag,
        vv_upper_offset: lag,
    }
}

/// Detection alternatives for a stage configuration.
pub fn stage_paths(cfg: &StageConfig) -> Result<Vec<PathAmplitude>, ScenarioError> {
    cfg.validate()?;
    let d = stage_to_delays(cfg);
    Ok(enumerate_paths(
        &TwoPhotonInput::entangled(cfg.dx0),
        &LongArm::new(d.long_arm_u, 0.0),
        &LongArm::new(d.long_arm_l, 0.0),
    )?)
}

/// Engine probability and condition report at one configuration. The
/// source's own `delta_x0` is ignored in favour of `cfg.dx0`.
pub fn evaluate(
    cfg: &StageConfig,
    source: &BiphotonSource,
) -> Result<(f64, InterferenceReport), ScenarioError> {
    let paths = stage_paths(cfg)?;
    let source = source.with_delta_x0(cfg.dx0);
    let p = coincidence_probability(&paths, &source, cfg.analyzers())?;
    Ok((p, check_interference_conditions(&paths, &source)))
}

/// The closed-form law at a configuration, for analyzers with
/// `θ₁ = ±45°`. The analyzer pair enters as `cos 2(θ₂ - θ₁)`, which is ±1 for
/// the peak/dip pairs and gives the polarization-correlation curve otherwise.
pub fn analytic_at(cfg: &StageConfig, source: &BiphotonSource) -> Result<f64, ScenarioError> {
    cfg.validate()?;
    let t1 = cfg.theta1.rem_euclid(FRAC_PI_2);
    if (t1 - FRAC_PI_4).abs() > 1e-12 {
        return Err(CoincidenceError::ProtocolViolation(format!(
            "closed form needs θ₁ = ±45°, got {} rad",
            cfg.theta1
        ))
        .into());
    }
    let g = cfg.geometry_factor;
    let source = source.with_delta_x0(cfg.dx0);
    let peak = analytic_probability(
        g * cfg.dx1,
        g * cfg.dx2,
        g * cfg.dx3,
        &source,
        FringeSign::Peak,
    )?;
    let pair = (2.0 * (cfg.theta2 - cfg.theta1)).cos();
    Ok(0.5 + (peak - 0.5) * pair)
}

/// Which stage or analyzer a scan moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    Dx1,
    Dx2,
    Dx3,
    Theta1,
    Theta2,
}

impl ScanAxis {
    pub fn is_angle(self) -> bool {
        matches!(self, ScanAxis::Theta1 | ScanAxis::Theta2)
    }

    pub fn apply(self, cfg: &mut StageConfig, value: f64) {
        match self {
            ScanAxis::Dx1 => cfg.dx1 = value,
            ScanAxis::Dx2 => cfg.dx2 = value,
            ScanAxis::Dx3 => cfg.dx3 = value,
            ScanAxis::Theta1 => cfg.theta1 = value,
            ScanAxis::Theta2 => cfg.theta2 = value,
        }
    }

    pub fn unit(self) -> &'static str {
        if self.is_angle() {
            "rad"
        } else {
            "m"
        }
    }
}

/// Inclusive uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, ScenarioError> {
        let grid = Self { start, stop, step };
        grid.validate()?;
        Ok(grid)
    }

    /// `n` points centered on `center`, spanning `±half_span`.
    pub fn centered(center: f64, half_span: f64, n: usize) -> Self {
        let step = 2.0 * half_span / (n - 1) as f64;
        Self {
            start: center - half_span,
            stop: center + half_span,
            step,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if ![self.start, self.stop, self.step]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(ScenarioError::InvalidGrid("non-finite bound".into()));
        }
        if self.step <= 0.0 {
            return Err(ScenarioError::InvalidGrid(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        if self.stop < self.start {
            return Err(ScenarioError::InvalidGrid("stop is below start".into()));
        }
        if self.len() > 10_000_000 {
            return Err(ScenarioError::InvalidGrid("more than 10^7 points".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

/// Reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// M1 scan, degenerate pairs: phase-insensitive triangle peak and dip.
    Fig2a,
    /// M2 scan at M1 = 0: fringes inside an envelope twice as wide.
    Fig2b,
    /// M3 (PZT) scan over two optical periods.
    Fig2c,
    /// P2 rotation with P1 at +45°.
    Fig2d,
    /// M1 scan, nondegenerate pairs: spatial quantum beat.
    Fig3,
    /// M1 scan with Δx₀ = +1 mm: delayed compensation.
    Fig4,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig2a,
        Preset::Fig2b,
        Preset::Fig2c,
        Preset::Fig2d,
        Preset::Fig3,
        Preset::Fig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig2c => "fig2c",
            Preset::Fig2d => "fig2d",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .chain([Preset::Custom])
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }

    /// Fringe signs the experiment recorded. The polarization scan has none.
    pub fn signs(self) -> &'static [FringeSign] {
        match self {
            Preset::Fig2a | Preset::Fig3 | Preset::Fig4 => &[FringeSign::Peak, FringeSign::Dip],
            Preset::Fig2b | Preset::Fig2c => &[FringeSign::Peak],
            Preset::Fig2d | Preset::Custom => &[],
        }
    }

    /// Configured visibility for each preset and sign.
    pub fn visibility(self, sign: Option<FringeSign>) -> f64 {
        match (self, sign) {
            (Preset::Fig2a | Preset::Fig4, Some(FringeSign::Dip)) => 0.93,
            (Preset::Fig3, Some(FringeSign::Dip)) => 0.91,
            (Preset::Fig2b | Preset::Fig2c, _) => 0.91,
            (Preset::Fig2d, _) => 0.94,
            _ => 0.92,
        }
    }

    /// Source used by the preset (before any user override).
    pub fn source(self, sign: Option<FringeSign>) -> BiphotonSource {
        let v = self.visibility(sign);
        let width = |len: f64| {
            SpectralModel::sinc_squared(len / SPEED_OF_LIGHT).expect("positive constant width")
        };
        let source = match self {
            Preset::Fig3 => BiphotonSource::nondegenerate(
                PUMP_WAVELENGTH,
                NONDEGENERATE_DELTA_LAMBDA,
                width(BEAT_CORRELATION_LENGTH),
                v,
            ),
            _ => BiphotonSource::degenerate(PUMP_WAVELENGTH, width(DEFAULT_CORRELATION_LENGTH), v),
        }
        .expect("preset constants satisfy the source invariants");
        match self {
            Preset::Fig4 => source.with_delta_x0(COMPENSATION_DX0),
            _ => source,
        }
    }

    /// Every variant the experiment recorded, one scan per sign.
    pub fn variants(self) -> Vec<ScanSpec> {
        match self.signs() {
            [] => vec![self.scan_with_source(None, self.source(None))],
            signs => signs
                .iter()
                .map(|&s| self.scan_with_source(Some(s), self.source(Some(s))))
                .collect(),
        }
    }

    pub fn scan(self, sign: Option<FringeSign>) -> ScanSpec {
        self.scan_with_source(sign, self.source(sign))
    }

    /// Builds the preset protocol around a given source. Grid extents follow
    /// the source's envelope support and wavelengths.
    pub fn scan_with_source(self, sign: Option<FringeSign>, source: BiphotonSource) -> ScanSpec {
        let g = 1.0;
        let support_len = source.spectral.support_time() * SPEED_OF_LIGHT;
        let fixed = StageConfig {
            dx0: source.delta_x0,
            ..StageConfig::default()
        };
        let (axis, grid, sign) = match self {
            Preset::Fig2a | Preset::Fig3 | Preset::Fig4 | Preset::Custom => {
                // The M1 envelope half-base is c·T_w / 2g, centered at Δx₀/g.
                let half = 1.5 * support_len / (2.0 * g);
                let grid = Grid::centered(source.delta_x0 / g, half, ENVELOPE_POINTS);
                (ScanAxis::Dx1, grid, Some(sign.unwrap_or(FringeSign::Peak)))
            }
            Preset::Fig2b => {
                // Step locked to whole optical periods: every sample sits on a
                // fringe extremum and the scan traces the fringe envelope.
                let step = STROBOSCOPIC_PERIODS * source.center_wavelength_u / g;
                let half = step * (ENVELOPE_POINTS - 1) as f64 / 2.0;
                let grid = Grid {
                    start: -half,
                    stop: half,
                    step,
                };
                (ScanAxis::Dx2, grid, Some(sign.unwrap_or(FringeSign::Peak)))
            }
            Preset::Fig2c => {
                let period = source.center_wavelength_l / g;
                let grid = Grid::centered(0.0, period, PHASE_POINTS);
                (ScanAxis::Dx3, grid, Some(sign.unwrap_or(FringeSign::Peak)))
            }
            Preset::Fig2d => {
                let grid = Grid::centered(FRAC_PI_2, PI, PHASE_POINTS);
                (ScanAxis::Theta2, grid, None)
            }
        };
        ScanSpec {
            preset: self,
            axis,
            grid,
            fixed,
            source,
            sign,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanSpec {
    pub preset: Preset,
    pub axis: ScanAxis,
    pub grid: Grid,
    pub fixed: StageConfig,
    pub source: BiphotonSource,
    /// When set, the analyzers are forced to θ₁ = +45° and θ₂ = ±45°.
    pub sign: Option<FringeSign>,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.grid.validate()?;
        self.fixed.validate()?;
        self.source.validate()?;
        Ok(())
    }

    /// Stage configuration at one grid position.
    pub fn config_at(&self, position: f64) -> StageConfig {
        let mut cfg = self.fixed;
        if let Some(sign) = self.sign {
            let a = AnalyzerSettings::for_sign(sign);
            cfg.theta1 = a.theta1;
            cfg.theta2 = a.theta2;
        }
        self.axis.apply(&mut cfg, position);
        cfg
    }

    /// Shortest oscillation period along the scanned axis, if any.
    pub fn shortest_period(&self) -> Option<f64> {
        let g = self.fixed.geometry_factor;
        match self.axis {
            ScanAxis::Dx1 => {
                let dw = self.source.delta_omega().abs();
                (dw > 0.0 && !self.source.is_degenerate())
                    .then(|| 2.0 * PI * SPEED_OF_LIGHT / (dw * g))
            }
            ScanAxis::Dx2 => Some(self.source.center_wavelength_u / g),
            ScanAxis::Dx3 => Some(self.source.center_wavelength_l / g),
            ScanAxis::Theta1 | ScanAxis::Theta2 => Some(PI),
        }
    }

    pub fn grid_warnings(&self) -> Vec<ScanWarning> {
        let Some(period) = self.shortest_period() else {
            return Vec::new();
        };
        let per_period = period / self.grid.step;
        let cycles_per_step = self.grid.step / period;
        let stroboscopic =
            cycles_per_step >= 1.0 && (cycles_per_step - cycles_per_step.round()).abs() <= 1e-9;
        if per_period < MIN_POINTS_PER_PERIOD && !stroboscopic {
            vec![ScanWarning::GridTooCoarse {
                period,
                points_per_period: per_period,
            }]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScanWarning {
    GridTooCoarse { period: f64, points_per_period: f64 },
}

impl std::fmt::Display for ScanWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanWarning::GridTooCoarse {
                period,
                points_per_period,
            } => write!(
                f,
                "grid too coarse: {points_per_period:.2} points per {period:e} period (need >= {MIN_POINTS_PER_PERIOD})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub spec: ScanSpec,
    pub positions: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub conditions: Vec<InterferenceReport>,
    pub warnings: Vec<ScanWarning>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Closed-form value at every grid point.
    pub fn analytic(&self) -> Result<Vec<f64>, ScenarioError> {
        self.positions
            .iter()
            .map(|&x| analytic_at(&self.spec.config_at(x), &self.spec.source))
            .collect()
    }
}

/// Evaluates the engine over the grid. Points are computed in parallel and
/// returned in grid order.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanResult, ScenarioError> {
    spec.validate()?;
    let positions = spec.grid.points();
    let evaluated: Vec<(f64, InterferenceReport)> = positions
        .par_iter()
        .map(|&x| evaluate(&spec.config_at(x), &spec.source))
        .collect::<Result<_, _>>()?;
    let (probabilities, conditions) = evaluated.into_iter().unzip();
    Ok(ScanResult {
        spec: *spec,
        positions,
        probabilities,
        conditions,
        warnings: spec.grid_warnings(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m1_moves_arms_oppositely() {
        let d = 37e-6;
        let cfg = StageConfig {
            dx1: d,
            ..StageConfig::default()
        };
        let delays = stage_to_delays(&cfg);
        assert_eq!((delays.long_arm_u, delays.long_arm_l), (-d, d));
        let k = 2.0 * PI / 812.4e-9;
        assert_eq!(k * (delays.long_arm_u + delays.long_arm_l), 0.0);
        assert_eq!(delays.differential_delay(), -2.0 * d / SPEED_OF_LIGHT);
    }

    #[test]
    fn m2_moves_upper_arm_only() {
        let cfg = StageConfig {
            dx2: 5e-6,
            ..StageConfig::default()
        };
        let delays = stage_to_delays(&cfg);
        assert_eq!((delays.long_arm_u, delays.long_arm_l), (5e-6, 0.0));
    }

    #[test]
    fn zero_config_gives_zero_delays() {
        let delays = stage_to_delays(&StageConfig::default());
        assert_eq!(delays.long_arm_u, 0.0);
        assert_eq!(delays.long_arm_l, 0.0);
        assert_eq!(delays.hh_lower_offset, 0.0);
        assert_eq!(delays.vv_upper_offset, 0.0);
    }

    #[test]
    fn geometry_factor_must_be_positive() {
        let cfg = StageConfig {
            geometry_factor: 0.0,
            ..StageConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_counts() {
        let g = Grid::new(-1.0, 1.0, 0.01).unwrap();
        assert_eq!(g.len(), 201);
        assert!(Grid::new(0.0, 1.0, 0.0).is_err());
        assert!(Grid::new(1.0, 0.0, 0.1).is_err());
        assert_eq!(Grid::centered(0.0, 150e-6, 201).len(), 201);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
        assert_eq!(Preset::from_name("FIG2A"), Some(Preset::Fig2a));
        assert_eq!(Preset::from_name("fig5"), None);
    }

    #[test]
    fn fig2a_peak_maximum() {
        let r = run_scan(&Preset::Fig2a.scan(Some(FringeSign::Peak))).unwrap();
        let (i, max) = r
            .probabilities
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            );
        assert!(r.positions[i].abs() < 1e-12);
        assert!((max - 0.5 * 1.92).abs() < 1e-12);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn fig2d_aligned_analyzers_are_maximal() {
        let r = run_scan(&Preset::Fig2d.scan(None)).unwrap();
        let max = r.probabilities.iter().cloned().fold(f64::MIN, f64::max);
        let cfg = StageConfig::default();
        let (aligned, _) = evaluate(&cfg, &Preset::Fig2d.source(None)).unwrap();
        assert!((aligned - 0.5 * 1.94).abs() < 1e-12);
        assert!(max <= aligned + 1e-12 && max > aligned - 0.01);
    }

    #[test]
    fn coarse_phase_grid_warns() {
        let mut spec = Preset::Fig2c.scan(None);
        spec.grid.step = 0.3e-6;
        assert_eq!(spec.grid_warnings().len(), 1);
        // The stroboscopic fig2b grid is coarse but commensurate.
        assert!(Preset::Fig2b.scan(None).grid_warnings().is_empty());
        assert!(Preset::Fig3
            .scan(Some(FringeSign::Peak))
            .grid_warnings()
            .is_empty());
    }

    #[test]
    fn analytic_requires_45_degree_first_analyzer() {
        let cfg = StageConfig {
            theta1: 0.2,
            ..StageConfig::default()
        };
        assert!(analytic_at(&cfg, &Preset::Fig2a.source(None)).is_err());
    }
}
