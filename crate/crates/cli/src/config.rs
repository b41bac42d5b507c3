//! JSON run configuration. Lengths are given in the units an experimenter
//! would type (nm, µm, mm, degrees) and converted to SI here.

use std::path::PathBuf;

use franson_core::coincidence::BiphotonSource;
use franson_core::counts::CountingConfig;
use franson_core::scenarios::{Grid, Preset, ScanAxis, ScanSpec, StageConfig};
use franson_core::spectral::{SpectralKind, SpectralModel};
use franson_core::SPEED_OF_LIGHT;
use serde::Deserialize;
use thiserror::Error;

/// Relative tolerance on `1/λ_u + 1/λ_l = 1/λ_p`.
pub const ENERGY_TOLERANCE: f64 = 1e-6;
const MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {message}")]
pub struct SchemaError {
    pub key: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub source: SourceBlock,
    pub stages: Option<StagesBlock>,
    #[serde(default)]
    pub counting: CountingBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    pub pump_wavelength_nm: Option<f64>,
    pub center_wavelength_u_nm: Option<f64>,
    pub center_wavelength_l_nm: Option<f64>,
    pub spectral_kind: Option<SpectralKind>,
    /// `c` times the envelope width parameter, in µm.
    pub correlation_width_um: Option<f64>,
    pub visibility: Option<f64>,
    pub dx0_mm: Option<f64>,
}

/// A stage held fixed or scanned.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AxisSetting {
    Fixed(f64),
    Scan(GridBlock),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesBlock {
    /// µm.
    pub dx1: Option<AxisSetting>,
    pub dx2: Option<AxisSetting>,
    pub dx3: Option<AxisSetting>,
    /// Degrees.
    pub theta1: Option<AxisSetting>,
    pub theta2: Option<AxisSetting>,
    pub geometry_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingBlock {
    #[serde(default = "default_plateau")]
    pub plateau_rate_hz: f64,
    #[serde(default = "default_bin")]
    pub bin_duration_s: f64,
    #[serde(default)]
    pub accidental_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_plateau() -> f64 {
    2000.0
}

fn default_bin() -> f64 {
    1.0
}

impl Default for CountingBlock {
    fn default() -> Self {
        Self {
            plateau_rate_hz: default_plateau(),
            bin_duration_s: default_bin(),
            accidental_rate_hz: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Parses and bounds-checks a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::new(
            if path == "." { "config".into() } else { path },
            e.inner().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(key: &str, value: Option<f64>) -> Result<(), SchemaError> {
    match value {
        Some(v) if !(v.is_finite() && v > 0.0) => {
            Err(SchemaError::new(key, format!("must be > 0, got {v}")))
        }
        _ => Ok(()),
    }
}

fn finite(key: &str, value: Option<f64>) -> Result<(), SchemaError> {
    match value {
        Some(v) if !v.is_finite() => Err(SchemaError::new(key, "must be finite")),
        _ => Ok(()),
    }
}

fn check_axis(key: &str, axis: Option<AxisSetting>) -> Result<(), SchemaError> {
    match axis {
        None => Ok(()),
        Some(AxisSetting::Fixed(v)) => finite(key, Some(v)),
        Some(AxisSetting::Scan(g)) => {
            if ![g.start, g.stop, g.step].iter().all(|v| v.is_finite()) {
                return Err(SchemaError::new(key, "grid bounds must be finite"));
            }
            if g.step <= 0.0 {
                return Err(SchemaError::new(
                    format!("{key}.step"),
                    format!("must be > 0, got {}", g.step),
                ));
            }
            if g.stop < g.start {
                return Err(SchemaError::new(
                    format!("{key}.stop"),
                    "must not be below start",
                ));
            }
            if (g.stop - g.start) / g.step > MAX_POINTS as f64 {
                return Err(SchemaError::new(
                    key,
                    format!("grid exceeds {MAX_POINTS} points"),
                ));
            }
            Ok(())
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let s = &self.source;
        positive("source.pump_wavelength_nm", s.pump_wavelength_nm)?;
        positive("source.center_wavelength_u_nm", s.center_wavelength_u_nm)?;
        positive("source.center_wavelength_l_nm", s.center_wavelength_l_nm)?;
        positive("source.correlation_width_um", s.correlation_width_um)?;
        finite("source.dx0_mm", s.dx0_mm)?;
        if let Some(v) = s.visibility {
            if !(0.0..=1.0).contains(&v) {
                return Err(SchemaError::new(
                    "source.visibility",
                    "visibility must be in [0,1]",
                ));
            }
        }
        if let (Some(u), Some(l)) = (s.center_wavelength_u_nm, s.center_wavelength_l_nm) {
            let pump = s
                .pump_wavelength_nm
                .unwrap_or(franson_core::scenarios::PUMP_WAVELENGTH * 1e9);
            let mismatch = ((1.0 / u + 1.0 / l) * pump - 1.0).abs();
            if mismatch > ENERGY_TOLERANCE {
                return Err(SchemaError::new(
                    "source.center_wavelength_l_nm",
                    format!("1/λ_u + 1/λ_l differs from 1/λ_p by {mismatch:e} (relative), limit {ENERGY_TOLERANCE:e}"),
                ));
            }
        }
        if let Some(st) = &self.stages {
            check_axis("stages.dx1", st.dx1)?;
            check_axis("stages.dx2", st.dx2)?;
            check_axis("stages.dx3", st.dx3)?;
            check_axis("stages.theta1", st.theta1)?;
            check_axis("stages.theta2", st.theta2)?;
            positive("stages.geometry_factor", st.geometry_factor)?;
            let scans = [st.dx1, st.dx2, st.dx3, st.theta1, st.theta2]
                .iter()
                .filter(|a| matches!(a, Some(AxisSetting::Scan(_))))
                .count();
            if scans != 1 {
                return Err(SchemaError::new(
                    "stages",
                    format!("exactly one axis must be a grid, found {scans}"),
                ));
            }
        }
        let c = &self.counting;
        positive("counting.plateau_rate_hz", Some(c.plateau_rate_hz))?;
        positive("counting.bin_duration_s", Some(c.bin_duration_s))?;
        if !(c.accidental_rate_hz.is_finite() && c.accidental_rate_hz >= 0.0) {
            return Err(SchemaError::new(
                "counting.accidental_rate_hz",
                "must be >= 0",
            ));
        }
        Ok(())
    }

    /// Source with this config's fields applied over `base` (a preset's
    /// source, or the degenerate default).
    pub fn source(&self, base: Option<BiphotonSource>) -> Result<BiphotonSource, SchemaError> {
        let base = base.unwrap_or_else(|| Preset::Fig2a.source(None));
        let s = &self.source;
        let pump = s
            .pump_wavelength_nm
            .map_or(base.pump_wavelength, |v| v * 1e-9);
        let u = match (s.center_wavelength_u_nm, s.pump_wavelength_nm) {
            (Some(u), _) => u * 1e-9,
            (None, Some(_)) => 2.0 * pump,
            (None, None) => base.center_wavelength_u,
        };
        let l = match (
            s.center_wavelength_l_nm,
            s.center_wavelength_u_nm.or(s.pump_wavelength_nm),
        ) {
            // Passed the config-level check; recompute so the core invariant
            // holds to rounding.
            (Some(_), _) | (None, Some(_)) => 1.0 / (1.0 / pump - 1.0 / u),
            (None, None) => base.center_wavelength_l,
        };
        let kind = s.spectral_kind.unwrap_or(base.spectral.kind());
        let width = s
            .correlation_width_um
            .map_or(base.spectral.correlation_width(), |w| {
                w * 1e-6 / SPEED_OF_LIGHT
            });
        let spectral = SpectralModel::new(kind, width)
            .map_err(|e| SchemaError::new("source.correlation_width_um", e.to_string()))?;
        BiphotonSource::new(
            pump,
            u,
            l,
            spectral,
            s.dx0_mm.map_or(base.delta_x0, |v| v * 1e-3),
            s.visibility.unwrap_or(base.visibility),
        )
        .map_err(|e| SchemaError::new("source", e.to_string()))
    }

    pub fn counting(&self, seed: Option<u64>) -> CountingConfig {
        let c = &self.counting;
        CountingConfig {
            plateau_rate: c.plateau_rate_hz,
            bin_duration: c.bin_duration_s,
            accidental_rate: c.accidental_rate_hz,
            rng_seed: seed.unwrap_or(c.seed),
        }
    }

    /// Scan described by the stages block. Without one, an M1 scan of
    /// ±150 µm in 1.5 µm steps.
    pub fn custom_scan(&self) -> Result<ScanSpec, SchemaError> {
        let source = self.source(None)?;
        let default_stages = StagesBlock {
            dx1: Some(AxisSetting::Scan(GridBlock {
                start: -150.0,
                stop: 150.0,
                step: 1.5,
            })),
            ..StagesBlock::default()
        };
        let st = self.stages.as_ref().unwrap_or(&default_stages);
        let um = 1e-6;
        let deg = std::f64::consts::PI / 180.0;
        let mut fixed = StageConfig {
            dx0: source.delta_x0,
            geometry_factor: st.geometry_factor.unwrap_or(1.0),
            ..StageConfig::default()
        };
        let mut scan = None;
        let axes = [
            (ScanAxis::Dx1, st.dx1, um),
            (ScanAxis::Dx2, st.dx2, um),
            (ScanAxis::Dx3, st.dx3, um),
            (ScanAxis::Theta1, st.theta1, deg),
            (ScanAxis::Theta2, st.theta2, deg),
        ];
        for (axis, setting, unit) in axes {
            match setting {
                Some(AxisSetting::Fixed(v)) => axis.apply(&mut fixed, v * unit),
                Some(AxisSetting::Scan(g)) => {
                    scan = Some((
                        axis,
                        Grid {
                            start: g.start * unit,
                            stop: g.stop * unit,
                            step: g.step * unit,
                        },
                    ))
                }
                None => {}
            }
        }
        let (axis, grid) = scan.ok_or_else(|| SchemaError::new("stages", "no scanned axis"))?;
        Ok(ScanSpec {
            preset: Preset::Custom,
            axis,
            grid,
            fixed,
            source,
            sign: None,
        })
    }
}
