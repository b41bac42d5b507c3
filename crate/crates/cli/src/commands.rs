//! `scan`, `fit` and `report`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use franson_core::coincidence::FringeSign;
use franson_core::counts::{
    estimate_beat_frequency, estimate_period, estimate_visibility, fit_envelope_center,
    sample_counts, CountRecord, CountingConfig, FitData, VisibilityModel,
};
use franson_core::scenarios::{run_scan, Preset, ScanAxis, ScanResult, ScanSpec, PUMP_WAVELENGTH};
use serde_json::json;
use thiserror::Error;

use crate::config::{parse_config, RunConfig, SchemaError};
use crate::output::{self, AxisLabel, Plot};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "franson",
    version,
    about = "Polarization-based Franson interferometer simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a preset or configured scan and write CSV (and optionally SVG).
    Scan(ScanArgs),
    /// Fit a CSV dataset.
    Fit(FitArgs),
    /// Run every preset with sampled counts and print the recovered estimates.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
    Fig3,
    Fig4,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig2a => Preset::Fig2a,
            PresetArg::Fig2b => Preset::Fig2b,
            PresetArg::Fig2c => Preset::Fig2c,
            PresetArg::Fig2d => Preset::Fig2d,
            PresetArg::Fig3 => Preset::Fig3,
            PresetArg::Fig4 => Preset::Fig4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Peak,
    Dip,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Triangle peak/dip visibility.
    Hom,
    /// Sinusoidal fringe period and visibility.
    Fringe,
    /// Envelope-times-cosine beat frequency.
    Beat,
    /// Analyzer-angle correlation visibility.
    Polarization,
    /// Triangle apex position and width.
    Envelope,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Add Poisson-sampled coincidence counts.
    #[arg(long)]
    pub counts: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Analyzer pair for fringe scans; `both` writes `<stem>_peak` and `<stem>_dip`.
    #[arg(long, value_enum)]
    pub sign: Option<SignArg>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Center wavelength for the beat conversion (default: twice the pump).
    #[arg(long)]
    pub wavelength_nm: Option<f64>,
    /// Config whose counting block gives the accidental level to subtract.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Config whose counting block sets rates and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Ok(parse_config(&text)?)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Scan(args) => scan(&args, out),
        Command::Fit(args) => fit(&args, out),
        Command::Report(args) => report(&args, out),
    }
}

fn signs(arg: Option<SignArg>, default: &[FringeSign]) -> Vec<FringeSign> {
    match arg {
        None | Some(SignArg::Both) => default.to_vec(),
        Some(SignArg::Peak) => vec![FringeSign::Peak],
        Some(SignArg::Dip) => vec![FringeSign::Dip],
    }
}

/// Scans to run, keyed by the analyzer sign they force (if any).
pub type SignedScans = Vec<(Option<FringeSign>, ScanSpec)>;

/// Output stem and scan specs for the command line.
pub fn scan_specs(args: &ScanArgs, cfg: &RunConfig) -> Result<(String, SignedScans), CliError> {
    match args.preset {
        Some(p) => {
            let preset = Preset::from(p);
            if cfg.stages.is_some() {
                return Err(CliError::Config(
                    "stages: cannot be combined with --preset".into(),
                ));
            }
            let chosen = signs(args.sign, preset.signs());
            if preset.signs().is_empty() && args.sign.is_some() {
                return Err(CliError::Config(format!(
                    "--sign: {} has no fringe sign",
                    preset.name()
                )));
            }
            let specs = if chosen.is_empty() {
                let source = cfg.source(Some(preset.source(None)))?;
                vec![(None, preset.scan_with_source(None, source))]
            } else {
                chosen
                    .into_iter()
                    .map(|s| {
                        let source = cfg.source(Some(preset.source(Some(s))))?;
                        Ok((Some(s), preset.scan_with_source(Some(s), source)))
                    })
                    .collect::<Result<_, CliError>>()?
            };
            Ok((preset.name().to_string(), specs))
        }
        None => {
            if args.config.is_none() {
                return Err(CliError::Config(
                    "either --preset or --config is required".into(),
                ));
            }
            let base = cfg.custom_scan()?;
            let specs = match args.sign {
                None => vec![(None, base)],
                Some(s) => signs(Some(s), &[FringeSign::Peak, FringeSign::Dip])
                    .into_iter()
                    .map(|sign| {
                        (
                            Some(sign),
                            ScanSpec {
                                sign: Some(sign),
                                ..base
                            },
                        )
                    })
                    .collect(),
            };
            Ok(("scan".to_string(), specs))
        }
    }
}

fn with_suffix(path: &Path, suffix: Option<&str>) -> PathBuf {
    match suffix {
        None => path.to_path_buf(),
        Some(s) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let name = match path.extension() {
                Some(ext) => format!("{stem}_{s}.{}", ext.to_string_lossy()),
                None => format!("{stem}_{s}"),
            };
            path.with_file_name(name)
        }
    }
}

pub fn axis_label(axis: ScanAxis) -> AxisLabel {
    match axis {
        ScanAxis::Dx1 => AxisLabel {
            name: "M1 displacement",
            unit: "µm",
            scale: 1e6,
        },
        ScanAxis::Dx2 => AxisLabel {
            name: "M2 displacement",
            unit: "µm",
            scale: 1e6,
        },
        ScanAxis::Dx3 => AxisLabel {
            name: "M3 (PZT) displacement",
            unit: "nm",
            scale: 1e9,
        },
        ScanAxis::Theta1 => AxisLabel {
            name: "P1 angle",
            unit: "deg",
            scale: 180.0 / std::f64::consts::PI,
        },
        ScanAxis::Theta2 => AxisLabel {
            name: "P2 angle",
            unit: "deg",
            scale: 180.0 / std::f64::consts::PI,
        },
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(contents).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn scan(args: &ScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let (name, specs) = scan_specs(args, &cfg)?;
    let counting = cfg.counting(args.seed);
    if args.counts {
        counting
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let csv_path = args
        .out
        .clone()
        .or_else(|| cfg.output.csv.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    let svg_path = args.svg.clone().or_else(|| cfg.output.svg.clone());
    let many = specs.len() > 1;
    for (sign, spec) in specs {
        let suffix = sign.filter(|_| many).map(FringeSign::as_str);
        let result = run_scan(&spec).map_err(numeric)?;
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        let records = if args.counts {
            Some(sample_counts(&result, &counting).map_err(numeric)?)
        } else {
            None
        };
        let rows = output::rows(&result.positions, &result.probabilities, records.as_deref());
        let path = with_suffix(&csv_path, suffix);
        write_file(&path, output::csv_string(&rows).as_bytes())?;
        writeln!(out, "wrote {} ({} points)", path.display(), rows.len())
            .map_err(|e| CliError::Io(e.to_string()))?;
        if let Some(svg) = &svg_path {
            let title = match sign {
                Some(s) => format!("{name} ({})", s.as_str()),
                None => name.clone(),
            };
            let plot = Plot {
                title: &title,
                axis: axis_label(spec.axis),
                positions: &result.positions,
                probabilities: &result.probabilities,
                counts: records.as_deref().map(|r| (r, counting)),
            };
            let path = with_suffix(svg, suffix);
            write_file(&path, output::render_svg(&plot).as_bytes())?;
            writeln!(out, "wrote {}", path.display()).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

/// Fit outcome: text lines and a JSON object.
pub struct FitReport {
    pub lines: Vec<String>,
    pub json: serde_json::Value,
}

pub fn fit_data(
    data: &FitData,
    model: ModelArg,
    wavelength: f64,
    background: f64,
) -> Result<FitReport, CliError> {
    let mut lines = Vec::new();
    let json = match model {
        ModelArg::Hom | ModelArg::Polarization | ModelArg::Fringe => {
            let vm = match model {
                ModelArg::Hom => VisibilityModel::TrianglePeakDip,
                ModelArg::Polarization => VisibilityModel::PolarizationCurve,
                _ => VisibilityModel::Sinusoid,
            };
            let raw = estimate_visibility(data, vm).map_err(numeric)?;
            lines.push(format!(
                "visibility = {:.4} ± {:.4}",
                raw.visibility, raw.sigma
            ));
            let mut j = json!({
                "model": format!("{model:?}").to_lowercase(),
                "visibility": raw.visibility,
                "sigma_visibility": raw.sigma,
                "reduced_chi2": raw.reduced_chi2,
            });
            if background > 0.0 {
                let sub = estimate_visibility(&data.subtract_background(background), vm)
                    .map_err(numeric)?;
                lines.push(format!(
                    "visibility (accidentals subtracted) = {:.4} ± {:.4}",
                    sub.visibility, sub.sigma
                ));
                j["visibility_subtracted"] = json!(sub.visibility);
                j["sigma_visibility_subtracted"] = json!(sub.sigma);
            }
            if model == ModelArg::Fringe {
                let p = estimate_period(data).map_err(numeric)?;
                lines.push(format!("period = {:.6e} ± {:.1e}", p.period, p.sigma));
                j["period"] = json!(p.period);
                j["sigma_period"] = json!(p.sigma);
            }
            if model == ModelArg::Hom {
                if let Ok(e) = fit_envelope_center(data) {
                    lines.push(format!(
                        "center = {:.6e} ± {:.1e}, fwhm = {:.6e}",
                        e.center,
                        e.sigma,
                        e.fwhm()
                    ));
                    j["center"] = json!(e.center);
                    j["fwhm"] = json!(e.fwhm());
                }
            }
            j
        }
        ModelArg::Beat => {
            let b = estimate_beat_frequency(data, wavelength).map_err(numeric)?;
            lines.push(format!(
                "delta_f = {:.4} ± {:.4} THz",
                b.delta_f * 1e-12,
                b.sigma_delta_f * 1e-12
            ));
            lines.push(format!(
                "delta_lambda = {:.4} ± {:.4} nm",
                b.delta_lambda * 1e9,
                b.sigma_delta_lambda * 1e9
            ));
            lines.push(format!("beat period = {:.6e}", b.period));
            json!({
                "model": "beat",
                "delta_f_hz": b.delta_f,
                "sigma_delta_f_hz": b.sigma_delta_f,
                "delta_lambda_m": b.delta_lambda,
                "sigma_delta_lambda_m": b.sigma_delta_lambda,
                "period": b.period,
                "modulation": b.modulation,
            })
        }
        ModelArg::Envelope => {
            let e = fit_envelope_center(data).map_err(numeric)?;
            lines.push(format!("center = {:.6e} ± {:.1e}", e.center, e.sigma));
            lines.push(format!(
                "half-width = {:.6e} ± {:.1e}",
                e.width, e.sigma_width
            ));
            json!({
                "model": "envelope",
                "center": e.center,
                "sigma_center": e.sigma,
                "width": e.width,
                "sigma_width": e.sigma_width,
                "visibility": e.visibility,
            })
        }
    };
    Ok(FitReport { lines, json })
}

fn fit(args: &FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let file = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let rows = output::read_csv(file)?;
    let records = output::records_from_rows(&rows);
    let (data, background) = match &records {
        Some(r) => (
            FitData::from_counts(r),
            cfg.counting(None).accidental_counts(),
        ),
        None => {
            let x: Vec<f64> = rows.iter().map(|r| r.position).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.probability).collect();
            (FitData::exact(&x, &y), 0.0)
        }
    };
    let wavelength = match args.wavelength_nm {
        Some(w) if !(w.is_finite() && w > 0.0) => {
            return Err(CliError::Config(format!(
                "--wavelength-nm: must be > 0, got {w}"
            )))
        }
        Some(w) => w * 1e-9,
        None => 2.0 * PUMP_WAVELENGTH,
    };
    let report = fit_data(&data, args.model, wavelength, background)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(
        out,
        "{} records ({})",
        rows.len(),
        if records.is_some() {
            "counts"
        } else {
            "probabilities"
        }
    )
    .map_err(io)?;
    for line in &report.lines {
        writeln!(out, "{line}").map_err(io)?;
    }
    writeln!(out, "{}", report.json).map_err(io)?;
    Ok(())
}

fn sampled(
    spec: &ScanSpec,
    counting: &CountingConfig,
) -> Result<(ScanResult, Vec<CountRecord>), CliError> {
    let result = run_scan(spec).map_err(numeric)?;
    let records = sample_counts(&result, counting).map_err(numeric)?;
    Ok((result, records))
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let counting = cfg.counting(args.seed);
    counting
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let background = counting.accidental_counts();
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut summary = Vec::new();
    let mut fig2a_fwhm = None;
    writeln!(
        out,
        "plateau {} Hz, bins {} s, accidentals {} Hz, seed {}",
        counting.plateau_rate, counting.bin_duration, counting.accidental_rate, counting.rng_seed
    )
    .map_err(io)?;
    for preset in Preset::ALL {
        for spec in preset.variants() {
            let (_, records) = sampled(&spec, &counting)?;
            let data = FitData::from_counts(&records).subtract_background(background);
            let label = match spec.sign {
                Some(s) if preset.signs().len() > 1 => format!("{} {}", preset.name(), s.as_str()),
                _ => preset.name().to_string(),
            };
            let v_cfg = spec.source.visibility;
            let entry = match preset {
                Preset::Fig2a => {
                    let v = estimate_visibility(&data, VisibilityModel::TrianglePeakDip)
                        .map_err(numeric)?;
                    let e = fit_envelope_center(&data).map_err(numeric)?;
                    fig2a_fwhm.get_or_insert(e.fwhm());
                    writeln!(
                        out,
                        "{label:<11} V = {:.3} ± {:.3} (configured {v_cfg})",
                        v.visibility, v.sigma
                    )
                    .map_err(io)?;
                    json!({"scan": label, "visibility": v.visibility, "sigma": v.sigma, "fwhm": e.fwhm()})
                }
                Preset::Fig2b => {
                    let e = fit_envelope_center(&data).map_err(numeric)?;
                    let ratio = fig2a_fwhm.map(|w| e.fwhm() / w);
                    writeln!(
                        out,
                        "{label:<11} envelope FWHM = {:.1} µm, ratio to M1 scan = {}",
                        e.fwhm() * 1e6,
                        ratio.map_or("n/a".into(), |r| format!("{r:.3}"))
                    )
                    .map_err(io)?;
                    json!({"scan": label, "fwhm": e.fwhm(), "fwhm_ratio": ratio})
                }
                Preset::Fig2c => {
                    let p = estimate_period(&data).map_err(numeric)?;
                    writeln!(
                        out,
                        "{label:<11} period = {:.2} ± {:.2} nm, V = {:.3} ± {:.3} (configured {v_cfg})",
                        p.period * 1e9,
                        p.sigma * 1e9,
                        p.visibility,
                        p.sigma_visibility
                    )
                    .map_err(io)?;
                    json!({"scan": label, "period": p.period, "visibility": p.visibility, "sigma": p.sigma_visibility})
                }
                Preset::Fig2d => {
                    let v = estimate_visibility(&data, VisibilityModel::PolarizationCurve)
                        .map_err(numeric)?;
                    writeln!(
                        out,
                        "{label:<11} V = {:.3} ± {:.3} (configured {v_cfg})",
                        v.visibility, v.sigma
                    )
                    .map_err(io)?;
                    json!({"scan": label, "visibility": v.visibility, "sigma": v.sigma})
                }
                Preset::Fig3 => {
                    let lambda = spec.source.degenerate_wavelength();
                    let b = estimate_beat_frequency(&data, lambda).map_err(numeric)?;
                    writeln!(
                        out,
                        "{label:<11} Δf = {:.3} ± {:.3} THz, Δλ = {:.3} nm",
                        b.delta_f * 1e-12,
                        b.sigma_delta_f * 1e-12,
                        b.delta_lambda * 1e9
                    )
                    .map_err(io)?;
                    json!({"scan": label, "delta_f_hz": b.delta_f, "sigma_hz": b.sigma_delta_f, "delta_lambda_m": b.delta_lambda})
                }
                Preset::Fig4 | Preset::Custom => {
                    let e = fit_envelope_center(&data).map_err(numeric)?;
                    writeln!(
                        out,
                        "{label:<11} center = {:.4} ± {:.4} mm (Δx₀ = {} mm)",
                        e.center * 1e3,
                        e.sigma * 1e3,
                        spec.source.delta_x0 * 1e3
                    )
                    .map_err(io)?;
                    json!({"scan": label, "center": e.center, "sigma": e.sigma})
                }
            };
            summary.push(entry);
        }
    }
    writeln!(out, "{}", serde_json::Value::Array(summary)).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_goes_before_extension() {
        assert_eq!(
            with_suffix(Path::new("out/a.csv"), Some("dip")),
            PathBuf::from("out/a_dip.csv")
        );
        assert_eq!(
            with_suffix(Path::new("a"), Some("peak")),
            PathBuf::from("a_peak")
        );
        assert_eq!(
            with_suffix(Path::new("a.csv"), None),
            PathBuf::from("a.csv")
        );
    }

    #[test]
    fn preset_and_stages_conflict() {
        let args = ScanArgs {
            config: None,
            preset: Some(PresetArg::Fig2a),
            counts: false,
            out: None,
            svg: None,
            seed: None,
            sign: None,
        };
        let cfg =
            parse_config(r#"{"stages": {"dx1": {"start": 0, "stop": 1, "step": 0.5}}}"#).unwrap();
        assert!(matches!(scan_specs(&args, &cfg), Err(CliError::Config(_))));
        let (_, specs) = scan_specs(&args, &RunConfig::default()).unwrap();
        assert_eq!(specs.len(), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Io(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numeric(String::new()).exit_code(), 3);
    }
}
