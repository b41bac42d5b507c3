//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::{FRAC_PI_4, PI};
use std::process::{Command, ExitCode};

use franson_core::coincidence::{BiphotonSource, FringeSign};
use franson_core::counts::{
    estimate_beat_frequency, estimate_period, estimate_visibility, fit_envelope_center,
    sample_counts, sample_probabilities, CountingConfig, FitData, VisibilityModel,
};
use franson_core::optics::Branch;
use franson_core::scenarios::{
    evaluate, run_scan, stage_paths, stage_to_delays, Grid, Preset, ScanAxis, ScanSpec, StageConfig,
};
use franson_core::spectral::{SpectralKind, SpectralModel};
use franson_core::SPEED_OF_LIGHT;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sampled(spec: &ScanSpec, seed: u64) -> Result<FitData, String> {
    let scan = run_scan(spec).map_err(|e| e.to_string())?;
    let cfg = CountingConfig {
        rng_seed: seed,
        ..CountingConfig::default()
    };
    Ok(FitData::from_counts(
        &sample_counts(&scan, &cfg).map_err(|e| e.to_string())?,
    ))
}

fn exact(spec: &ScanSpec) -> Result<FitData, String> {
    Ok(FitData::from_scan(
        &run_scan(spec).map_err(|e| e.to_string())?,
    ))
}

const SEEDS: std::ops::Range<u64> = 1..21;

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for preset in Preset::ALL {
        for spec in preset.variants() {
            let scan = run_scan(&spec).map_err(|e| e.to_string())?;
            let analytic = scan.analytic().map_err(|e| e.to_string())?;
            for (p, a) in scan.probabilities.iter().zip(&analytic) {
                worst = worst.max((p - a).abs());
            }
            points += scan.len();
        }
    }
    check(
        worst <= 1e-6,
        format!("max |engine - closed form| = {worst:.1e} over {points} points (limit 1e-6)"),
    )
}

fn fig2a() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for sign in [FringeSign::Peak, FringeSign::Dip] {
        let spec = Preset::Fig2a.scan(Some(sign));
        let v_cfg = spec.source.visibility;
        let center = fit_envelope_center(&exact(&spec)?)
            .map_err(|e| e.to_string())?
            .center;
        ok &= center.abs() < 1e-9;
        let mut worst: f64 = 0.0;
        let mut first = None;
        for seed in SEEDS {
            let v = estimate_visibility(&sampled(&spec, seed)?, VisibilityModel::TrianglePeakDip)
                .map_err(|e| e.to_string())?;
            first.get_or_insert((v.visibility, v.sigma));
            worst = worst.max((v.visibility - v_cfg).abs());
        }
        ok &= worst <= 0.03;
        let (v, s) = first.unwrap();
        notes.push(format!(
            "{} V={v_cfg}: V̂ = {v:.3} ± {s:.3}, center {center:.1e} m, worst |V̂-V| {worst:.3} over {} seeds",
            sign.as_str(),
            SEEDS.count()
        ));
    }
    check(ok, notes.join("; ") + " (limit 0.03)")
}

fn fig2b() -> Outcome {
    let m1 = fit_envelope_center(&exact(&Preset::Fig2a.scan(Some(FringeSign::Peak)))?)
        .map_err(|e| e.to_string())?;
    let m2 = fit_envelope_center(&exact(&Preset::Fig2b.scan(None))?).map_err(|e| e.to_string())?;
    let ratio = m2.fwhm() / m1.fwhm();
    let s1 = fit_envelope_center(&sampled(&Preset::Fig2a.scan(Some(FringeSign::Peak)), 1)?)
        .map_err(|e| e.to_string())?;
    let s2 =
        fit_envelope_center(&sampled(&Preset::Fig2b.scan(None), 1)?).map_err(|e| e.to_string())?;
    let sampled_ratio = s2.fwhm() / s1.fwhm();
    check(
        (ratio - 2.0).abs() <= 0.05 && (sampled_ratio - 2.0).abs() <= 0.05,
        format!("FWHM ratio dx2/dx1 = {ratio:.4} noiseless, {sampled_ratio:.4} sampled (target 2.0 ± 0.05)"),
    )
}

fn fig2c() -> Outcome {
    let spec = Preset::Fig2c.scan(None);
    let target = 812.4e-9;
    let p = estimate_period(&exact(&spec)?).map_err(|e| e.to_string())?;
    let mut ok = (p.period / target - 1.0).abs() <= 0.01;
    let mut worst_v: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for seed in SEEDS {
        let s = estimate_period(&sampled(&spec, seed)?).map_err(|e| e.to_string())?;
        worst_v = worst_v.max((s.visibility - 0.91).abs());
        worst_p = worst_p.max((s.period / target - 1.0).abs());
    }
    ok &= worst_v <= 0.03 && worst_p <= 0.01;
    check(
        ok,
        format!(
            "period {:.2} nm noiseless, worst sampled period error {:.2}%, worst |V̂-0.91| {worst_v:.3} (limits 1%, 0.03)",
            p.period * 1e9,
            worst_p * 100.0
        ),
    )
}

fn fig2d() -> Outcome {
    let spec = Preset::Fig2d.scan(None);
    let v = spec.source.visibility;
    let scan = run_scan(&spec).map_err(|e| e.to_string())?;
    let aligned = evaluate(&StageConfig::default(), &spec.source)
        .map_err(|e| e.to_string())?
        .0;
    let mut curve_err: f64 = 0.0;
    for (&theta2, &p) in scan.positions.iter().zip(&scan.probabilities) {
        let law = (1.0 + v * (2.0 * (theta2 - FRAC_PI_4)).cos()) / (1.0 + v);
        curve_err = curve_err.max((p / aligned - law).abs());
    }
    let mut worst: f64 = 0.0;
    for seed in SEEDS {
        let est = estimate_visibility(&sampled(&spec, seed)?, VisibilityModel::PolarizationCurve)
            .map_err(|e| e.to_string())?;
        worst = worst.max((est.visibility - v).abs());
    }
    check(
        curve_err <= 1e-9 && worst <= 0.02,
        format!("curve error {curve_err:.1e} (limit 1e-9), worst sampled |V̂-0.94| {worst:.4} (limit 0.02)"),
    )
}

fn fig3() -> Outcome {
    let target = 0.69e12;
    let mut notes = Vec::new();
    let mut ok = true;
    for sign in [FringeSign::Peak, FringeSign::Dip] {
        let spec = Preset::Fig3.scan(Some(sign));
        let lambda = spec.source.degenerate_wavelength();
        let b = estimate_beat_frequency(&exact(&spec)?, lambda).map_err(|e| e.to_string())?;
        let rel = (b.delta_f / target - 1.0).abs();
        let mut worst: f64 = 0.0;
        for seed in SEEDS {
            let s = estimate_beat_frequency(&sampled(&spec, seed)?, lambda)
                .map_err(|e| e.to_string())?;
            worst = worst.max((s.delta_f - target).abs());
        }
        ok &= rel <= 0.01 && worst <= 0.01e12;
        notes.push(format!(
            "{}: Δf = {:.4} THz noiseless ({:.2}% off 0.69), Δλ = {:.3} nm, worst sampled |Δf-0.69| = {:.4} THz",
            sign.as_str(),
            b.delta_f * 1e-12,
            rel * 100.0,
            b.delta_lambda * 1e9,
            worst * 1e-12
        ));
    }
    check(ok, notes.join("; ") + " (limits 1%, 0.01 THz)")
}

fn fig4() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for sign in [FringeSign::Peak, FringeSign::Dip] {
        let spec = Preset::Fig4.scan(Some(sign));
        let e = fit_envelope_center(&exact(&spec)?).map_err(|e| e.to_string())?;
        ok &= (e.center - 1e-3).abs() <= spec.grid.step;
        notes.push(format!("{} center {:.6} mm", sign.as_str(), e.center * 1e3));
    }
    let dx0 = 1e-3;
    let apex = stage_to_delays(&StageConfig {
        dx0,
        dx1: dx0,
        ..StageConfig::default()
    });
    let diff = apex.long_arm_l - apex.long_arm_u;
    ok &= (diff - 2.0 * dx0).abs() <= 1e-15;
    notes.push(format!("apex long-arm difference {:.6} mm", diff * 1e3));

    let source = Preset::Fig4.source(Some(FringeSign::Peak));
    let theta_scan = |dx1: f64| -> Result<f64, String> {
        let spec = ScanSpec {
            preset: Preset::Custom,
            axis: ScanAxis::Theta2,
            grid: Grid::centered(PI / 2.0, PI, 101),
            fixed: StageConfig {
                dx0,
                dx1,
                ..StageConfig::default()
            },
            source,
            sign: None,
        };
        Ok(
            estimate_visibility(&exact(&spec)?, VisibilityModel::PolarizationCurve)
                .map_err(|e| e.to_string())?
                .visibility,
        )
    };
    let degraded = theta_scan(0.0)?;
    let recovered = theta_scan(dx0)?;
    ok &= degraded < 1e-6 && (recovered - source.visibility).abs() < 1e-6;
    notes.push(format!(
        "θ₂-scan V at dx1=0: {degraded:.1e}, at dx1=dx0: {recovered:.6}"
    ));
    check(ok, notes.join("; "))
}

fn structural() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pump = 406.2e-9;

    // Path count and RR phase under M1 motion.
    let k = 2.0 * PI / (2.0 * pump);
    let rr = |cfg: &StageConfig| -> Result<(usize, f64), String> {
        let paths = stage_paths(cfg).map_err(|e| e.to_string())?;
        let rr = paths
            .iter()
            .find(|p| p.branch_u == Branch::Long && p.branch_l == Branch::Long)
            .ok_or("no RR path")?;
        Ok((paths.len(), rr.propagation_phase(k)))
    };
    let (_, rr0) = rr(&StageConfig::default())?;
    for _ in 0..1000 {
        let cfg = StageConfig {
            dx1: rng.random_range(-3e-3..3e-3),
            ..StageConfig::default()
        };
        let (n, phase) = rr(&cfg)?;
        if n != 2 {
            failures.push(format!("{n} paths"));
        }
        if phase != rr0 {
            failures.push(format!("RR phase moved at dx1 = {:e}", cfg.dx1));
        }
    }

    let degenerate = |v: f64| {
        BiphotonSource::degenerate(
            pump,
            SpectralModel::sinc_squared(200e-6 / SPEED_OF_LIGHT).unwrap(),
            v,
        )
        .unwrap()
    };
    let s = degenerate(0.92);
    let p = |cfg: &StageConfig, s: &BiphotonSource| {
        evaluate(cfg, s).map(|r| r.0).map_err(|e| e.to_string())
    };

    // Probability bounds and complementarity over randomized configurations.
    let kinds = [
        SpectralKind::SincSquared,
        SpectralKind::Gaussian,
        SpectralKind::RectangularDensity,
    ];
    let mut worst_comp: f64 = 0.0;
    for _ in 0..10_000 {
        let spectral = SpectralModel::new(
            kinds[rng.random_range(0..3)],
            rng.random_range(1e-6..3e-3) / SPEED_OF_LIGHT,
        )
        .unwrap();
        let v = rng.random_range(0.0..=1.0);
        let source = if rng.random_bool(0.5) {
            BiphotonSource::degenerate(pump, spectral, v).unwrap()
        } else {
            BiphotonSource::nondegenerate(pump, rng.random_range(0.0..5e-9), spectral, v).unwrap()
        };
        let mut cfg = StageConfig {
            dx0: rng.random_range(-2e-3..2e-3),
            dx1: rng.random_range(-2e-3..2e-3),
            dx2: rng.random_range(-2e-3..2e-3),
            dx3: rng.random_range(-2e-3..2e-3),
            theta1: rng.random_range(-PI..PI),
            theta2: rng.random_range(-PI..PI),
            geometry_factor: rng.random_range(0.5..2.5),
        };
        let value = p(&cfg, &source)?;
        if !(0.0..=1.0).contains(&value) {
            failures.push(format!("P = {value} out of [0,1]"));
        }
        cfg.theta1 = FRAC_PI_4;
        cfg.theta2 = FRAC_PI_4;
        let plus = p(&cfg, &source)?;
        cfg.theta2 = -FRAC_PI_4;
        let minus = p(&cfg, &source)?;
        worst_comp = worst_comp.max((plus + minus - 1.0).abs());
    }
    if worst_comp > 1e-15 {
        failures.push(format!("P+ + P- - 1 = {worst_comp:e}"));
    }

    // M1 scan against the pure-envelope law.
    let mut worst_m1: f64 = 0.0;
    for i in -200..=200 {
        let dx1 = i as f64 * 0.77e-6;
        for (theta2, sign) in [(FRAC_PI_4, 1.0), (-FRAC_PI_4, -1.0)] {
            let cfg = StageConfig {
                dx1,
                theta2,
                ..StageConfig::default()
            };
            let law = 0.5 * (1.0 + sign * 0.92 * (1.0 - 2.0 * dx1.abs() / 200e-6).max(0.0));
            worst_m1 = worst_m1.max((p(&cfg, &s)? - law).abs());
        }
    }
    if worst_m1 > 1e-12 {
        failures.push(format!(
            "M1 scan deviates from envelope law by {worst_m1:e}"
        ));
    }

    // Envelope parity and the dx0 shift identity.
    let mut worst_id: f64 = 0.0;
    for kind in kinds {
        let m = SpectralModel::new(kind, 0.5e-12).unwrap();
        for i in 0..100 {
            let tau = i as f64 * 0.013e-12;
            worst_id =
                worst_id.max((m.correlation_envelope(tau) - m.correlation_envelope(-tau)).abs());
        }
    }
    for _ in 0..500 {
        let dx0 = rng.random_range(-2e-3..2e-3);
        let d = rng.random_range(-150e-6..150e-6);
        let a = p(
            &StageConfig {
                dx0,
                dx1: dx0 + d,
                ..StageConfig::default()
            },
            &s,
        )?;
        let b = p(
            &StageConfig {
                dx1: d,
                ..StageConfig::default()
            },
            &s,
        )?;
        worst_id = worst_id.max((a - b).abs());
    }
    if worst_id > 1e-9 {
        failures.push(format!("parity/shift identity off by {worst_id:e}"));
    }

    if failures.is_empty() {
        Ok(format!(
            "2 paths and fixed RR phase over 1000 M1 positions; 10^4 random configs in [0,1]; |P+ + P- - 1| <= {worst_comp:.1e}; M1 law {worst_m1:.1e}; parity/shift {worst_id:.1e}"
        ))
    } else {
        failures.truncate(5);
        Err(failures.join("; "))
    }
}

fn statistics() -> Outcome {
    let n = 10_000;
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for (p, seed) in [(0.5, 10), (1.0, 11)] {
        let cfg = CountingConfig {
            rng_seed: seed,
            ..CountingConfig::default()
        };
        let recs = sample_probabilities(&x, &vec![p; n], &cfg).map_err(|e| e.to_string())?;
        let counts: Vec<f64> = recs.iter().map(|r| r.counts as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let expected = cfg.rate(p) * cfg.bin_duration;
        let bound = 5.0 * (expected / n as f64).sqrt();
        ok &= (mean - expected).abs() <= bound && (0.9..=1.1).contains(&(var / mean));
        notes.push(format!(
            "P={p}: mean {mean:.2} vs {expected} (±{bound:.2}), var/mean {:.3}",
            var / mean
        ));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["run1.csv", "run2.csv"] {
        let status = Command::new(env!("CARGO_BIN_EXE_franson"))
            .current_dir(dir.path())
            .args([
                "scan", "--preset", "fig3", "--sign", "peak", "--counts", "--seed", "42", "--out",
                name,
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
    }
    let identical = outputs[0] == outputs[1];
    ok &= identical;
    notes.push(format!("two seeded CSV runs bit-identical: {identical}"));
    check(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence on all preset grids", oracle_equivalence),
        ("fig2a triangle peak/dip visibilities", fig2a),
        ("fig2b envelope twice as wide", fig2b),
        ("fig2c PZT fringe period and visibility", fig2c),
        ("fig2d polarization correlation", fig2d),
        ("fig3 beat frequency", fig3),
        ("fig4 delayed compensation", fig4),
        ("structural invariants", structural),
        ("counting statistics and determinism", statistics),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("acceptance {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
