use std::path::Path;
use std::process::{Command, Output};

use franson_cli::output::read_csv;
use serde_json::Value;

fn franson(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_franson"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("output")).expect("json line")
}

fn rows(path: &Path) -> Vec<franson_cli::output::Row> {
    read_csv(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn fig2a_writes_peak_and_dip() {
    let dir = tempfile::tempdir().unwrap();
    let out = franson(dir.path(), &["scan", "--preset", "fig2a", "--out", "a.csv"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dip = rows(&dir.path().join("a_dip.csv"));
    let min = dip
        .iter()
        .min_by(|a, b| a.probability.total_cmp(&b.probability))
        .unwrap();
    assert_eq!(min.position, 0.0);
    assert!((min.probability - 0.5 * (1.0 - 0.93)).abs() < 1e-12);
    assert!(dip.iter().all(|r| r.counts.is_none()));
    let peak = rows(&dir.path().join("a_peak.csv"));
    assert_eq!(peak.len(), 201);
}

#[test]
fn fig2d_follows_analyzer_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = franson(
        dir.path(),
        &[
            "scan", "--preset", "fig2d", "--out", "d.csv", "--svg", "d.svg",
        ],
    );
    assert!(out.status.success());
    for r in rows(&dir.path().join("d.csv")) {
        let law = 0.5 * (1.0 + 0.94 * (2.0 * (r.position - std::f64::consts::FRAC_PI_4)).cos());
        assert!((r.probability - law).abs() < 1e-12);
    }
    let svg = std::fs::read_to_string(dir.path().join("d.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn counts_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x.csv", "y.csv"] {
        let out = franson(
            dir.path(),
            &[
                "scan", "--preset", "fig3", "--sign", "peak", "--counts", "--seed", "11", "--out",
                name,
            ],
        );
        assert!(out.status.success());
    }
    let x = std::fs::read(dir.path().join("x.csv")).unwrap();
    assert_eq!(x, std::fs::read(dir.path().join("y.csv")).unwrap());
    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig3", "--sign", "peak", "--counts", "--seed", "12", "--out",
            "z.csv",
        ],
    );
    assert_ne!(x, std::fs::read(dir.path().join("z.csv")).unwrap());
    assert!(rows(&dir.path().join("x.csv"))
        .iter()
        .all(|r| r.counts.is_some()));
}

#[test]
fn scan_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig2a", "--sign", "peak", "--counts", "--seed", "3", "--out",
            "a.csv",
        ],
    );
    let out = franson(dir.path(), &["fit", "--in", "a.csv", "--model", "hom"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_line(&out)["visibility"].as_f64().unwrap();
    assert!((v - 0.92).abs() < 0.03, "{v}");

    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig3", "--sign", "dip", "--counts", "--seed", "3", "--out",
            "b.csv",
        ],
    );
    let out = franson(dir.path(), &["fit", "--in", "b.csv", "--model", "beat"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let j = json_line(&out);
    assert!((j["delta_f_hz"].as_f64().unwrap() - 0.69e12).abs() < 0.01e12);
    assert!((j["delta_lambda_m"].as_f64().unwrap() - 1.52e-9).abs() < 0.03e-9);

    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig4", "--sign", "peak", "--out", "c.csv",
        ],
    );
    let out = franson(dir.path(), &["fit", "--in", "c.csv", "--model", "envelope"]);
    assert!((json_line(&out)["center"].as_f64().unwrap() - 1e-3).abs() < 1.5e-6);

    franson(
        dir.path(),
        &["scan", "--preset", "fig2c", "--counts", "--out", "e.csv"],
    );
    let out = franson(dir.path(), &["fit", "--in", "e.csv", "--model", "fringe"]);
    assert!((json_line(&out)["period"].as_f64().unwrap() / 812.4e-9 - 1.0).abs() < 0.01);
}

#[test]
fn flat_data_fit_reports_no_feature() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"source": {"dx0_mm": 5}, "stages": {"dx1": {"start": -150, "stop": 150, "step": 1.5}}}"#;
    std::fs::write(dir.path().join("flat.json"), config).unwrap();
    let out = franson(
        dir.path(),
        &[
            "scan",
            "--config",
            "flat.json",
            "--counts",
            "--out",
            "flat.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = franson(dir.path(), &["fit", "--in", "flat.csv", "--model", "hom"]);
    match out.status.code() {
        Some(3) => assert!(String::from_utf8_lossy(&out.stderr).contains("fit diverged")),
        Some(0) => {
            let j = json_line(&out);
            assert!(
                j["visibility"].as_f64().unwrap() <= 2.0 * j["sigma_visibility"].as_f64().unwrap()
            );
        }
        other => panic!("exit {other:?}"),
    }
}

#[test]
fn accidentals_reported_raw_and_subtracted() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("acc.json"),
        r#"{"counting": {"accidental_rate_hz": 400, "seed": 5}}"#,
    )
    .unwrap();
    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig2d", "--config", "acc.json", "--counts", "--out", "p.csv",
        ],
    );
    let out = franson(
        dir.path(),
        &[
            "fit",
            "--in",
            "p.csv",
            "--model",
            "polarization",
            "--config",
            "acc.json",
        ],
    );
    let j = json_line(&out);
    let raw = j["visibility"].as_f64().unwrap();
    let sub = j["visibility_subtracted"].as_f64().unwrap();
    assert!(raw < 0.9 && (sub - 0.94).abs() < 0.02, "{raw} {sub}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("v.json"),
        r#"{"source": {"visibility": 1.3}}"#,
    )
    .unwrap();
    let out = franson(dir.path(), &["scan", "--config", "v.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("visibility must be in [0,1]"));

    std::fs::write(dir.path().join("k.json"), r#"{"stages": {"dx9": 1}}"#).unwrap();
    let out = franson(dir.path(), &["scan", "--config", "k.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dx9"));

    assert_eq!(franson(dir.path(), &["scan"]).status.code(), Some(1));
    assert_eq!(
        franson(dir.path(), &["scan", "--preset", "fig9"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        franson(dir.path(), &["scan", "--preset", "fig2d", "--sign", "dip"])
            .status
            .code(),
        Some(1)
    );

    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n").unwrap();
    let out = franson(dir.path(), &["fit", "--in", "bad.csv", "--model", "hom"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        franson(dir.path(), &["scan", "--config", "missing.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        franson(
            dir.path(),
            &["fit", "--in", "missing.csv", "--model", "hom"]
        )
        .status
        .code(),
        Some(2)
    );
    let out = franson(
        dir.path(),
        &["scan", "--preset", "fig2c", "--out", "no/such/dir/x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_beat_fit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    franson(
        dir.path(),
        &[
            "scan", "--preset", "fig2a", "--sign", "peak", "--out", "a.csv",
        ],
    );
    let out = franson(dir.path(), &["fit", "--in", "a.csv", "--model", "beat"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no beat detected"));
}

#[test]
fn report_lists_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = franson(dir.path(), &["report", "--seed", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json_line(&out);
    assert_eq!(summary.as_array().unwrap().len(), 9);
}
