use std::fs;
use std::path::Path;
use std::process::Command;

use nlsfg::check::{fixture, THREE_MODE_LABELS};
use nlsfg::predict::predict;
use nlsfg::run::run;
use nlsfg::{ExperimentConfig, Method, Mode};

const SMALL: &str = r#"
mode = "compare"

[cauchy]
L = 6.0
epsilon = 1e-4
T0 = 8.0

[cauchy.coeffs]
1 = "0.5,0.0"
-1 = "0.15,-0.2"

[solver]
n_x = 64
dt = 1e-3

[grid]
n_x_out = 32
n_t_out = 41
"#;

fn small(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(SMALL, "small.toml").unwrap();
    cfg.outputs.dir = dir.to_path_buf();
    cfg
}

fn nlsfg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlsfg"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn compare_run_writes_deterministic_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut cfg = small(&a);
    cfg.outputs.gnuplot = true;
    let out = run(&cfg).unwrap();
    cfg.outputs.dir = b.clone();
    run(&cfg).unwrap();
    for name in ["field.csv", "report.json", "partition.json", "ssfm_abs.dat"] {
        let (x, y) = (
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
        );
        assert!(x == y, "{name} differs between identical runs");
    }

    let csv = fs::read_to_string(a.join("field.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,x,ssfm_re,ssfm_im,ssfm_abs,fg_full_re,fg_full_im,fg_full_abs"));
    assert_eq!(csv.lines().count(), 1 + 32 * 41);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), header.split(',').count());
    let value: f64 = row[2].parse().unwrap();
    assert_eq!(format!("{value:.16e}"), row[2]);

    let r = &out.report;
    assert_eq!(r.metrics.len(), 3);
    let m = r.metric(Method::FgFull, Method::Ssfm).unwrap();
    assert!(m.sup_norm_diff >= m.l2_diff && m.l2_diff >= 0.0);
    assert!(m.sup_norm_diff < 1e-2, "{}", m.sup_norm_diff);
    assert!(r.peak_table.windows(2).all(|w| w[0].t <= w[1].t));
    assert!(r.solver.as_ref().unwrap().max_mass_drift < 1e-10);
    let config_echo = fs::read_to_string(a.join("config.toml")).unwrap();
    let mut back = ExperimentConfig::from_toml_str(&config_echo, "echo").unwrap();
    back.outputs.dir = b;
    assert_eq!(back, cfg);
}

#[test]
fn background_interval_has_unit_modulus() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.mode = Mode::FgReduced;
    let first = predict(&cfg).unwrap().partition.boundaries[0].t;
    cfg.grid.t_range = Some([0.0, 0.9 * first]);
    let out = run(&cfg).unwrap();
    let u = &out.fields.fields[0].1.u;
    let worst = u.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn three_mode_partition_report() {
    let cfg = fixture("three_mode");
    let report = predict(&cfg).unwrap();
    let labels = report.partition.labels();
    assert_eq!(&labels[..16], &THREE_MODE_LABELS);
    assert_eq!(report.partition.intervals[0].start, 0.0);
    assert!(report.partition.intervals[0].visible.is_empty());
}

#[test]
fn prediction_examples() {
    let report = predict(&fixture("four_mode")).unwrap();
    let hit = report
        .schedule
        .iter()
        .find(|a| a.mode == 1 && (a.t - 18.76901).abs() < 1e-4);
    assert!(hit.is_some(), "{:?}", report.schedule);
    assert_eq!(report.pairwise_delays.len(), 4 * 3);
    assert!(report.schedule.windows(2).all(|w| w[0].t <= w[1].t));

    let cfg = fixture("one_mode");
    let one = predict(&cfg).unwrap();
    let m = &one.modes[0];
    assert!(one.schedule.len() >= 3);
    for (k, a) in one.schedule.iter().enumerate() {
        assert!((a.t - m.t1 - k as f64 * m.dt).abs() < 1e-9);
    }

    let mut scaled = fixture("four_mode");
    scaled.cauchy.epsilon /= 10.0;
    let base = predict(&fixture("four_mode")).unwrap();
    let shifted = predict(&scaled).unwrap();
    for (a, b) in base.modes.iter().zip(&shifted.modes) {
        assert!((b.t1 - a.t1 - 10f64.ln() / a.sigma).abs() < 1e-10);
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.toml");
    fs::write(
        &good,
        SMALL.replace("mode = \"compare\"", "mode = \"fg_full\""),
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let ok = nlsfg(&[
        "run",
        "--config",
        good.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--grid",
        "16",
        "5",
        "--gnuplot",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out_dir.join("fg_full_abs.dat").exists());
    let csv = fs::read_to_string(out_dir.join("field.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 5);

    let predicted = nlsfg(&["predict", "--config", good.to_str().unwrap()]);
    assert_eq!(predicted.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&predicted.stdout).unwrap();
    assert_eq!(json["modes"].as_array().unwrap().len(), 1);

    let missing = nlsfg(&[
        "run",
        "--config",
        tmp.path().join("nope.toml").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("L = 6.0", "L = 9.42477796076938")).unwrap();
    let rejected = nlsfg(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(rejected.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&rejected.stderr).contains("bad.toml"));

    let wrong_p = nlsfg(&["predict", "--config", good.to_str().unwrap(), "--p", "1.5"]);
    assert_eq!(wrong_p.status.code(), Some(2));

    let loud = tmp.path().join("loud.toml");
    let blowup_dir = tmp.path().join("blowup");
    fs::write(
        &loud,
        SMALL
            .replace("mode = \"compare\"", "mode = \"ssfm\"")
            .replace("epsilon = 1e-4", "epsilon = 0.9")
            .replace("\"0.5,0.0\"", "\"60.0,0.0\"")
            .replace("\"0.15,-0.2\"", "\"60.0,0.0\""),
    )
    .unwrap();
    let blown = nlsfg(&[
        "run",
        "--config",
        loud.to_str().unwrap(),
        "--out",
        blowup_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        blown.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&blown.stderr)
    );
    assert!(String::from_utf8_lossy(&blown.stderr).contains("loud.toml"));
    assert!(!blowup_dir.exists());
}
