use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use qkdnet::linkmodel::{max_distance, predict_rates, Cutoff, LinkParams, SourceParams};
use qkdnet::photonics::{pmd_visibility_ceiling, PmdParams};
use qkdnet_cli::{run, Cli, MANIFEST_FILE};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn cli(args: &[&str]) -> anyhow::Result<String> {
    let mut argv = vec!["qkdnet"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv)?)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    read(p)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(header_line: &str, name: &str) -> usize {
    header_line.split(',').position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

/// Baseline source and link for one pair at 0 km with a short duration.
fn short_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "[source]\nmu = 0.0035\nf_rep_hz = 78e6\nd = 4.4e-6\nb = 0.06\n\n\
         [link]\neta_coll = 0.05\neta_det = 0.20\nalpha_db_per_km = 0.22\nlength_km = 0.0\n\n\
         [sim]\nduration_s = 20.0\nseed = 11\n{extra}"
    );
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest_files(dir: &Path) -> Vec<(String, String)> {
    let v: serde_json::Value = serde_json::from_str(&read(&dir.join(MANIFEST_FILE))).unwrap();
    v["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn simulate_writes_eight_histograms_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli(&["simulate", "--config", s(&cfg), "--out", s(&a)]).unwrap();
    cli(&["simulate", "--config", s(&cfg), "--out", s(&b)]).unwrap();
    let files = manifest_files(&a);
    assert_eq!(files.len(), 8);
    assert!(files.iter().all(|(p, _)| p.starts_with("23-27_0km/hist_")));
    assert_eq!(files, manifest_files(&b));
    for (p, _) in &files {
        assert_eq!(std::fs::read(a.join(p)).unwrap(), std::fs::read(b.join(p)).unwrap());
    }

    let c = tmp.path().join("c");
    cli(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "12"]).unwrap();
    assert_ne!(files, manifest_files(&c));
}

#[test]
fn invalid_config_names_key_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "");
    let text = read(&cfg).replace("mu = 0.0035", "mu = -0.1");
    std::fs::write(&cfg, text).unwrap();
    let err = format!("{:#}", cli(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]).unwrap_err());
    assert!(err.contains("source.mu"), "{err}");
    assert!(err.contains("run.toml"), "{err}");
    assert!(err.contains(":2") || err.contains("line 2"), "{err}");
}

#[test]
fn analyze_reads_simulated_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "");
    let sim = tmp.path().join("sim");
    cli(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).unwrap();
    cli(&["analyze", s(&sim)]).unwrap();
    let metrics = sim.join("analysis/metrics.csv");
    let rows = csv_rows(&metrics);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "23-27");
    assert!(manifest_files(&sim.join("analysis")).iter().any(|(p, _)| p == "metrics.csv"));

    // a single run directory works too, and a second analysis is not picked up as a run
    let out = tmp.path().join("single");
    cli(&["analyze", s(&sim.join("23-27_0km")), "--out", s(&out), "--peak-bins", "7"]).unwrap();
    cli(&["analyze", s(&sim)]).unwrap();
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 1);
}

#[test]
fn analyze_reports_corrupt_and_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "");
    let sim = tmp.path().join("sim");
    cli(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).unwrap();
    let run = sim.join("23-27_0km");

    let target = run.join("hist_pp.csv");
    let original = read(&target);
    let mut lines: Vec<String> = original.lines().map(str::to_string).collect();
    lines[14] = "13,-164,x".into();
    std::fs::write(&target, lines.join("\n")).unwrap();
    let err = format!("{:#}", cli(&["analyze", s(&sim)]).unwrap_err());
    assert!(err.contains("hist_pp.csv") && err.contains("15"), "{err}");

    std::fs::write(&target, original).unwrap();
    std::fs::remove_file(run.join("hist_mm.csv")).unwrap();
    std::fs::remove_file(run.join("hist_11.csv")).unwrap();
    let err = format!("{:#}", cli(&["analyze", s(&sim)]).unwrap_err());
    assert!(err.contains("11") && err.contains("--"), "{err}");
}

#[test]
fn four_pair_plan_gives_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let text = read(&data("four_pairs.toml")).replace("duration_s = 180.0", "duration_s = 10.0");
    let cfg = tmp.path().join("four.toml");
    std::fs::write(&cfg, text).unwrap();
    let sim = tmp.path().join("sim");
    cli(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).unwrap();
    cli(&["analyze", s(&sim), "--config", s(&cfg)]).unwrap();
    let rows = csv_rows(&sim.join("analysis/metrics.csv"));
    let pairs: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(pairs, ["21-29", "22-28", "23-27", "24-26"]);
    // independent streams per pair
    assert_ne!(rows[0][2..], rows[1][2..]);
}

#[test]
fn scan_records_cutoff() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scan");
    cli(&["scan", "--out", s(&out), "--max-km", "100", "--step-km", "5"]).unwrap();
    let text = read(&out.join("scan_baseline.csv"));
    let cutoff: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# cutoff_total_km="))
        .unwrap()
        .parse()
        .unwrap();
    let Cutoff::Finite(expected) = max_distance(&SourceParams::baseline(), &LinkParams::baseline(), 1.17).unwrap() else {
        panic!("no cutoff")
    };
    assert!((cutoff - expected).abs() < 1e-9);
    assert_eq!(csv_rows(&out.join("scan_baseline.csv")).len(), 21);
    assert!(out.join("scan_improved.csv").exists());

    let one = tmp.path().join("one");
    cli(&["scan", "--config", s(&data("presets.toml")), "--preset", "improved", "--grid", "40", "--out", s(&one)])
        .unwrap();
    let rows = csv_rows(&one.join("scan_improved.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "40");
    assert!(!one.join("scan_baseline.csv").exists());
    assert!(cli(&["scan", "--preset", "nope", "--out", s(&one)]).is_err());
}

fn calibrated(out: &Path) -> qkdnet::ScenarioPreset {
    let mut presets = qkdnet::config::load_presets(&out.join("calibration.toml")).unwrap();
    assert_eq!(presets.len(), 1);
    presets.remove(0)
}

#[test]
fn calibrate_measured_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cal");
    let summary = cli(&["calibrate", "--config", s(&data("measured_23-27.toml")), "--out", s(&out)]).unwrap();
    assert!(!summary.contains("warning"));
    let p = calibrated(&out);
    assert!((p.source.mu / 0.0035 - 1.0).abs() < 0.05, "{}", p.source.mu);
    assert!((p.source.b - 0.0665).abs() < 0.01, "{}", p.source.b);
    assert_eq!(p.source.f_rep_hz, 78e6);
    assert!(read(&out.join("calibration.toml")).contains("# mu_far"));
}

#[test]
fn calibrate_round_trips_synthetic_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let src = SourceParams::new(0.0042, 78e6, 3e-6, 0.04).unwrap();
    let link = LinkParams::baseline();
    let p = predict_rates(&src, &link, 1.17);
    let text = format!(
        "[measured]\nr_sift_near = {:?}\nr_false_near = {:?}\nv_tot_near = {:?}\n\n\
         [source]\nf_rep_hz = 78e6\n\n[link]\neta_coll = 0.05\neta_det = 0.20\nalpha_db_per_km = 0.22\n",
        p.r_sift,
        p.measured_false_rate(),
        p.visibility()
    );
    let input = tmp.path().join("m.toml");
    std::fs::write(&input, text).unwrap();
    let out = tmp.path().join("cal");
    cli(&["calibrate", "--config", s(&input), "--out", s(&out), "--f-ec", "1.2"]).unwrap();
    let c = calibrated(&out);
    assert!((c.source.mu / src.mu - 1.0).abs() < 1e-6);
    assert!((c.source.b / src.b - 1.0).abs() < 1e-6);
    assert!((c.source.d / src.d - 1.0).abs() < 1e-6);
    assert_eq!(c.f_ec, 1.2);
}

#[test]
fn calibrate_warns_above_pmd_ceiling() {
    let tmp = tempfile::tempdir().unwrap();
    let text = read(&data("measured_23-27.toml")).replace("v_tot_near = 0.867", "v_tot_near = 0.95");
    let input = tmp.path().join("m.toml");
    std::fs::write(&input, text).unwrap();
    let out = tmp.path().join("cal");
    let summary = cli(&["calibrate", "--config", s(&input), "--out", s(&out)]).unwrap();
    assert!(summary.contains("warning"));
    assert!(read(&out.join("calibration.toml")).contains("# warning:"));
    calibrated(&out);
}

#[test]
fn pmd_triple_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli(&["pmd", "--out", s(&a)]).unwrap();
    cli(&["pmd", "--config", s(&data("measured_23-27.toml")), "--out", s(&b)]).unwrap();
    assert_eq!(read(&a.join("pmd.csv")), read(&b.join("pmd.csv")));
    let row: Vec<f64> = csv_rows(&a.join("pmd.csv"))[0].iter().map(|v| v.parse().unwrap()).collect();
    let c = pmd_visibility_ceiling(&PmdParams::new(3.0, 5e-3, 1.55e-6).unwrap());
    assert_eq!(row, vec![c.tau_pmd_ps, c.overlap, c.v_max]);
    assert!(cli(&["pmd", "--beat-length-m", "0", "--out", s(&a)]).is_err());
}

#[test]
fn tuning_degenerate_line_at_twice_pump() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    cli(&["tuning", "--config", s(&data("index_model_synthetic.toml")), "--pump-nm", "775,779,781", "--out", s(&out)]).unwrap();
    let text = read(&out.join("tuning.csv"));
    let header = text.lines().next().unwrap();
    assert_eq!(header, qkdnet_cli::TUNING_CSV_HEADER);
    let rows = csv_rows(&out.join("tuning.csv"));
    assert_eq!(rows.len(), 6);
    let (ip, ia, ib) = (column(header, "pump_nm"), column(header, "lambda_a_nm"), column(header, "lambda_b_nm"));
    for r in &rows {
        let pump: f64 = r[ip].parse().unwrap();
        let la: f64 = r[ia].parse().unwrap();
        let lb: f64 = r[ib].parse().unwrap();
        assert!((la - 2.0 * pump).abs() < 1e-5, "{la} vs {pump}");
        assert!((lb - 2.0 * pump).abs() < 1e-5, "{lb} vs {pump}");
    }
}

#[test]
fn report_agrees_with_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    cli(&["report", "--config", s(&data("baseline.toml")), "--out", s(&out)]).unwrap();
    let text = read(&out.join("report.csv"));
    let header = text.lines().next().unwrap();
    let rows = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 2);
    for q in ["r_sift", "qber", "r_key"] {
        let (i, is, im) = (column(header, q), column(header, &format!("{q}_sigma")), column(header, &format!("model_{q}")));
        for r in &rows {
            let (m, sd, model): (f64, f64, f64) = (r[i].parse().unwrap(), r[is].parse().unwrap(), r[im].parse().unwrap());
            assert!((m - model).abs() < 3.0 * sd, "{q} at {} km: {m} +- {sd} vs {model}", r[1]);
        }
    }
    assert_eq!(manifest_files(&out).len(), 17);
}

#[test]
fn binary_exits_non_zero_on_error() {
    let exe = env!("CARGO_BIN_EXE_qkdnet");
    let tmp = tempfile::tempdir().unwrap();
    let bad = Process::new(exe)
        .args(["simulate", "--config", "/nonexistent/run.toml", "--out", s(tmp.path())])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let ok = Process::new(exe).args(["pmd", "--out", s(tmp.path())]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("V_max"));
}
