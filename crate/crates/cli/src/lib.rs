//! Command implementations behind the `qkdnet` binary.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! Outputs depend only on the inputs and the seed, so re-runs are
//! byte-identical; the manifest alone carries a timestamp.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qkdnet::analysis::{full_metrics, report_csv, HistogramSet, LinkMetrics, PeakSpec, ReportRow};
use qkdnet::config::{default_peak_window_bins, load_presets, run_dir_name, AnalysisSettings, CalibrationInput, RunConfig};
use qkdnet::linkmodel::{calibrate, distance_scan, max_distance, predict_rates, scan_to_csv, Cutoff, ScenarioPreset};
use qkdnet::photonics::{
    pmd_visibility_ceiling_with, tuning_curves, GaussianResponse, IndexModel, PmdParams, TuningOptions,
};
use qkdnet::qkd::DEFAULT_F_EC;
use qkdnet::simulator::simulate_run;

pub use manifest::{OutputDir, RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "qkdnet", version, about = "Entanglement-based multi-user QKD: model, simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate coincidence histograms for every pair and length in a run config.
    Simulate(SimulateArgs),
    /// Reduce histogram directories to a metrics report.
    Analyze(AnalyzeArgs),
    /// Key rate and QBER against distance for scenario presets.
    Scan(ScanArgs),
    /// Estimate source parameters from measured rates.
    Calibrate(CalibrateArgs),
    /// PMD visibility ceiling of the polarization-maintaining pigtails.
    Pmd(PmdArgs),
    /// Phase-matching tuning curves from an index model.
    Tuning(TuningArgs),
    /// Simulate, analyze and compare against the analytic model.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// A run directory of `hist_*.csv` files, or a directory of run directories.
    pub input: PathBuf,
    /// Run configuration supplying the `[analysis]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to `<input>/analysis`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub f_ec: Option<f64>,
    /// Peak window width in bins (odd); defaults by fiber length.
    #[arg(long)]
    pub peak_bins: Option<usize>,
    #[arg(long)]
    pub guard_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Preset file with `[[scenario]]` tables; built-in presets otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Only this scenario.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub f_ec: Option<f64>,
    /// Explicit total distances in km, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 300.0)]
    pub max_km: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step_km: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measured-rates file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    /// Written into the resulting scenario block.
    #[arg(long)]
    pub f_ec: Option<f64>,
    #[arg(long, default_value = "calibrated")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct PmdArgs {
    /// TOML file with a `[pmd]` table; flags are used otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    pub fiber_length_m: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub beat_length_m: f64,
    #[arg(long, default_value_t = 1.55e-6)]
    pub wavelength_m: f64,
    /// Spectral FWHM of the channel filters.
    #[arg(long, default_value_t = 100.0)]
    pub fwhm_ghz: f64,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Index-model file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    /// Pump wavelengths in nm, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "779")]
    pub pump_nm: Vec<f64>,
    /// Search band for Alice's photon, `lo,hi` in nm.
    #[arg(long, value_delimiter = ',', default_value = "1500,1620")]
    pub band_nm: Vec<f64>,
    #[arg(long, default_value_t = 2001)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "qkdnet-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub f_ec: Option<f64>,
}

/// Runs one command; the returned text is the console summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Scan(a) => scan(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::Pmd(a) => pmd(&a),
        Command::Tuning(a) => tuning(&a),
        Command::Report(a) => report(&a),
    }
}

fn load_run_config(path: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn check_f_ec(f_ec: f64) -> Result<f64> {
    if !(f_ec >= 1.0 && f_ec.is_finite()) {
        bail!("--f-ec must be >= 1, got {f_ec}");
    }
    Ok(f_ec)
}

/// Simulates every job of a config into `<out>/<pair>_<km>km/`; returns the
/// run directory names in job order.
fn simulate_into(cfg: &RunConfig, seed: Option<u64>, out: &mut OutputDir) -> Result<Vec<String>> {
    let mut dirs = Vec::new();
    for job in cfg.jobs(seed) {
        let dir = run_dir_name(&job.pair, job.total_km());
        for h in simulate_run(&job)? {
            out.write(&format!("{dir}/{}", h.file_name()), &h.to_csv())?;
        }
        dirs.push(dir);
    }
    Ok(dirs)
}

pub fn simulate(a: &SimulateArgs) -> Result<String> {
    let cfg = load_run_config(&a.config)?;
    let mut out = OutputDir::create(&a.out)?;
    let dirs = simulate_into(&cfg, a.seed, &mut out)?;
    let n = out.files().len();
    out.finish("simulate", Some(&a.config), a.seed)?;
    Ok(format!("wrote {n} histograms in {} run directories to {}", dirs.len(), a.out.display()))
}

fn is_histogram(p: &Path) -> bool {
    p.is_file()
        && p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("hist_") && n.ends_with(".csv"))
}

fn has_histograms(dir: &Path) -> Result<bool> {
    Ok(std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .any(|e| is_histogram(&e.path())))
}

/// Run directories under `input`, sorted by name.
fn discover_runs(input: &Path) -> Result<Vec<PathBuf>> {
    if has_histograms(input)? {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut runs = Vec::new();
    for e in std::fs::read_dir(input).with_context(|| format!("reading {}", input.display()))? {
        let p = e?.path();
        if p.is_dir() && has_histograms(&p)? {
            runs.push(p);
        }
    }
    runs.sort();
    if runs.is_empty() {
        bail!("no hist_*.csv files under {}", input.display());
    }
    Ok(runs)
}

struct AnalyzedRun {
    label: String,
    total_km: f64,
    metrics: LinkMetrics,
}

fn analyze_set(set: &HistogramSet, settings: &AnalysisSettings, peak_bins: Option<usize>, f_ec: f64) -> Result<LinkMetrics> {
    let total_km = set.total_km().unwrap_or(0.0);
    let mut spec: PeakSpec = settings.peak_spec(total_km / 2.0);
    if let Some(w) = peak_bins {
        spec.peak_window_bins = w;
    } else if settings.peak_window_bins.is_none() {
        spec.peak_window_bins = default_peak_window_bins(total_km / 2.0);
    }
    Ok(full_metrics(set, &spec, f_ec)?)
}

fn report_rows(runs: &[AnalyzedRun]) -> Vec<ReportRow> {
    runs.iter()
        .map(|r| ReportRow {
            channel_pair: r.label.clone(),
            total_km: r.total_km,
            metrics: r.metrics,
        })
        .collect()
}

pub fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let mut settings = match &a.config {
        Some(p) => load_run_config(p)?.analysis,
        None => AnalysisSettings {
            f_ec: DEFAULT_F_EC,
            guard_bins: 2,
            peak_window_bins: None,
        },
    };
    if let Some(g) = a.guard_bins {
        settings.guard_bins = g;
    }
    let f_ec = check_f_ec(a.f_ec.unwrap_or(settings.f_ec))?;
    let mut runs = Vec::new();
    for dir in discover_runs(&a.input)? {
        let set = HistogramSet::read_dir(&dir)?;
        let metrics = analyze_set(&set, &settings, a.peak_bins, f_ec)
            .with_context(|| format!("analyzing {}", dir.display()))?;
        let label = set
            .channel_pair()
            .map(|p| p.label())
            .unwrap_or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        runs.push(AnalyzedRun {
            label,
            total_km: set.total_km().unwrap_or(0.0),
            metrics,
        });
    }
    let out_dir = a.out.clone().unwrap_or_else(|| a.input.join("analysis"));
    let mut out = OutputDir::create(&out_dir)?;
    out.write("metrics.csv", &report_csv(&report_rows(&runs)))?;
    out.finish("analyze", a.config.as_deref(), None)?;
    let mut summary = String::new();
    for r in &runs {
        let m = &r.metrics;
        let _ = writeln!(
            summary,
            "{} @ {} km: R_sift = {:.3} ± {:.3} /s, QBER = {:.4} ± {:.4}, R_key = {:.3} ± {:.3} bit/s",
            r.label,
            r.total_km,
            m.r_sift.value,
            m.r_sift.sigma,
            m.qber.value,
            m.qber.sigma,
            m.r_key.value.max(0.0),
            m.r_key.sigma
        );
    }
    let _ = write!(summary, "wrote {}", out_dir.join("metrics.csv").display());
    Ok(summary)
}

fn scan_grid(a: &ScanArgs) -> Result<Vec<f64>> {
    if let Some(g) = &a.grid {
        if g.is_empty() || g.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            bail!("--grid must list non-negative distances");
        }
        return Ok(g.clone());
    }
    if !(a.step_km > 0.0) || !(a.max_km >= 0.0) {
        bail!("--step-km must be > 0 and --max-km >= 0");
    }
    let n = (a.max_km / a.step_km + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * a.step_km).collect())
}

pub fn scan(a: &ScanArgs) -> Result<String> {
    let mut presets = match &a.config {
        Some(p) => load_presets(p)?,
        None => ScenarioPreset::builtin(),
    };
    if let Some(name) = &a.preset {
        presets.retain(|p| &p.name == name);
        if presets.is_empty() {
            bail!("no scenario named `{name}`");
        }
    }
    let grid = scan_grid(a)?;
    let mut out = OutputDir::create(&a.out)?;
    let mut summary = String::new();
    for p in &presets {
        let f_ec = check_f_ec(a.f_ec.unwrap_or(p.f_ec))?;
        let cutoff = max_distance(&p.source, &p.link, f_ec).with_context(|| format!("scenario `{}`", p.name))?;
        let rows = distance_scan(&p.source, &p.link, f_ec, &grid);
        out.write(&format!("scan_{}.csv", p.name), &scan_to_csv(&rows, Some(cutoff)))?;
        let r0 = predict_rates(&p.source, &p.link, f_ec);
        let cut = match cutoff {
            Cutoff::Finite(km) => format!("{km:.2} km"),
            Cutoff::Unbounded => "unbounded".into(),
        };
        let _ = writeln!(summary, "{}: R_key(0) = {:.4} bit/s, QBER(0) = {:.4}, cutoff = {cut}", p.name, r0.r_key, r0.qber);
    }
    out.finish("scan", a.config.as_deref(), None)?;
    let _ = write!(summary, "wrote {} scan file(s) to {}", presets.len(), a.out.display());
    Ok(summary)
}

pub fn calibrate_cmd(a: &CalibrateArgs) -> Result<String> {
    let input = CalibrationInput::load(&a.config)?;
    let f_ec = check_f_ec(a.f_ec.unwrap_or(DEFAULT_F_EC))?;
    let cal = calibrate(&input.measurements, &input.link, input.f_rep_hz, input.known_d)?;
    let src = cal.source_params(input.f_rep_hz)?;

    let mut warnings = Vec::new();
    if let Some(pmd) = &input.pmd {
        let ceiling = pmd_visibility_ceiling_with(pmd, &GaussianResponse::itu_100ghz());
        if input.measurements.v_tot_near > ceiling.v_max {
            warnings.push(format!(
                "measured V_tot = {} exceeds the PMD visibility ceiling {:.4}",
                input.measurements.v_tot_near, ceiling.v_max
            ));
        }
    }

    let mut text = String::new();
    let _ = writeln!(text, "# source parameters calibrated from {}", a.config.display());
    for w in &warnings {
        let _ = writeln!(text, "# warning: {w}");
    }
    if let Some(s) = cal.mu_sigma {
        let _ = writeln!(text, "# mu_sigma = {s}");
    }
    if let Some(s) = cal.b_sigma {
        let _ = writeln!(text, "# b_sigma = {s}");
    }
    if let Some(m) = cal.mu_far {
        let _ = writeln!(text, "# mu_far = {m} (from r_sift_far at {} km per arm)", input.measurements.far_length_km);
    }
    if cal.d.is_none() {
        let _ = writeln!(text, "# d unknown: accidentals neglected, d written as 0");
    }
    let _ = writeln!(text, "[[scenario]]");
    let _ = writeln!(text, "name = {:?}", a.name);
    let _ = writeln!(text, "f_ec = {f_ec:?}\n");
    let _ = writeln!(text, "[scenario.source]");
    let _ = writeln!(text, "mu = {:?}", src.mu);
    let _ = writeln!(text, "f_rep_hz = {:?}", src.f_rep_hz);
    let _ = writeln!(text, "d = {:?}", src.d);
    let _ = writeln!(text, "b = {:?}\n", src.b);
    let _ = writeln!(text, "[scenario.link]");
    let _ = writeln!(text, "eta_coll = {:?}", input.link.eta_coll);
    let _ = writeln!(text, "eta_det = {:?}", input.link.eta_det);
    let _ = writeln!(text, "alpha_db_per_km = {:?}", input.link.alpha_db_per_km);

    let mut out = OutputDir::create(&a.out)?;
    out.write("calibration.toml", &text)?;
    out.finish("calibrate", Some(&a.config), None)?;
    let mut summary = String::new();
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let fmt_sigma = |s: Option<f64>| s.map(|s| format!(" ± {s:.3e}")).unwrap_or_default();
    let _ = write!(
        summary,
        "mu = {:.6e}{}, b = {:.5}{}\nwrote {}",
        cal.mu,
        fmt_sigma(cal.mu_sigma),
        cal.b,
        fmt_sigma(cal.b_sigma),
        a.out.join("calibration.toml").display()
    );
    Ok(summary)
}

#[derive(Debug, serde::Deserialize)]
struct PmdTable {
    fiber_length_m: f64,
    beat_length_m: f64,
    wavelength_m: f64,
}

fn pmd_from_file(path: &Path) -> Result<PmdParams<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let pmd = table
        .get("pmd")
        .ok_or_else(|| anyhow!("{}: no [pmd] table", path.display()))?
        .clone();
    let t: PmdTable = pmd.try_into().with_context(|| format!("{}: [pmd]", path.display()))?;
    Ok(PmdParams::new(t.fiber_length_m, t.beat_length_m, t.wavelength_m)?)
}

pub fn pmd(a: &PmdArgs) -> Result<String> {
    let params = match &a.config {
        Some(p) => pmd_from_file(p)?,
        None => PmdParams::new(a.fiber_length_m, a.beat_length_m, a.wavelength_m)?,
    };
    if !(a.fwhm_ghz > 0.0) {
        bail!("--fwhm-ghz must be > 0");
    }
    let c = pmd_visibility_ceiling_with(&params, &GaussianResponse::new(a.fwhm_ghz));
    let mut out = OutputDir::create(&a.out)?;
    out.write(
        "pmd.csv",
        &format!("tau_pmd_ps,overlap,v_max\n{},{},{}\n", c.tau_pmd_ps, c.overlap, c.v_max),
    )?;
    out.finish("pmd", a.config.as_deref(), None)?;
    Ok(format!(
        "tau_pmd = {:.3} ps, overlap = {:.4}, V_max = {:.4}",
        c.tau_pmd_ps, c.overlap, c.v_max
    ))
}

pub const TUNING_CSV_HEADER: &str = "pump_nm,lambda_a_nm,lambda_b_nm,branch,residual";

pub fn tuning(a: &TuningArgs) -> Result<String> {
    let model = IndexModel::load(&a.config)?;
    let band = match a.band_nm.as_slice() {
        [lo, hi] => (*lo, *hi),
        _ => bail!("--band-nm takes two values: lo,hi"),
    };
    let opts = TuningOptions {
        grid_points: a.grid_points,
        ..TuningOptions::default()
    };
    let mut csv = String::from(TUNING_CSV_HEADER);
    csv.push('\n');
    let mut n = 0;
    for &pump in &a.pump_nm {
        for p in tuning_curves(&model, pump, band, &opts).with_context(|| format!("pump {pump} nm"))? {
            let _ = writeln!(csv, "{pump},{},{},{},{}", p.lambda_a_nm, p.lambda_b_nm, p.branch.label(), p.residual);
            n += 1;
        }
    }
    let mut out = OutputDir::create(&a.out)?;
    out.write("tuning.csv", &csv)?;
    out.finish("tuning", Some(&a.config), None)?;
    Ok(format!("{n} phase-matched points for {} pump wavelength(s); wrote {}", a.pump_nm.len(), a.out.join("tuning.csv").display()))
}

pub const REPORT_CSV_HEADER: &str = "channel_pair,total_km,r_sift,r_sift_sigma,model_r_sift,qber,qber_sigma,model_qber,r_key,r_key_sigma,model_r_key,r_false,r_false_sigma,model_r_false,v_tot,v_tot_sigma,model_v_tot,car,bell_sign";

pub fn report(a: &ReportArgs) -> Result<String> {
    let cfg = load_run_config(&a.config)?;
    let f_ec = check_f_ec(a.f_ec.unwrap_or(cfg.analysis.f_ec))?;
    let mut out = OutputDir::create(&a.out)?;
    simulate_into(&cfg, a.seed, &mut out)?;

    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    let mut summary = String::new();
    for job in cfg.jobs(a.seed) {
        let set = HistogramSet::new(simulate_run(&job)?)?;
        let arm = job.alice_link.length_km;
        let mut spec = cfg.analysis.peak_spec(arm);
        if cfg.analysis.peak_window_bins.is_none() {
            spec.peak_window_bins = job.peak_window_bins;
        }
        let m = full_metrics(&set, &spec, f_ec)?;
        let p = predict_rates(&job.source, &job.alice_link, f_ec);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            job.pair.label(),
            job.total_km(),
            m.r_sift.value,
            m.r_sift.sigma,
            p.r_sift,
            m.qber.value,
            m.qber.sigma,
            p.qber,
            m.r_key.value.max(0.0),
            m.r_key.sigma,
            p.r_key.max(0.0),
            m.r_false.value,
            m.r_false.sigma,
            p.measured_false_rate(),
            m.v_tot.value,
            m.v_tot.sigma,
            p.visibility(),
            m.car,
            m.bell_sign_detected.label()
        );
        let _ = writeln!(
            summary,
            "{} @ {} km: R_sift {:.3} ± {:.3} (model {:.3}), QBER {:.4} ± {:.4} (model {:.4}), R_key {:.3} ± {:.3} (model {:.3})",
            job.pair.label(),
            job.total_km(),
            m.r_sift.value,
            m.r_sift.sigma,
            p.r_sift,
            m.qber.value,
            m.qber.sigma,
            p.qber,
            m.r_key.value.max(0.0),
            m.r_key.sigma,
            p.r_key.max(0.0)
        );
    }
    out.write("report.csv", &csv)?;
    out.finish("report", Some(&a.config), a.seed)?;
    let _ = write!(summary, "wrote {}", a.out.join("report.csv").display());
    Ok(summary)
}
