//! TOML input files: run configurations, scenario presets and measured rates.
//!
//! Field names carry their units (`_hz`, `_km`, `_ps`, `_s`, `_db_per_km`);
//! probabilities are bare numbers. Unknown keys are rejected. Parse and
//! validation errors are reported as [`Error::Parse`] with the line of the
//! offending key when it can be located.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::analysis::{Background, PeakSpec};
use crate::error::{invalid, Error, Result};
use crate::linkmodel::{LinkParams, Measurements, ScenarioPreset, SourceParams};
use crate::photonics::index_model::toml_line;
use crate::photonics::itu::DEFAULT_DEGENERACY_CHANNEL;
use crate::photonics::{ChannelPlan, ChannelRange, PmdParams, UserPair};
use crate::qkd::{BellSign, DEFAULT_F_EC};
use crate::simulator::{
    SimConfig, DEFAULT_BIN_WIDTH_PS, DEFAULT_HISTOGRAM_BINS, LONG_LINK_JITTER_PS, LONG_LINK_PEAK_BINS,
    SHORT_LINK_JITTER_PS, SHORT_LINK_PEAK_BINS,
};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    mu: f64,
    f_rep_hz: f64,
    d: f64,
    b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSection {
    eta_coll: f64,
    eta_det: f64,
    alpha_db_per_km: f64,
    #[serde(default = "default_lengths")]
    length_km: Lengths,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Lengths {
    One(f64),
    Many(Vec<f64>),
}

fn default_lengths() -> Lengths {
    Lengths::One(0.0)
}

impl Lengths {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Lengths::One(l) => vec![*l],
            Lengths::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    channels: String,
    mu: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSection {
    #[serde(default = "default_degeneracy")]
    degeneracy_channel: i32,
    min_channel: Option<i32>,
    max_channel: Option<i32>,
    #[serde(default)]
    pair: Vec<PairEntry>,
}

fn default_degeneracy() -> i32 {
    DEFAULT_DEGENERACY_CHANNEL
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimSection {
    duration_s: Option<f64>,
    bin_width_ps: Option<f64>,
    n_bins: Option<usize>,
    jitter_sigma_ps: Option<f64>,
    peak_window_bins: Option<usize>,
    bell_sign: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AnalysisSection {
    f_ec: Option<f64>,
    guard_bins: Option<usize>,
    peak_window_bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmdSection {
    fiber_length_m: f64,
    beat_length_m: f64,
    wavelength_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    source: SourceSection,
    link: LinkSection,
    plan: Option<PlanSection>,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    analysis: AnalysisSection,
    pmd: Option<PmdSection>,
}

/// Per-pair source parameter overrides.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairOverride {
    pub mu: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub duration_s: f64,
    pub bin_width_ps: f64,
    pub n_bins: usize,
    /// `None` picks the short- or long-link value by arm length.
    pub jitter_sigma_ps: Option<f64>,
    pub peak_window_bins: Option<usize>,
    pub bell_sign: BellSign,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub f_ec: f64,
    pub guard_bins: usize,
    pub peak_window_bins: Option<usize>,
}

/// Peak width used without an explicit setting.
pub fn default_peak_window_bins(arm_km: f64) -> usize {
    if arm_km > 0.0 {
        LONG_LINK_PEAK_BINS
    } else {
        SHORT_LINK_PEAK_BINS
    }
}

impl AnalysisSettings {
    pub fn peak_spec(&self, arm_km: f64) -> PeakSpec {
        PeakSpec {
            peak_window_bins: self.peak_window_bins.unwrap_or_else(|| default_peak_window_bins(arm_km)),
            background: Background::OutsidePeak {
                guard_bins: self.guard_bins,
            },
            center: None,
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: SourceParams<f64>,
    /// Link with zero length; the per-arm lengths are in `lengths_km`.
    pub link: LinkParams<f64>,
    pub lengths_km: Vec<f64>,
    pub plan: ChannelPlan,
    pub overrides: BTreeMap<String, PairOverride>,
    pub sim: SimSettings,
    pub analysis: AnalysisSettings,
    pub pmd: Option<PmdParams<f64>>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, file: &str) -> Result<Self> {
        let raw: RunFile = parse_toml(text, file)?;
        Self::build(raw).map_err(|e| locate(e, text, file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    fn build(raw: RunFile) -> Result<Self> {
        let s = raw.source;
        let source = SourceParams::new(s.mu, s.f_rep_hz, s.d, s.b)?;
        let link = LinkParams::new(raw.link.eta_coll, raw.link.eta_det, raw.link.alpha_db_per_km, 0.0)?;
        let lengths_km = raw.link.length_km.to_vec();
        if lengths_km.is_empty() {
            return Err(invalid("link.length_km", "at least one length is required"));
        }
        for &l in &lengths_km {
            link.with_length(l).validate()?;
        }

        let plan_raw = raw.plan.unwrap_or(PlanSection {
            degeneracy_channel: DEFAULT_DEGENERACY_CHANNEL,
            min_channel: None,
            max_channel: None,
            pair: Vec::new(),
        });
        let mut range = ChannelRange::default();
        if let Some(m) = plan_raw.min_channel {
            range.min = m;
        }
        if let Some(m) = plan_raw.max_channel {
            range.max = m;
        }
        let mut pairs = Vec::new();
        let mut overrides = BTreeMap::new();
        for entry in &plan_raw.pair {
            let p = UserPair::parse(&entry.channels).ok_or_else(|| {
                invalid("plan.pair.channels", format!("`{}` is not of the form A-B", entry.channels))
            })?;
            let o = PairOverride {
                mu: entry.mu,
                b: entry.b,
            };
            SourceParams::new(o.mu.unwrap_or(source.mu), source.f_rep_hz, source.d, o.b.unwrap_or(source.b))?;
            overrides.insert(p.label(), o);
            pairs.push(p);
        }
        let plan = if pairs.is_empty() {
            let c = plan_raw.degeneracy_channel;
            ChannelPlan::new(c, range, vec![UserPair { alice: c - 2, bob: c + 2 }])?
        } else {
            ChannelPlan::new(plan_raw.degeneracy_channel, range, pairs)?
        };

        let bell_sign = match raw.sim.bell_sign.as_deref() {
            None => BellSign::Plus,
            Some(v) => BellSign::parse(v).ok_or_else(|| invalid("sim.bell_sign", format!("`{v}` is not plus or minus")))?,
        };
        let sim = SimSettings {
            duration_s: raw.sim.duration_s.unwrap_or(180.0),
            bin_width_ps: raw.sim.bin_width_ps.unwrap_or(DEFAULT_BIN_WIDTH_PS),
            n_bins: raw.sim.n_bins.unwrap_or(DEFAULT_HISTOGRAM_BINS),
            jitter_sigma_ps: raw.sim.jitter_sigma_ps,
            peak_window_bins: raw.sim.peak_window_bins,
            bell_sign,
            seed: raw.sim.seed.unwrap_or(0),
        };
        let analysis = AnalysisSettings {
            f_ec: raw.analysis.f_ec.unwrap_or(DEFAULT_F_EC),
            guard_bins: raw.analysis.guard_bins.unwrap_or(2),
            peak_window_bins: raw.analysis.peak_window_bins,
        };
        if !(analysis.f_ec >= 1.0 && analysis.f_ec.is_finite()) {
            return Err(invalid("analysis.f_ec", "must be >= 1"));
        }
        if let Some(w) = analysis.peak_window_bins {
            if w % 2 == 0 {
                return Err(invalid("analysis.peak_window_bins", "must be odd"));
            }
        }
        let pmd = raw
            .pmd
            .map(|p| PmdParams::new(p.fiber_length_m, p.beat_length_m, p.wavelength_m))
            .transpose()
            .map_err(|e| prefix_field(e, "pmd"))?;

        let cfg = Self {
            source,
            link,
            lengths_km,
            plan,
            overrides,
            sim,
            analysis,
            pmd,
        };
        for job in cfg.jobs(None) {
            job.validate()?;
        }
        Ok(cfg)
    }

    /// Source parameters for one pair, overrides applied.
    pub fn source_for(&self, pair: &UserPair) -> SourceParams<f64> {
        let o = self.overrides.get(&pair.label()).copied().unwrap_or_default();
        SourceParams {
            mu: o.mu.unwrap_or(self.source.mu),
            b: o.b.unwrap_or(self.source.b),
            ..self.source
        }
    }

    /// One simulation per user pair and arm length, in file order. Job `k`
    /// is seeded with `seed + k` so runs are independent.
    pub fn jobs(&self, seed: Option<u64>) -> Vec<SimConfig> {
        let base = seed.unwrap_or(self.sim.seed);
        let mut out = Vec::new();
        for pair in &self.plan.user_pairs {
            for &len in &self.lengths_km {
                let link = self.link.with_length(len);
                let job_seed = base.wrapping_add(out.len() as u64);
                let mut c = SimConfig::new(self.source_for(pair), link, *pair, self.sim.duration_s, job_seed);
                c.bell_sign = self.sim.bell_sign;
                c.bin_width_ps = self.sim.bin_width_ps;
                c.n_bins = self.sim.n_bins;
                c.jitter_sigma_ps = self.sim.jitter_sigma_ps.unwrap_or(if len > 0.0 {
                    LONG_LINK_JITTER_PS
                } else {
                    SHORT_LINK_JITTER_PS
                });
                c.peak_window_bins = self.sim.peak_window_bins.unwrap_or_else(|| default_peak_window_bins(len));
                out.push(c);
            }
        }
        out
    }
}

/// Directory name used for one simulated run, e.g. `23-27_50km`.
pub fn run_dir_name(pair: &UserPair, total_km: f64) -> String {
    format!("{}_{}km", pair.label(), total_km)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetEntry {
    name: String,
    f_ec: Option<f64>,
    source: SourceSection,
    link: LinkSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    #[serde(default)]
    scenario: Vec<PresetEntry>,
}

/// Parses `[[scenario]]` tables; the link length is ignored.
pub fn presets_from_toml_str(text: &str, file: &str) -> Result<Vec<ScenarioPreset<f64>>> {
    let raw: PresetFile = parse_toml(text, file)?;
    let build = || -> Result<Vec<ScenarioPreset<f64>>> {
        let mut out: Vec<ScenarioPreset<f64>> = Vec::new();
        for e in raw.scenario {
            if out.iter().any(|p| p.name == e.name) {
                return Err(invalid("scenario.name", format!("duplicate scenario `{}`", e.name)));
            }
            let s = e.source;
            let f_ec = e.f_ec.unwrap_or(DEFAULT_F_EC);
            if !(f_ec >= 1.0 && f_ec.is_finite()) {
                return Err(invalid("scenario.f_ec", "must be >= 1"));
            }
            out.push(ScenarioPreset {
                name: e.name,
                source: SourceParams::new(s.mu, s.f_rep_hz, s.d, s.b)?,
                link: LinkParams::new(e.link.eta_coll, e.link.eta_det, e.link.alpha_db_per_km, 0.0)?,
                f_ec,
            });
        }
        Ok(out)
    };
    build().map_err(|e| locate(e, text, file))
}

pub fn load_presets(path: &Path) -> Result<Vec<ScenarioPreset<f64>>> {
    presets_from_toml_str(&read(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasuredSection {
    r_sift_near: f64,
    r_sift_near_sigma: Option<f64>,
    r_sift_far: Option<f64>,
    far_length_km: Option<f64>,
    r_false_near: Option<f64>,
    v_tot_near: f64,
    v_tot_near_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnownSource {
    f_rep_hz: f64,
    d: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasuredFile {
    measured: MeasuredSection,
    source: KnownSource,
    link: LinkSection,
    pmd: Option<PmdSection>,
}

/// Inputs to a calibration: measurements plus the known link.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    pub measurements: Measurements<f64>,
    pub link: LinkParams<f64>,
    pub f_rep_hz: f64,
    pub known_d: Option<f64>,
    pub pmd: Option<PmdParams<f64>>,
}

impl CalibrationInput {
    pub fn from_toml_str(text: &str, file: &str) -> Result<Self> {
        let raw: MeasuredFile = parse_toml(text, file)?;
        let build = || -> Result<Self> {
            let m = raw.measured;
            let mut measurements = Measurements::new(m.r_sift_near, m.v_tot_near);
            measurements.r_sift_far = m.r_sift_far;
            if let Some(l) = m.far_length_km {
                measurements.far_length_km = l;
            }
            measurements.r_false_near = m.r_false_near;
            measurements.r_sift_near_sigma = m.r_sift_near_sigma;
            measurements.v_tot_near_sigma = m.v_tot_near_sigma;
            if !(m.r_sift_near > 0.0) {
                return Err(invalid("measured.r_sift_near", "must be > 0"));
            }
            if !(raw.source.f_rep_hz > 0.0) {
                return Err(invalid("source.f_rep_hz", "must be > 0"));
            }
            if let Some(d) = raw.source.d {
                if !(0.0..1.0).contains(&d) {
                    return Err(invalid("source.d", "must be in [0, 1)"));
                }
            }
            let l = &raw.link;
            Ok(Self {
                measurements,
                link: LinkParams::new(l.eta_coll, l.eta_det, l.alpha_db_per_km, 0.0)?,
                f_rep_hz: raw.source.f_rep_hz,
                known_d: raw.source.d,
                pmd: raw
                    .pmd
                    .map(|p| PmdParams::new(p.fiber_length_m, p.beat_length_m, p.wavelength_m))
                    .transpose()
                    .map_err(|e| prefix_field(e, "pmd"))?,
            })
        };
        build().map_err(|e| locate(e, text, file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read(path)?, &path.display().to_string())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        file: file.to_string(),
        line: toml_line(text, &e),
        reason: e.message().trim().to_string(),
    })
}

fn prefix_field(e: Error, section: &str) -> Error {
    match e {
        Error::InvalidParameter { field, reason } if !field.contains('.') => Error::InvalidParameter {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

/// Turns a validation error on `section.key` into a line diagnostic.
fn locate(e: Error, text: &str, file: &str) -> Error {
    let Error::InvalidParameter { field, reason } = e else {
        return e;
    };
    let line = field
        .rsplit_once('.')
        .and_then(|(section, key)| key_line(text, section, key))
        .unwrap_or(0);
    Error::Parse {
        file: file.to_string(),
        line,
        reason: format!("invalid `{field}`: {reason}"),
    }
}

/// First line assigning `key` inside a table whose header ends in `section`.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let in_section = current == section || current.ends_with(&format!(".{section}"));
        if let Some((k, _)) = line.split_once('=') {
            if in_section && k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN: &str = r#"
[source]
mu = 0.0035
f_rep_hz = 78e6
d = 4.4e-6
b = 0.06

[link]
eta_coll = 0.05
eta_det = 0.20
alpha_db_per_km = 0.22
length_km = [0.0, 25.0]

[plan]
degeneracy_channel = 25

[[plan.pair]]
channels = "23-27"

[[plan.pair]]
channels = "21-29"
mu = 0.002

[sim]
duration_s = 10
seed = 7
"#;

    #[test]
    fn parses_run_config() {
        let cfg = RunConfig::from_toml_str(RUN, "run.toml").unwrap();
        assert_eq!(cfg.lengths_km, vec![0.0, 25.0]);
        assert_eq!(cfg.plan.user_pairs.len(), 2);
        let jobs = cfg.jobs(None);
        assert_eq!(jobs.len(), 4);
        assert_eq!(jobs[0].peak_window_bins, 5);
        assert_eq!(jobs[1].peak_window_bins, 7);
        assert_eq!(jobs[1].jitter_sigma_ps, 190.0);
        assert_eq!(jobs[2].source.mu, 0.002);
        assert_eq!(jobs[0].seed, 7);
        assert_eq!(cfg.jobs(Some(9))[3].seed, 12);
        assert_eq!(run_dir_name(&jobs[1].pair, jobs[1].total_km()), "23-27_50km");
    }

    #[test]
    fn negative_mu_names_field_and_line() {
        let text = RUN.replace("mu = 0.0035", "mu = -0.1");
        match RunConfig::from_toml_str(&text, "run.toml") {
            Err(Error::Parse { file, line, reason }) => {
                assert_eq!(file, "run.toml");
                assert_eq!(line, 3);
                assert!(reason.contains("source.mu"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_unknown_keys() {
        let text = RUN.replace("eta_det = 0.20", "eta_det = ");
        assert!(matches!(RunConfig::from_toml_str(&text, "f"), Err(Error::Parse { line: 10, .. })));
        let text = RUN.replace("eta_det = 0.20", "eta_detector = 0.20");
        assert!(matches!(RunConfig::from_toml_str(&text, "f"), Err(Error::Parse { .. })));
    }

    #[test]
    fn asymmetric_pair_rejected() {
        let text = RUN.replace("\"21-29\"", "\"21-28\"");
        let err = RunConfig::from_toml_str(&text, "f").unwrap_err();
        assert!(err.to_string().contains("21-28"), "{err}");
    }

    #[test]
    fn presets_file() {
        let text = r#"
[[scenario]]
name = "a"
f_ec = 1.1
[scenario.source]
mu = 0.0035
f_rep_hz = 78e6
d = 4.4e-6
b = 0.06
[scenario.link]
eta_coll = 0.05
eta_det = 0.2
alpha_db_per_km = 0.22
"#;
        let p = presets_from_toml_str(text, "p.toml").unwrap();
        assert_eq!(p[0].name, "a");
        assert_eq!(p[0].f_ec, 1.1);
        let bad = text.replace("b = 0.06", "b = 0.7");
        match presets_from_toml_str(&bad, "p.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn measured_file() {
        let text = r#"
[measured]
r_sift_near = 13.8
v_tot_near = 0.867
[source]
f_rep_hz = 78e6
d = 4.4e-6
[link]
eta_coll = 0.05
eta_det = 0.2
alpha_db_per_km = 0.22
"#;
        let c = CalibrationInput::from_toml_str(text, "m").unwrap();
        assert_eq!(c.known_d, Some(4.4e-6));
        assert_eq!(c.measurements.far_length_km, 25.0);
    }
}
