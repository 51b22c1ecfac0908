//! Seeded Monte Carlo of the detection chain: pair emission, loss, passive
//! basis choice, polarization projection with systematic error, noise clicks
//! and timing jitter, ending in one TDC coincidence histogram per setting.
//!
//! The CW pump is cut into effective windows at `f_rep`. On the TDC time
//! axis a window spans exactly the peak coincidence window
//! (`peak_window_bins * bin_width`), and every click sits at a uniformly
//! random position inside its window. Independent click streams are then
//! homogeneous, so accidentals form a flat floor whose level per peak
//! window is the per-window click probability product, as in the analytic
//! model.
//!
//! Each setting is measured with one detector per party, as in a
//! sequential measurement, but the photon reaching that detector still
//! passes a passive 50/50 basis choice: a photon surviving the arm hits a
//! given detector with probability 1/4. Summed over the eight same-basis
//! settings this reproduces the one-half sifting factor and the
//! `(mu eta + 4 d)^2` accidental term of the four-detector scheme.

mod histogram;

pub use histogram::{accumulate_coincidences, CoincidenceHistogram, HISTOGRAM_CSV_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linkmodel::{arm_efficiency, LinkParams, SourceParams};
use crate::photonics::UserPair;
use crate::qkd::{Basis, BasisSetting, BellSign, Outcome, SettingPair};

pub const DEFAULT_BIN_WIDTH_PS: f64 = 164.0;
pub const DEFAULT_HISTOGRAM_BINS: usize = 61;

/// Peak width and jitter used without fiber spools.
pub const SHORT_LINK_PEAK_BINS: usize = 5;
pub const SHORT_LINK_JITTER_PS: f64 = 130.0;
/// Peak width and jitter used with fiber spools in the arms.
pub const LONG_LINK_PEAK_BINS: usize = 7;
pub const LONG_LINK_JITTER_PS: f64 = 190.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

/// One time-tagged detector click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub timestamp_ps: f64,
    pub party: Party,
    pub setting: BasisSetting,
    pub click: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub source: SourceParams<f64>,
    pub alice_link: LinkParams<f64>,
    pub bob_link: LinkParams<f64>,
    pub pair: UserPair,
    pub bell_sign: BellSign,
    /// Standard deviation of the Alice-Bob delay of a true pair, ps.
    pub jitter_sigma_ps: f64,
    pub bin_width_ps: f64,
    /// Histogram length; odd.
    pub n_bins: usize,
    /// Coincidence peak width; odd. Also the effective window length.
    pub peak_window_bins: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Symmetric deployment with peak width and jitter chosen by distance.
    pub fn new(source: SourceParams<f64>, link: LinkParams<f64>, pair: UserPair, duration_s: f64, seed: u64) -> Self {
        let (peak, jitter) = if link.length_km > 0.0 {
            (LONG_LINK_PEAK_BINS, LONG_LINK_JITTER_PS)
        } else {
            (SHORT_LINK_PEAK_BINS, SHORT_LINK_JITTER_PS)
        };
        Self {
            source,
            alice_link: link,
            bob_link: link,
            pair,
            bell_sign: BellSign::Plus,
            jitter_sigma_ps: jitter,
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            n_bins: DEFAULT_HISTOGRAM_BINS,
            peak_window_bins: peak,
            duration_s,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.alice_link.validate()?;
        self.bob_link.validate()?;
        if !(self.bin_width_ps > 0.0 && self.bin_width_ps.is_finite()) {
            return Err(invalid("sim.bin_width_ps", "must be > 0"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("sim.duration_s", "must be > 0"));
        }
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(invalid("sim.jitter_sigma_ps", "must be >= 0"));
        }
        if self.peak_window_bins.is_multiple_of(2) {
            return Err(invalid("sim.peak_window_bins", "must be odd"));
        }
        if self.n_bins.is_multiple_of(2) || self.n_bins < self.peak_window_bins {
            return Err(invalid("sim.n_bins", "must be odd and at least peak_window_bins"));
        }
        let windows = self.windows();
        if !(windows >= 1.0 && windows < 2f64.powi(52)) {
            return Err(invalid("sim.duration_s", "f_rep * duration out of range"));
        }
        Ok(())
    }

    /// Effective window length on the TDC axis, ps.
    pub fn window_ps(&self) -> f64 {
        self.peak_window_bins as f64 * self.bin_width_ps
    }

    /// Number of effective windows in the run.
    pub fn windows(&self) -> f64 {
        (self.source.f_rep_hz * self.duration_s).round()
    }

    pub fn total_km(&self) -> f64 {
        self.alice_link.length_km + self.bob_link.length_km
    }
}

/// `P(a, b | bases)` for the shared state with systematic error `b`.
pub fn outcome_probability(setting: &SettingPair, sign: BellSign, b: f64) -> f64 {
    if !setting.same_basis() {
        return 0.25;
    }
    if sign.is_correlated(setting) {
        (1.0 - b) / 2.0
    } else {
        b / 2.0
    }
}

/// Counter-based stream index of a setting: 4 x Alice port + Bob port.
pub fn setting_stream(setting: &SettingPair) -> u64 {
    let code = |s: BasisSetting| match (s.basis, s.outcome) {
        (Basis::Computational, Outcome::Zero) => 0,
        (Basis::Computational, Outcome::One) => 1,
        (Basis::Diagonal, Outcome::Zero) => 2,
        (Basis::Diagonal, Outcome::One) => 3,
    };
    4 * code(setting.alice) + code(setting.bob)
}

fn setting_rng(seed: u64, setting: &SettingPair) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(setting_stream(setting));
    rng
}

/// Window indices of a Bernoulli(p) process over `windows` windows.
fn bernoulli_windows<R: Rng>(rng: &mut R, p: f64, windows: u64, mut visit: impl FnMut(&mut R, u64)) -> Result<()> {
    if p <= 0.0 {
        return Ok(());
    }
    let gaps = Geometric::new(p).map_err(|e| invalid("probability", e.to_string()))?;
    let mut k: u64 = 0;
    loop {
        let gap = gaps.sample(rng);
        k = match k.checked_add(gap) {
            Some(k) if k < windows => k,
            _ => break,
        };
        visit(rng, k);
        k += 1;
    }
    Ok(())
}

/// Click streams of Alice's and Bob's detectors for one setting, each
/// sorted by timestamp.
pub fn simulate_events(config: &SimConfig, setting: &SettingPair) -> Result<(Vec<DetectionEvent>, Vec<DetectionEvent>)> {
    config.validate()?;
    let mut rng = setting_rng(config.seed, setting);
    let windows = config.windows() as u64;
    let w = config.window_ps();
    let src = &config.source;

    let eta_a = arm_efficiency(&config.alice_link);
    let eta_b = arm_efficiency(&config.bob_link);
    // reach probabilities for this setting's detectors: transmission,
    // passive basis choice (1/2), projection
    let p_a = eta_a / 4.0;
    let p_b = eta_b / 4.0;
    let p_ab = eta_a * eta_b / 4.0 * outcome_probability(setting, config.bell_sign, src.b);
    let p_any = p_a + p_b - p_ab;

    let jitter = Normal::new(0.0, config.jitter_sigma_ps / std::f64::consts::SQRT_2)
        .map_err(|e| invalid("sim.jitter_sigma_ps", e.to_string()))?;

    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let click = |t: f64, party, s| DetectionEvent {
        timestamp_ps: t,
        party,
        setting: s,
        click: true,
    };

    bernoulli_windows(&mut rng, src.mu * p_any, windows, |rng, k| {
        let t = (k as f64 + rng.random::<f64>()) * w;
        let r = rng.random::<f64>() * p_any;
        let (hit_a, hit_b) = if r < p_ab {
            (true, true)
        } else if r < p_a {
            (true, false)
        } else {
            (false, true)
        };
        if hit_a {
            alice.push(click(t + jitter.sample(rng), Party::Alice, setting.alice));
        }
        if hit_b {
            bob.push(click(t + jitter.sample(rng), Party::Bob, setting.bob));
        }
    })?;
    bernoulli_windows(&mut rng, src.d, windows, |rng, k| {
        alice.push(click((k as f64 + rng.random::<f64>()) * w, Party::Alice, setting.alice));
    })?;
    bernoulli_windows(&mut rng, src.d, windows, |rng, k| {
        bob.push(click((k as f64 + rng.random::<f64>()) * w, Party::Bob, setting.bob));
    })?;

    alice.sort_by(|x, y| x.timestamp_ps.total_cmp(&y.timestamp_ps));
    bob.sort_by(|x, y| x.timestamp_ps.total_cmp(&y.timestamp_ps));
    Ok((alice, bob))
}

/// Coincidence histogram for one joint setting. Deterministic in the seed.
pub fn simulate_setting(config: &SimConfig, setting: &SettingPair) -> Result<CoincidenceHistogram> {
    let (alice, bob) = simulate_events(config, setting)?;
    let ta: Vec<f64> = alice.iter().map(|e| e.timestamp_ps).collect();
    let tb: Vec<f64> = bob.iter().map(|e| e.timestamp_ps).collect();
    let mut hist = CoincidenceHistogram::zeros(*setting, config.n_bins, config.bin_width_ps, config.duration_s, config.seed);
    hist.channel_pair = Some(config.pair);
    hist.total_km = Some(config.total_km());
    accumulate_coincidences(&ta, &tb, &mut hist);
    Ok(hist)
}

/// The eight same-basis histograms, in [`SettingPair::same_basis_settings`] order.
pub fn simulate_run(config: &SimConfig) -> Result<Vec<CoincidenceHistogram>> {
    config.validate()?;
    SettingPair::same_basis_settings()
        .par_iter()
        .map(|s| simulate_setting(config, s))
        .collect::<Result<Vec<_>>>()
}

/// Expected mean count per histogram bin from independent noise clicks
/// alone: `N d_a d_b (bin_width / window)`.
pub fn noise_floor_per_bin(config: &SimConfig) -> f64 {
    config.windows() * config.source.d * config.source.d * config.bin_width_ps / config.window_ps()
}
