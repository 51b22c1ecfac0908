//! Analytic CW-SPDC link model.
//!
//! The continuous pump is discretized into effective windows at `f_rep`.
//! Per window a pair is emitted with probability `mu`, each detector fires
//! on noise with probability `d`, and each arm transmits with
//!
//! ```text
//! eta = eta_coll * eta_det * 10^(-alpha L / 10)
//! p_true  = mu eta^2
//! p_false = mu^2 eta^2 + 8 mu eta d + 16 d^2 = (mu eta + 4 d)^2
//! e       = (p_false / 2 + b p_true) / (p_true + p_false)
//! ```
//!
//! Rates carry an explicit basis-sifting factor of one half:
//! `R_sift = (p_true + p_false) f_rep / 2`. That is the convention under
//! which `mu = 0.0035`, `f_rep = 78 MHz` and a sifted rate of 13.8 bit/s at
//! `eta = 0.01` agree with each other.
//!
//! `L` is the fiber length of one arm; reported distances are the total
//! user separation `2 L`.

use std::fmt::Write as _;

use crate::error::{domain, invalid, Error, Result};
use crate::num::Real;
use crate::qkd::{self, RateInputs};

/// Per-arm length grows by doubling from this step when bracketing the cutoff.
const CUTOFF_INITIAL_STEP_KM: f64 = 1.0;
/// Per-arm length beyond which a positive rate is reported as unbounded.
const CUTOFF_MAX_ARM_KM: f64 = 20_000.0;
/// Bisection stops when the per-arm bracket is narrower than this.
const CUTOFF_TOLERANCE_KM: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams<T> {
    /// Mean pairs per effective window.
    pub mu: T,
    /// Effective repetition rate, Hz.
    pub f_rep_hz: T,
    /// Noise click probability per window per detector.
    pub d: T,
    /// Systematic polarization error probability.
    pub b: T,
}

impl<T: Real> SourceParams<T> {
    pub fn new(mu: T, f_rep_hz: T, d: T, b: T) -> Result<Self> {
        let s = Self { mu, f_rep_hz, d, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if !(self.mu >= zero && self.mu < one) {
            return Err(invalid("source.mu", format!("must be in [0, 1), got {}", self.mu)));
        }
        if !(self.f_rep_hz > zero && self.f_rep_hz.is_finite()) {
            return Err(invalid("source.f_rep_hz", format!("must be > 0, got {}", self.f_rep_hz)));
        }
        if !(self.d >= zero && self.d < one) {
            return Err(invalid("source.d", format!("must be in [0, 1), got {}", self.d)));
        }
        if !(self.b >= zero && self.b <= T::lit(0.5)) {
            return Err(invalid("source.b", format!("must be in [0, 0.5], got {}", self.b)));
        }
        Ok(())
    }

    /// Chip source with InGaAs avalanche detectors.
    pub fn baseline() -> Self {
        Self {
            mu: T::lit(0.0035),
            f_rep_hz: T::lit(78e6),
            d: T::lit(4.4e-6),
            b: T::lit(0.06),
        }
    }

    /// Same pump conditions with superconducting detectors (only spurious
    /// light left in `d`) and single-mode analysis fibers (`b = 2.5 %`).
    pub fn improved() -> Self {
        Self {
            d: T::lit(2.4e-6),
            b: T::lit(0.025),
            ..Self::baseline()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams<T> {
    pub eta_coll: T,
    pub eta_det: T,
    /// Fiber attenuation, dB/km.
    pub alpha_db_per_km: T,
    /// Fiber length of one arm, km.
    pub length_km: T,
}

impl<T: Real> LinkParams<T> {
    pub fn new(eta_coll: T, eta_det: T, alpha_db_per_km: T, length_km: T) -> Result<Self> {
        let l = Self {
            eta_coll,
            eta_det,
            alpha_db_per_km,
            length_km,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.eta_coll) {
            return Err(invalid("link.eta_coll", format!("must be in [0, 1], got {}", self.eta_coll)));
        }
        if !unit(self.eta_det) {
            return Err(invalid("link.eta_det", format!("must be in [0, 1], got {}", self.eta_det)));
        }
        if !(self.alpha_db_per_km >= T::zero() && self.alpha_db_per_km.is_finite()) {
            return Err(invalid(
                "link.alpha_db_per_km",
                format!("must be >= 0, got {}", self.alpha_db_per_km),
            ));
        }
        if !(self.length_km >= T::zero() && self.length_km.is_finite()) {
            return Err(invalid("link.length_km", format!("must be >= 0, got {}", self.length_km)));
        }
        Ok(())
    }

    pub fn baseline() -> Self {
        Self {
            eta_coll: T::lit(0.05),
            eta_det: T::lit(0.20),
            alpha_db_per_km: T::lit(0.22),
            length_km: T::zero(),
        }
    }

    /// Antireflection-coated facet with fiber coupler and superconducting detectors.
    pub fn improved() -> Self {
        Self {
            eta_coll: T::lit(0.21),
            eta_det: T::lit(0.87),
            ..Self::baseline()
        }
    }

    pub fn with_length(self, length_km: T) -> Self {
        Self { length_km, ..self }
    }

    pub fn total_km(&self) -> T {
        self.length_km + self.length_km
    }
}

/// Global detection efficiency of one arm.
pub fn arm_efficiency<T: Real>(link: &LinkParams<T>) -> T {
    let loss_db = link.alpha_db_per_km * link.length_km;
    link.eta_coll * link.eta_det * T::lit(10.0).powf(-loss_db / T::lit(10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceProbabilities<T> {
    pub p_true: T,
    pub p_false: T,
}

impl<T: Real> CoincidenceProbabilities<T> {
    pub fn total(&self) -> T {
        self.p_true + self.p_false
    }
}

pub fn coincidence_probabilities<T: Real>(src: &SourceParams<T>, eta: T) -> CoincidenceProbabilities<T> {
    let (mu, d) = (src.mu, src.d);
    CoincidenceProbabilities {
        p_true: mu * eta * eta,
        p_false: mu * mu * eta * eta + T::lit(8.0) * mu * eta * d + T::lit(16.0) * d * d,
    }
}

pub fn model_qber<T: Real>(src: &SourceParams<T>, eta: T) -> Result<T> {
    let p = coincidence_probabilities(src, eta);
    if !(p.total() > T::zero()) {
        return Err(Error::Degenerate("p_true + p_false = 0, QBER undefined".into()));
    }
    Ok((T::lit(0.5) * p.p_false + src.b * p.p_true) / p.total())
}

/// `V = (1 - 2b) p_true / (p_true + p_false)`.
pub fn model_visibility<T: Real>(src: &SourceParams<T>, eta: T) -> Result<T> {
    let p = coincidence_probabilities(src, eta);
    if !(p.total() > T::zero()) {
        return Err(Error::Degenerate("p_true + p_false = 0, visibility undefined".into()));
    }
    Ok((T::one() - T::lit(2.0) * src.b) * p.p_true / p.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrediction<T> {
    pub total_km: T,
    pub eta: T,
    pub p_true: T,
    pub p_false: T,
    /// `(p_true + p_false) f_rep / 2`, bit/s.
    pub r_sift: T,
    /// Accidental part of the sifted rate, `p_false f_rep / 2`.
    pub r_false: T,
    /// Model QBER; 0.5 when no coincidences occur at all.
    pub qber: T,
    /// Signed key-rate bound, bit/s.
    pub r_key: T,
}

impl<T: Real> RatePrediction<T> {
    /// False-coincidence rate as the histogram analysis reports it
    /// (twice the sifted accidentals): `p_false f_rep`.
    pub fn measured_false_rate(&self) -> T {
        self.r_false + self.r_false
    }

    pub fn visibility(&self) -> T {
        qkd::visibility_from_qber(self.qber)
    }
}

pub fn predict_rates<T: Real>(src: &SourceParams<T>, link: &LinkParams<T>, f_ec: T) -> RatePrediction<T> {
    let half = T::lit(0.5);
    let eta = arm_efficiency(link);
    let p = coincidence_probabilities(src, eta);
    let r_raw = p.total() * src.f_rep_hz;
    let qber = model_qber(src, eta).unwrap_or(half).min(half);
    let r_key = qkd::secret_key_rate(RateInputs {
        r_raw,
        qber,
        f_ec,
    });
    RatePrediction {
        total_km: link.total_km(),
        eta,
        p_true: p.p_true,
        p_false: p.p_false,
        r_sift: half * r_raw,
        r_false: half * p.p_false * src.f_rep_hz,
        qber,
        r_key,
    }
}

/// Distance at which the key rate bound crosses zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff<T> {
    /// Total user separation, km.
    Finite(T),
    /// The rate never turns negative (no noise floor).
    Unbounded,
}

impl<T: Real> Cutoff<T> {
    pub fn total_km(&self) -> Option<T> {
        match self {
            Cutoff::Finite(km) => Some(*km),
            Cutoff::Unbounded => None,
        }
    }
}

pub fn max_distance<T: Real>(src: &SourceParams<T>, link: &LinkParams<T>, f_ec: T) -> Result<Cutoff<T>> {
    max_distance_with_step(src, link, f_ec, T::lit(CUTOFF_INITIAL_STEP_KM))
}

/// [`max_distance`] with an explicit initial bracketing step (per arm, km).
pub fn max_distance_with_step<T: Real>(
    src: &SourceParams<T>,
    link: &LinkParams<T>,
    f_ec: T,
    initial_step_km: T,
) -> Result<Cutoff<T>> {
    if !(initial_step_km > T::zero()) {
        return Err(invalid("initial_step_km", "must be > 0"));
    }
    let rate = |l: T| predict_rates(src, &link.with_length(l), f_ec).r_key;
    let r0 = rate(T::zero());
    if !(r0 > T::zero()) {
        return Err(Error::NoPositiveRate(r0.to_f64_lossy()));
    }
    let mut lo = T::zero();
    let mut hi = initial_step_km;
    while rate(hi) >= T::zero() {
        if hi > T::lit(CUTOFF_MAX_ARM_KM) {
            return Ok(Cutoff::Unbounded);
        }
        lo = hi;
        hi = hi + hi;
    }
    let tol = T::lit(CUTOFF_TOLERANCE_KM);
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) >= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let arm = (lo + hi) * T::lit(0.5);
    Ok(Cutoff::Finite(arm + arm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow<T> {
    pub total_km: T,
    pub r_sift: T,
    pub qber: T,
    /// Signed bound; the CSV writer clamps it at zero.
    pub r_key: T,
}

/// Rate predictions over a grid of total user separations (km).
pub fn distance_scan<T: Real>(src: &SourceParams<T>, link: &LinkParams<T>, f_ec: T, total_km_grid: &[T]) -> Vec<ScanRow<T>> {
    total_km_grid
        .iter()
        .map(|&total| {
            let p = predict_rates(src, &link.with_length(total * T::lit(0.5)), f_ec);
            ScanRow {
                total_km: total,
                r_sift: p.r_sift,
                qber: p.qber,
                r_key: p.r_key,
            }
        })
        .collect()
}

pub const SCAN_CSV_HEADER: &str = "total_km,r_sift,qber,r_key";

/// Scan table as CSV, with the cutoff appended as a `#` metadata line.
pub fn scan_to_csv<T: Real>(rows: &[ScanRow<T>], cutoff: Option<Cutoff<T>>) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.total_km,
            r.r_sift,
            r.qber,
            qkd::clamp_rate(r.r_key)
        );
    }
    match cutoff {
        Some(Cutoff::Finite(km)) => {
            let _ = writeln!(out, "# cutoff_total_km={km}");
        }
        Some(Cutoff::Unbounded) => out.push_str("# cutoff_total_km=unbounded\n"),
        None => {}
    }
    out
}

/// Measured quantities feeding [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements<T> {
    /// Sifted rate at zero fiber length, bit/s.
    pub r_sift_near: T,
    /// Sifted rate with `far_length_km` of fiber per arm, if measured.
    pub r_sift_far: Option<T>,
    pub far_length_km: T,
    /// False-coincidence rate at zero length in the histogram-analysis
    /// convention (`p_false f_rep`), if measured.
    pub r_false_near: Option<T>,
    /// Total visibility at zero length.
    pub v_tot_near: T,
    pub r_sift_near_sigma: Option<T>,
    pub v_tot_near_sigma: Option<T>,
}

impl<T: Real> Measurements<T> {
    pub fn new(r_sift_near: T, v_tot_near: T) -> Self {
        Self {
            r_sift_near,
            r_sift_far: None,
            far_length_km: T::lit(25.0),
            r_false_near: None,
            v_tot_near,
            r_sift_near_sigma: None,
            v_tot_near_sigma: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration<T> {
    pub mu: T,
    pub b: T,
    /// Noise probability: derived from the false rate, else the known value.
    pub d: Option<T>,
    /// Cross-check of `mu` from the far sifted rate.
    pub mu_far: Option<T>,
    pub mu_sigma: Option<T>,
    pub b_sigma: Option<T>,
}

impl<T: Real> Calibration<T> {
    pub fn source_params(&self, f_rep_hz: T) -> Result<SourceParams<T>> {
        SourceParams::new(self.mu, f_rep_hz, self.d.unwrap_or(T::zero()), self.b)
    }
}

/// Positive root of `a x^2 + b x + c = 0` with `a, b >= 0`, `c <= 0`.
fn positive_root<T: Real>(a: T, b: T, c: T) -> T {
    if a == T::zero() {
        return -c / b;
    }
    let disc = (b * b - T::lit(4.0) * a * c).sqrt();
    // cancellation-free form of (-b + disc) / 2a
    (T::lit(-2.0) * c) / (b + disc)
}

/// `mu` from `2 R_sift / f_rep = mu eta^2 + (mu eta + 4 d)^2`.
fn invert_sifted_rate<T: Real>(s: T, eta: T, d: T) -> Result<T> {
    let c = T::lit(16.0) * d * d - s;
    if !(c < T::zero()) {
        return Err(Error::Calibration(format!(
            "sifted rate is at or below the noise floor (16 d^2 = {})",
            T::lit(16.0) * d * d
        )));
    }
    Ok(positive_root(eta * eta, eta * eta + T::lit(8.0) * eta * d, c))
}

/// Estimates `mu` and `b` from measured rates and visibility.
///
/// * With a measured false rate, `p_false` is subtracted exactly and `d`
///   follows from `p_false = (mu eta + 4 d)^2`.
/// * Otherwise, with a known `d`, the sifted-rate relation is solved as a
///   quadratic in `mu`.
/// * With neither, accidentals are neglected: `mu = 2 R_sift / (f_rep eta^2)`
///   and `b = (1 - V) / 2`.
pub fn calibrate<T: Real>(meas: &Measurements<T>, link: &LinkParams<T>, f_rep_hz: T, known_d: Option<T>) -> Result<Calibration<T>> {
    let zero = T::zero();
    let two = T::lit(2.0);
    if !(meas.r_sift_near > zero) {
        return Err(Error::Calibration("r_sift_near must be positive".into()));
    }
    if !(meas.v_tot_near > -T::one() && meas.v_tot_near <= T::one()) {
        return Err(domain("v_tot_near", meas.v_tot_near.to_f64_lossy(), "(-1, 1]"));
    }
    if !(f_rep_hz > zero) {
        return Err(invalid("f_rep_hz", "must be > 0"));
    }
    let eta = arm_efficiency(&link.with_length(zero));
    if !(eta > zero) {
        return Err(Error::Calibration("zero link efficiency".into()));
    }
    let s = two * meas.r_sift_near / f_rep_hz;

    let (mu, d) = match (meas.r_false_near, known_d) {
        (Some(r_false), _) => {
            if !(r_false >= zero) {
                return Err(Error::Calibration("r_false_near must be >= 0".into()));
            }
            let q = r_false / f_rep_hz;
            let mu = (s - q) / (eta * eta);
            if !(mu > zero) {
                return Err(Error::Calibration(format!(
                    "false rate exceeds sifted rate (mu = {mu})"
                )));
            }
            let d = (q.sqrt() - mu * eta) / T::lit(4.0);
            if d < zero {
                return Err(Error::Calibration(format!(
                    "false rate below the multi-pair floor mu^2 eta^2 (d = {d})"
                )));
            }
            (mu, Some(d))
        }
        (None, Some(d)) => (invert_sifted_rate(s, eta, d)?, Some(d)),
        (None, None) => (s / (eta * eta), None),
    };
    if !(mu < T::one()) {
        return Err(Error::Calibration(format!("mu = {mu} is not a probability")));
    }

    let p_true = mu * eta * eta;
    let p_false = match d {
        Some(d) => {
            let a = mu * eta + T::lit(4.0) * d;
            a * a
        }
        None => zero,
    };
    let scale = (p_true + p_false) / p_true;
    let b = (T::one() - meas.v_tot_near * scale) / two;
    if b < zero || b > T::lit(0.5) {
        return Err(Error::Calibration(format!(
            "visibility {} is inconsistent with the accidental level (b = {b})",
            meas.v_tot_near
        )));
    }

    let mu_far = match (meas.r_sift_far, d) {
        (Some(r), d) if r > zero => {
            let eta_far = arm_efficiency(&link.with_length(meas.far_length_km));
            let s_far = two * r / f_rep_hz;
            match d {
                Some(d) => invert_sifted_rate(s_far, eta_far, d).ok(),
                None => Some(s_far / (eta_far * eta_far)),
            }
        }
        _ => None,
    };

    Ok(Calibration {
        mu,
        b,
        d,
        mu_far,
        mu_sigma: meas.r_sift_near_sigma.map(|sig| mu * sig / meas.r_sift_near),
        b_sigma: meas.v_tot_near_sigma.map(|sig| scale * sig / two),
    })
}

/// Named parameter set for the analytic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset<T> {
    pub name: String,
    pub source: SourceParams<T>,
    pub link: LinkParams<T>,
    pub f_ec: T,
}

pub const PRESET_BASELINE: &str = "baseline";
pub const PRESET_IMPROVED: &str = "improved";

impl<T: Real> ScenarioPreset<T> {
    pub fn baseline() -> Self {
        Self {
            name: PRESET_BASELINE.into(),
            source: SourceParams::baseline(),
            link: LinkParams::baseline(),
            f_ec: T::lit(qkd::DEFAULT_F_EC),
        }
    }

    pub fn improved() -> Self {
        Self {
            name: PRESET_IMPROVED.into(),
            source: SourceParams::improved(),
            link: LinkParams::improved(),
            f_ec: T::lit(qkd::DEFAULT_F_EC),
        }
    }

    pub fn builtin() -> Vec<Self> {
        vec![Self::baseline(), Self::improved()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::builtin().into_iter().find(|p| p.name == name)
    }

    pub fn predict(&self) -> RatePrediction<T> {
        predict_rates(&self.source, &self.link, self.f_ec)
    }

    pub fn cutoff(&self) -> Result<Cutoff<T>> {
        max_distance(&self.source, &self.link, self.f_ec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn arm_efficiency_examples() {
        let l = LinkParams::<f64>::baseline();
        assert!((arm_efficiency(&l) - 0.01).abs() < 1e-15);
        // 0.01 * 10^(-0.55)
        let e25 = arm_efficiency(&l.with_length(25.0));
        assert!(rel(e25, 2.818_382_931_264_454e-3) < 1e-12);
        let lossless = LinkParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        for len in [0.0, 10.0, 1e4] {
            assert_eq!(arm_efficiency(&lossless.with_length(len)), 1.0);
        }
    }

    #[test]
    fn probabilities_examples() {
        let src = SourceParams::<f64>::baseline();
        let p = coincidence_probabilities(&src, 0.01);
        assert!(rel(p.p_true, 3.5e-7) < 1e-12);
        // 1.225e-9 + 1.232e-9 + 3.0976e-10
        assert!(rel(p.p_false, 2.766_76e-9) < 1e-9);

        let dark = SourceParams::new(0.0, 78e6, 0.0, 0.06).unwrap();
        let p = coincidence_probabilities(&dark, 0.01);
        assert_eq!((p.p_true, p.p_false), (0.0, 0.0));

        let p = coincidence_probabilities(&src, 0.0);
        assert_eq!(p.p_true, 0.0);
        assert!(rel(p.p_false, 16.0 * 4.4e-6 * 4.4e-6) < 1e-12);
    }

    #[test]
    fn qber_examples() {
        let src = SourceParams::<f64>::baseline();
        let e = model_qber(&src, 0.01).unwrap();
        assert!((e - 0.064).abs() < 0.003, "{e}");

        let clean = SourceParams::new(0.0035, 78e6, 0.0, 0.0).unwrap();
        // d = 0 leaves only the mu^2 eta^2 term; the e = 0 limit needs mu -> 0 too
        let e = model_qber(&clean, 0.01).unwrap();
        assert!(e < 0.002);

        let noise_only = SourceParams::new(0.0, 78e6, 1e-6, 0.06).unwrap();
        assert_eq!(model_qber(&noise_only, 0.01).unwrap(), 0.5);

        let none = SourceParams::new(0.0, 78e6, 0.0, 0.06).unwrap();
        assert!(model_qber(&none, 0.01).is_err());
    }

    #[test]
    fn predict_examples() {
        let src = SourceParams::<f64>::baseline();
        let link = LinkParams::baseline();
        let p0 = predict_rates(&src, &link, 1.17);
        assert!(rel(p0.r_sift, 13.7) < 0.10, "{p0:?}");
        assert!(rel(p0.r_key, 3.3) < 0.10, "{p0:?}");
        let p25 = predict_rates(&src, &link.with_length(25.0), 1.17);
        assert_eq!(p25.total_km, 50.0);
        assert!(rel(p25.r_sift, 1.1) < 0.30, "{p25:?}");
        assert!(rel(p25.qber, 0.071) < 0.30, "{p25:?}");
        assert!(rel(p25.r_key, 0.21) < 0.30, "{p25:?}");

        let none = SourceParams::new(0.0, 78e6, 0.0, 0.06).unwrap();
        let p = predict_rates(&none, &link, 1.17);
        assert_eq!((p.r_sift, p.r_false, p.r_key), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cutoff_examples() {
        let base = ScenarioPreset::<f64>::baseline();
        let km = base.cutoff().unwrap().total_km().unwrap();
        assert!((km - 80.0).abs() <= 8.0, "{km}");
        let imp = ScenarioPreset::<f64>::improved();
        let km = imp.cutoff().unwrap().total_km().unwrap();
        assert!((km - 230.0).abs() <= 25.0, "{km}");

        let clean = SourceParams::new(0.0035, 78e6, 0.0, 0.06).unwrap();
        assert_eq!(
            max_distance(&clean, &LinkParams::baseline(), 1.17).unwrap(),
            Cutoff::Unbounded
        );
    }

    #[test]
    fn cutoff_needs_positive_start() {
        let noisy = SourceParams::new(0.0035, 78e6, 4.4e-6, 0.2).unwrap();
        assert!(matches!(
            max_distance(&noisy, &LinkParams::baseline(), 1.17),
            Err(Error::NoPositiveRate(_))
        ));
    }

    #[test]
    fn calibration_examples() {
        let link = LinkParams::<f64>::baseline();
        let c = calibrate(&Measurements::new(13.8, 0.867), &link, 78e6, Some(4.4e-6)).unwrap();
        assert!(rel(c.mu, 0.0035) < 0.03, "{c:?}");
        assert!((c.b - 0.060).abs() < 0.005, "{c:?}");

        let c = calibrate(&Measurements::new(13.8, 1.0 - 2.0 * 0.07), &link, 78e6, None).unwrap();
        assert!((c.b - 0.07).abs() < 1e-15);
        assert!(rel(c.mu, 27.6 / 7800.0) < 1e-12);
    }

    #[test]
    fn calibration_failures() {
        let link = LinkParams::<f64>::baseline();
        assert!(calibrate(&Measurements::new(0.0, 0.8), &link, 78e6, None).is_err());
        // visibility above the accidental-limited maximum
        assert!(matches!(
            calibrate(&Measurements::new(0.1, 1.0), &link, 78e6, Some(4.4e-6)),
            Err(Error::Calibration(_))
        ));
        let mut m = Measurements::new(13.8, 0.867);
        m.r_false_near = Some(100.0);
        assert!(calibrate(&m, &link, 78e6, None).is_err());
    }

    #[test]
    fn scan_csv_shape() {
        let p = ScenarioPreset::<f64>::baseline();
        let rows = distance_scan(&p.source, &p.link, p.f_ec, &[0.0]);
        let csv = scan_to_csv(&rows, Some(p.cutoff().unwrap()));
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], SCAN_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("# cutoff_total_km="));
    }

    #[test]
    fn f32_agrees_with_f64() {
        let p64 = predict_rates(&SourceParams::<f64>::baseline(), &LinkParams::baseline().with_length(10.0), 1.17);
        let p32 = predict_rates(&SourceParams::<f32>::baseline(), &LinkParams::baseline().with_length(10.0), 1.17);
        assert!(rel(p32.r_sift as f64, p64.r_sift) < 1e-4);
        assert!(rel(p32.r_key as f64, p64.r_key) < 1e-3);
    }
}
