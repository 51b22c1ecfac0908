//! Data reduction from coincidence histograms to protocol metrics.
//!
//! For each of the eight same-basis settings the counts inside the peak
//! window give `C_p`, and the mean of off-peak bins scaled to the peak width
//! gives the accidental level `C_0`. Then
//!
//! ```text
//! R_sift  = sum C_p / tau
//! R_false = 2 sum C_0 / tau
//! C_max   = C_01 + C_10 + C_++ + C_--   (C_+- + C_-+ for the minus state)
//! C_min   = C_00 + C_11 + C_+- + C_-+   (C_++ + C_-- for the minus state)
//! ```
//!
//! The factor 2 in `R_false` is kept as is; with the simulator's
//! conventions it converts the sifted accidentals back to `p_false f_rep`.
//! Uncertainties are first-order propagations of Poisson counting errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::photonics::UserPair;
use crate::qkd::{self, BellSign, RateInputs, SettingPair};
use crate::simulator::CoincidenceHistogram;

/// Value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

impl fmt::Display for Measured {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {}", self.value, self.sigma)
    }
}

/// Which bins count as background.
#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    /// Every bin further than `guard_bins` from the peak window edge.
    OutsidePeak { guard_bins: usize },
    /// Explicit bin indices.
    Bins(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSpec {
    /// Width of the coincidence peak window, odd.
    pub peak_window_bins: usize,
    pub background: Background,
    /// Peak centre bin; `None` locates it on the summed histogram.
    pub center: Option<usize>,
}

impl PeakSpec {
    pub fn new(peak_window_bins: usize) -> Self {
        Self {
            peak_window_bins,
            background: Background::OutsidePeak { guard_bins: 2 },
            center: None,
        }
    }

    fn half(&self) -> usize {
        self.peak_window_bins / 2
    }

    fn validate(&self, n_bins: usize) -> Result<()> {
        if self.peak_window_bins.is_multiple_of(2) || self.peak_window_bins == 0 {
            return Err(invalid("analysis.peak_window_bins", "must be odd"));
        }
        if self.peak_window_bins > n_bins {
            return Err(invalid("analysis.peak_window_bins", "wider than the histogram"));
        }
        Ok(())
    }

    /// Peak bin range and background bins for a given centre.
    fn layout(&self, n_bins: usize, center: usize) -> Result<(std::ops::Range<usize>, Vec<usize>)> {
        let h = self.half();
        let peak = center - h..center + h + 1;
        let background: Vec<usize> = match &self.background {
            Background::OutsidePeak { guard_bins } => (0..n_bins)
                .filter(|&i| i + guard_bins < peak.start || i >= peak.end + guard_bins)
                .collect(),
            Background::Bins(bins) => {
                if let Some(&i) = bins.iter().find(|&&i| i >= n_bins) {
                    return Err(invalid("analysis.background", format!("bin {i} out of range")));
                }
                if let Some(&i) = bins.iter().find(|i| peak.contains(i)) {
                    return Err(invalid("analysis.background", format!("bin {i} overlaps the peak window")));
                }
                bins.clone()
            }
        };
        if background.is_empty() {
            return Err(invalid("analysis.background", "empty background selection"));
        }
        Ok((peak, background))
    }
}

/// Peak and background tallies of one setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingCounts {
    pub setting: SettingPair,
    pub peak: u64,
    pub background_sum: u64,
    pub background_bins: usize,
}

impl SettingCounts {
    /// Mean background per bin scaled to the peak width.
    fn accidentals(&self, width: usize) -> f64 {
        width as f64 * self.background_sum as f64 / self.background_bins as f64
    }

    fn accidentals_var(&self, width: usize) -> f64 {
        let s = width as f64 / self.background_bins as f64;
        s * s * self.background_sum as f64
    }
}

/// The eight same-basis histograms of one run, checked for consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    histograms: BTreeMap<SettingPair, CoincidenceHistogram>,
    pub duration_s: f64,
    pub bin_width_ps: f64,
    pub n_bins: usize,
}

impl HistogramSet {
    pub fn new(histograms: Vec<CoincidenceHistogram>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for h in histograms {
            h.validate()?;
            if !h.setting.same_basis() {
                continue;
            }
            let label = h.setting.label();
            if map.insert(h.setting, h).is_some() {
                return Err(Error::HistogramMismatch(format!("setting {label} given twice")));
            }
        }
        let missing: Vec<String> = SettingPair::same_basis_settings()
            .iter()
            .filter(|s| !map.contains_key(s))
            .map(|s| s.label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingSettings(missing));
        }
        let first = map.values().next().expect("eight settings present");
        let (duration_s, bin_width_ps, n_bins) = (first.duration_s, first.bin_width_ps, first.bins.len());
        for h in map.values() {
            if h.duration_s != duration_s {
                return Err(Error::HistogramMismatch(format!(
                    "setting {}: duration {} s differs from {} s",
                    h.setting, h.duration_s, duration_s
                )));
            }
            if h.bin_width_ps != bin_width_ps || h.bins.len() != n_bins {
                return Err(Error::HistogramMismatch(format!(
                    "setting {}: binning differs from the other settings",
                    h.setting
                )));
            }
        }
        Ok(Self {
            histograms: map,
            duration_s,
            bin_width_ps,
            n_bins,
        })
    }

    pub fn get(&self, setting: &SettingPair) -> &CoincidenceHistogram {
        &self.histograms[setting]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoincidenceHistogram> {
        self.histograms.values()
    }

    pub fn channel_pair(&self) -> Option<UserPair> {
        self.iter().next().and_then(|h| h.channel_pair)
    }

    pub fn total_km(&self) -> Option<f64> {
        self.iter().next().and_then(|h| h.total_km)
    }

    pub fn summed(&self) -> Vec<u64> {
        let mut sum = vec![0u64; self.n_bins];
        for h in self.iter() {
            for (s, c) in sum.iter_mut().zip(&h.bins) {
                *s += c;
            }
        }
        sum
    }

    /// Global maximum of the summed histogram; ties go to the bin nearest
    /// zero delay. Clamped so the peak window fits.
    pub fn locate_peak(&self, peak_window_bins: usize) -> usize {
        let sum = self.summed();
        let mid = self.n_bins / 2;
        let best = (0..self.n_bins)
            .max_by(|&a, &b| {
                sum[a]
                    .cmp(&sum[b])
                    .then_with(|| mid.abs_diff(b).cmp(&mid.abs_diff(a)))
            })
            .unwrap_or(mid);
        let h = peak_window_bins / 2;
        best.clamp(h, self.n_bins - 1 - h)
    }

    /// Per-setting tallies in canonical setting order.
    pub fn counts(&self, spec: &PeakSpec) -> Result<Vec<SettingCounts>> {
        spec.validate(self.n_bins)?;
        let h = spec.half();
        let center = match spec.center {
            Some(c) if c >= h && c + h < self.n_bins => c,
            Some(c) => return Err(invalid("analysis.center", format!("bin {c} leaves the peak outside the histogram"))),
            None => self.locate_peak(spec.peak_window_bins),
        };
        let (peak, background) = spec.layout(self.n_bins, center)?;
        Ok(SettingPair::same_basis_settings()
            .iter()
            .map(|s| {
                let bins = &self.get(s).bins;
                SettingCounts {
                    setting: *s,
                    peak: bins[peak.clone()].iter().sum(),
                    background_sum: background.iter().map(|&i| bins[i]).sum(),
                    background_bins: background.len(),
                }
            })
            .collect())
    }

    /// Reads every `hist_*.csv` file of a directory as one run.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let files = csv_files(dir)?;
        let hists = files
            .iter()
            .map(|p| CoincidenceHistogram::read(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(hists)
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |e: std::io::Error| Error::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("hist_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Sum of peak counts over the eight settings divided by `tau`.
pub fn sifted_rate(set: &HistogramSet, spec: &PeakSpec) -> Result<Measured> {
    let total: u64 = set.counts(spec)?.iter().map(|c| c.peak).sum();
    let tau = set.duration_s;
    Ok(Measured::new(total as f64 / tau, (total as f64).sqrt() / tau))
}

/// `2 sum C_0 / tau`, with `C_0` the background mean scaled to the peak width.
pub fn false_rate(set: &HistogramSet, spec: &PeakSpec) -> Result<Measured> {
    let counts = set.counts(spec)?;
    let w = spec.peak_window_bins;
    let acc: f64 = counts.iter().map(|c| c.accidentals(w)).sum();
    let var: f64 = counts.iter().map(|c| c.accidentals_var(w)).sum();
    let tau = set.duration_s;
    Ok(Measured::new(2.0 * acc / tau, 2.0 * var.sqrt() / tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub c_max: u64,
    pub c_min: u64,
    pub bell_sign: BellSign,
}

impl Extrema {
    pub fn visibility(&self) -> Result<Measured> {
        let (m, n) = (self.c_max as f64, self.c_min as f64);
        let v = qkd::visibility_from_extrema(m, n)?;
        let s = m + n;
        Ok(Measured::new(v, (4.0 * m * n / (s * s * s)).sqrt()))
    }
}

/// `(C_max, C_min)` under whichever state sign gives the larger visibility.
pub fn extrema_from_counts(counts: &[SettingCounts]) -> Extrema {
    let split = |sign: BellSign| {
        counts.iter().fold((0u64, 0u64), |(hi, lo), c| {
            if sign.is_correlated(&c.setting) {
                (hi + c.peak, lo)
            } else {
                (hi, lo + c.peak)
            }
        })
    };
    let (plus_max, plus_min) = split(BellSign::Plus);
    let (minus_max, minus_min) = split(BellSign::Minus);
    // same total, so the larger C_max has the larger visibility
    if minus_max > plus_max {
        Extrema {
            c_max: minus_max,
            c_min: minus_min,
            bell_sign: BellSign::Minus,
        }
    } else {
        Extrema {
            c_max: plus_max,
            c_min: plus_min,
            bell_sign: BellSign::Plus,
        }
    }
}

pub fn extrema_and_sign(set: &HistogramSet, spec: &PeakSpec) -> Result<Extrema> {
    Ok(extrema_from_counts(&set.counts(spec)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Car {
    Finite(f64),
    /// Peak counts with an empty background.
    Infinite,
}

impl fmt::Display for Car {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Car::Finite(v) => write!(f, "{v}"),
            Car::Infinite => f.write_str("inf"),
        }
    }
}

/// Total peak counts over total background scaled to the peak width.
pub fn car(set: &HistogramSet, spec: &PeakSpec) -> Result<Car> {
    let counts = set.counts(spec)?;
    let peak: u64 = counts.iter().map(|c| c.peak).sum();
    let acc: f64 = counts.iter().map(|c| c.accidentals(spec.peak_window_bins)).sum();
    if acc > 0.0 {
        Ok(Car::Finite(peak as f64 / acc))
    } else if peak > 0 {
        Ok(Car::Infinite)
    } else {
        Err(Error::Degenerate("no counts in peak or background".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMetrics {
    pub r_sift: Measured,
    pub r_false: Measured,
    pub v_tot: Measured,
    /// Always `(1 - v_tot) / 2`.
    pub qber: Measured,
    pub car: Car,
    /// Signed key-rate bound; reports clamp at zero.
    pub r_key: Measured,
    pub bell_sign_detected: BellSign,
}

/// QBER and key rate from a sifted rate and a visibility.
///
/// `R_raw = 2 R_sift`; the key-rate sigma combines the rate and QBER
/// contributions to first order, treating them as independent.
pub fn key_metrics(r_sift: Measured, v_tot: Measured, f_ec: f64) -> Result<(Measured, Measured)> {
    let e = qkd::qber_from_visibility(v_tot.value)?;
    let qber = Measured::new(e, v_tot.sigma / 2.0);
    let e_clamped = e.min(0.5);
    let inputs = RateInputs::new(2.0 * r_sift.value, e_clamped, f_ec)?;
    let r_key = qkd::secret_key_rate(inputs);
    let h = qkd::binary_entropy(e_clamped)?;
    let d_rate = 1.0 - (1.0 + f_ec) * h;
    let mut var = (d_rate * r_sift.sigma).powi(2);
    if qber.sigma > 0.0 && e_clamped > 0.0 && e_clamped < 0.5 {
        let d_e = -r_sift.value * (1.0 + f_ec) * qkd::binary_entropy_derivative(e_clamped);
        var += (d_e * qber.sigma).powi(2);
    }
    Ok((qber, Measured::new(r_key, var.sqrt())))
}

pub fn full_metrics(set: &HistogramSet, spec: &PeakSpec, f_ec: f64) -> Result<LinkMetrics> {
    let counts = set.counts(spec)?;
    let r_sift = sifted_rate(set, spec)?;
    let r_false = false_rate(set, spec)?;
    let ext = extrema_from_counts(&counts);
    let v_tot = ext.visibility()?;
    let (qber, r_key) = key_metrics(r_sift, v_tot, f_ec)?;
    Ok(LinkMetrics {
        r_sift,
        r_false,
        v_tot,
        qber,
        car: car(set, spec)?,
        r_key,
        bell_sign_detected: ext.bell_sign,
    })
}

/// One row of a metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub channel_pair: String,
    pub total_km: f64,
    pub metrics: LinkMetrics,
}

pub const REPORT_CSV_HEADER: &str = "channel_pair,total_km,v_tot,v_tot_sigma,r_sift,r_sift_sigma,qber,qber_sigma,r_key,r_key_sigma,r_false,r_false_sigma,car,bell_sign";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.channel_pair,
            r.total_km,
            m.v_tot.value,
            m.v_tot.sigma,
            m.r_sift.value,
            m.r_sift.sigma,
            m.qber.value,
            m.qber.sigma,
            qkd::clamp_rate(m.r_key.value),
            m.r_key.sigma,
            m.r_false.value,
            m.r_false.sigma,
            m.car,
            m.bell_sign_detected.label(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkd::BasisSetting;

    fn set_with(f: impl Fn(&SettingPair) -> Vec<u64>, duration: f64) -> HistogramSet {
        let hists = SettingPair::same_basis_settings()
            .iter()
            .map(|s| {
                let mut h = CoincidenceHistogram::zeros(*s, 21, 164.0, duration, 0);
                h.bins = f(s);
                h
            })
            .collect();
        HistogramSet::new(hists).unwrap()
    }

    fn peak_only(counts: impl Fn(&SettingPair) -> u64) -> impl Fn(&SettingPair) -> Vec<u64> {
        move |s| {
            let mut v = vec![0; 21];
            v[10] = counts(s);
            v
        }
    }

    #[test]
    fn sifted_rate_examples() {
        let spec = PeakSpec::new(5);
        let set = set_with(peak_only(|_| 310), 180.0);
        let r = sifted_rate(&set, &spec).unwrap();
        assert!((r.value - 2480.0 / 180.0).abs() < 1e-12);
        assert!((r.sigma - 2480f64.sqrt() / 180.0).abs() < 1e-12);
        assert!((r.value - 13.8).abs() < 0.05 && (r.sigma - 0.28).abs() < 0.01);

        let zero = set_with(|_| vec![0; 21], 180.0);
        assert_eq!(sifted_rate(&zero, &spec).unwrap(), Measured::new(0.0, 0.0));

        let long = set_with(peak_only(|_| 310), 360.0);
        assert!((sifted_rate(&long, &spec).unwrap().value * 2.0 - r.value).abs() < 1e-12);
    }

    #[test]
    fn false_rate_examples() {
        let spec = PeakSpec::new(5);
        let flat = set_with(|_| vec![3; 21], 100.0);
        let r = false_rate(&flat, &spec).unwrap();
        assert!((r.value - 2.0 * 8.0 * 5.0 * 3.0 / 100.0).abs() < 1e-12);
        let clean = set_with(peak_only(|_| 10), 100.0);
        assert_eq!(false_rate(&clean, &spec).unwrap().value, 0.0);

        let mut spec = PeakSpec::new(5);
        spec.background = Background::Bins(vec![]);
        assert!(false_rate(&flat, &spec).is_err());
        spec.background = Background::Bins(vec![10]);
        assert!(false_rate(&clean, &spec).is_err());
    }

    #[test]
    fn extrema_examples() {
        use BasisSetting as S;
        let spec = PeakSpec::new(5);
        let ideal = |s: &SettingPair| {
            let hot = [
                SettingPair::new(S::ZERO, S::ONE),
                SettingPair::new(S::ONE, S::ZERO),
                SettingPair::new(S::PLUS, S::PLUS),
                SettingPair::new(S::MINUS, S::MINUS),
            ];
            if hot.contains(s) {
                100
            } else {
                0
            }
        };
        let e = extrema_and_sign(&set_with(peak_only(ideal), 1.0), &spec).unwrap();
        assert_eq!((e.c_max, e.c_min, e.bell_sign), (400, 0, BellSign::Plus));

        let swapped = move |s: &SettingPair| {
            if s.alice.basis == crate::qkd::Basis::Diagonal {
                ideal(&SettingPair::new(s.alice, if s.bob == S::PLUS { S::MINUS } else { S::PLUS }))
            } else {
                ideal(s)
            }
        };
        let e2 = extrema_and_sign(&set_with(peak_only(swapped), 1.0), &spec).unwrap();
        assert_eq!((e2.c_max, e2.c_min, e2.bell_sign), (400, 0, BellSign::Minus));
        assert_eq!(e.visibility().unwrap(), e2.visibility().unwrap());
    }

    #[test]
    fn car_examples() {
        let spec = PeakSpec::new(5);
        assert_eq!(car(&set_with(|_| vec![4; 21], 1.0), &spec).unwrap(), Car::Finite(1.0));
        assert_eq!(car(&set_with(peak_only(|_| 9), 1.0), &spec).unwrap(), Car::Infinite);
        assert!(car(&set_with(|_| vec![0; 21], 1.0), &spec).is_err());
    }

    #[test]
    fn summary_metrics() {
        let (qber, r_key) = key_metrics(Measured::new(13.8, 0.3), Measured::new(0.867, 0.010), 1.17).unwrap();
        assert!((qber.value - 0.0665).abs() < 1e-12);
        assert!((qber.sigma - 0.005).abs() < 1e-12);
        assert!((r_key.value - 3.28).abs() / 3.28 < 0.02, "{r_key}");

        let (qber, _) = key_metrics(Measured::exact(10.0), Measured::exact(0.92), 1.17).unwrap();
        assert!((qber.value - 0.04).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_is_an_error() {
        let set = set_with(|_| vec![0; 21], 180.0);
        assert!(full_metrics(&set, &PeakSpec::new(5), 1.17).is_err());
    }

    #[test]
    fn missing_and_mismatched_settings() {
        let mut hists: Vec<_> = SettingPair::same_basis_settings()
            .iter()
            .map(|s| CoincidenceHistogram::zeros(*s, 21, 164.0, 180.0, 0))
            .collect();
        let mut short = hists.clone();
        short.truncate(6);
        match HistogramSet::new(short) {
            Err(Error::MissingSettings(m)) => assert_eq!(m, vec!["-+".to_string(), "--".to_string()]),
            other => panic!("{other:?}"),
        }
        hists[3].duration_s = 300.0;
        assert!(matches!(HistogramSet::new(hists), Err(Error::HistogramMismatch(_))));
    }

    #[test]
    fn peak_location_prefers_center_on_ties() {
        let set = set_with(|_| vec![1; 21], 1.0);
        assert_eq!(set.locate_peak(5), 10);
        let set = set_with(
            |_| {
                let mut v = vec![0; 21];
                v[0] = 50;
                v
            },
            1.0,
        );
        assert_eq!(set.locate_peak(5), 2);
    }
}
