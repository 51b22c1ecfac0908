//! Coincidence histograms and their CSV file format.
//!
//! ```text
//! # setting=01
//! # bin_width_ps=164
//! # duration_s=180
//! # seed=42
//! # channel_pair=23-27
//! # total_km=0
//! bin_index,delay_ps,count
//! 0,-4920,3
//! ...
//! ```
//!
//! `setting`, `bin_width_ps`, `duration_s` and `seed` are required;
//! `channel_pair` and `total_km` label the run for reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::photonics::UserPair;
use crate::qkd::SettingPair;

pub const HISTOGRAM_CSV_HEADER: &str = "bin_index,delay_ps,count";

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub setting: SettingPair,
    /// Counts over a delay window centred on zero; odd length.
    pub bins: Vec<u64>,
    pub bin_width_ps: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub channel_pair: Option<UserPair>,
    pub total_km: Option<f64>,
}

impl CoincidenceHistogram {
    pub fn zeros(setting: SettingPair, n_bins: usize, bin_width_ps: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            setting,
            bins: vec![0; n_bins],
            bin_width_ps,
            duration_s,
            seed,
            channel_pair: None,
            total_km: None,
        }
    }

    pub fn center_bin(&self) -> usize {
        self.bins.len() / 2
    }

    /// Centre delay of bin `i`, ps (Bob minus Alice).
    pub fn delay_ps(&self, i: usize) -> f64 {
        (i as f64 - self.center_bin() as f64) * self.bin_width_ps
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.len().is_multiple_of(2) {
            return Err(Error::HistogramMismatch(format!(
                "setting {}: bin count {} is not odd",
                self.setting,
                self.bins.len()
            )));
        }
        if !(self.bin_width_ps > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::HistogramMismatch(format!(
                "setting {}: bin width and duration must be positive",
                self.setting
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# setting={}", self.setting);
        let _ = writeln!(out, "# bin_width_ps={}", self.bin_width_ps);
        let _ = writeln!(out, "# duration_s={}", self.duration_s);
        let _ = writeln!(out, "# seed={}", self.seed);
        if let Some(p) = self.channel_pair {
            let _ = writeln!(out, "# channel_pair={}", p.label());
        }
        if let Some(km) = self.total_km {
            let _ = writeln!(out, "# total_km={km}");
        }
        out.push_str(HISTOGRAM_CSV_HEADER);
        out.push('\n');
        for (i, c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{c}", self.delay_ps(i));
        }
        out
    }

    /// Parses the CSV format; `file` is only used in error messages.
    pub fn from_csv(text: &str, file: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            file: file.to_string(),
            line,
            reason,
        };
        let mut setting = None;
        let mut bin_width = None;
        let mut duration = None;
        let mut seed = None;
        let mut channel_pair = None;
        let mut total_km = None;
        let mut header_seen = false;
        let mut bins = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.split_once('=') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                let num = |v: &str| v.parse::<f64>().map_err(|e| err(n, format!("{k}: {e}")));
                match k {
                    "setting" => {
                        setting = Some(
                            SettingPair::parse(v).ok_or_else(|| err(n, format!("unknown setting `{v}`")))?,
                        )
                    }
                    "bin_width_ps" => bin_width = Some(num(v)?),
                    "duration_s" => duration = Some(num(v)?),
                    "seed" => seed = Some(v.parse::<u64>().map_err(|e| err(n, format!("seed: {e}")))?),
                    "channel_pair" => {
                        channel_pair =
                            Some(UserPair::parse(v).ok_or_else(|| err(n, format!("bad channel pair `{v}`")))?)
                    }
                    "total_km" => total_km = Some(num(v)?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != HISTOGRAM_CSV_HEADER {
                    return Err(err(n, format!("expected header `{HISTOGRAM_CSV_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(n, format!("expected 3 fields, found {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|e| err(n, format!("bin_index: {e}")))?;
            fields[1]
                .parse::<f64>()
                .map_err(|e| err(n, format!("delay_ps: {e}")))?;
            let count: u64 = fields[2].parse().map_err(|e| err(n, format!("count: {e}")))?;
            if index != bins.len() {
                return Err(err(n, format!("bin_index {index} out of sequence")));
            }
            bins.push(count);
        }

        let last = text.lines().count().max(1);
        let h = Self {
            setting: setting.ok_or_else(|| err(last, "missing `# setting=` metadata".into()))?,
            bins,
            bin_width_ps: bin_width.ok_or_else(|| err(last, "missing `# bin_width_ps=` metadata".into()))?,
            duration_s: duration.ok_or_else(|| err(last, "missing `# duration_s=` metadata".into()))?,
            seed: seed.ok_or_else(|| err(last, "missing `# seed=` metadata".into()))?,
            channel_pair,
            total_km,
        };
        if !header_seen {
            return Err(err(last, "missing column header".into()));
        }
        h.validate().map_err(|e| err(last, e.to_string()))?;
        Ok(h)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_csv(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Conventional file name: `hist_<setting>.csv` with `+`/`-` as `p`/`m`.
    pub fn file_name(&self) -> String {
        format!("hist_{}.csv", self.setting.file_label())
    }
}

/// Bins `bob - alice` delays of two sorted timestamp streams into `hist`.
pub fn accumulate_coincidences(alice_ps: &[f64], bob_ps: &[f64], hist: &mut CoincidenceHistogram) {
    let w = hist.bin_width_ps;
    let center = hist.center_bin() as f64;
    let reach = (center + 0.5) * w;
    let n = hist.bins.len();
    let mut start = 0;
    for &ta in alice_ps {
        while start < bob_ps.len() && bob_ps[start] < ta - reach {
            start += 1;
        }
        for &tb in &bob_ps[start..] {
            let delay = tb - ta;
            if delay >= reach {
                break;
            }
            let bin = (delay / w + center + 0.5).floor();
            if bin >= 0.0 && (bin as usize) < n {
                hist.bins[bin as usize] += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkd::BasisSetting;

    fn sample() -> CoincidenceHistogram {
        let mut h = CoincidenceHistogram::zeros(
            SettingPair::new(BasisSetting::PLUS, BasisSetting::MINUS),
            5,
            164.0,
            180.0,
            7,
        );
        h.bins = vec![1, 2, 30, 4, 0];
        h.channel_pair = Some(UserPair { alice: 23, bob: 27 });
        h.total_km = Some(50.0);
        h
    }

    #[test]
    fn csv_round_trip() {
        let h = sample();
        let text = h.to_csv();
        assert!(text.starts_with("# setting=+-\n"));
        assert_eq!(CoincidenceHistogram::from_csv(&text, "x").unwrap(), h);
        assert_eq!(h.file_name(), "hist_pm.csv");
    }

    #[test]
    fn parse_errors_name_line() {
        let text = sample().to_csv().replace("2,0,30", "2,0,thirty");
        match CoincidenceHistogram::from_csv(&text, "f.csv") {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, "f.csv");
                assert_eq!(line, 10);
            }
            other => panic!("{other:?}"),
        }
        let text = sample().to_csv().replace("# seed=7\n", "");
        assert!(CoincidenceHistogram::from_csv(&text, "f.csv").is_err());
    }

    #[test]
    fn delays_and_binning() {
        let mut h = CoincidenceHistogram::zeros(SettingPair::new(BasisSetting::ZERO, BasisSetting::ONE), 5, 100.0, 1.0, 0);
        assert_eq!(h.delay_ps(0), -200.0);
        assert_eq!(h.delay_ps(4), 200.0);
        let alice = [1000.0, 5000.0];
        let bob = [1000.0, 1049.0, 1051.0, 4751.0, 5260.0];
        accumulate_coincidences(&alice, &bob, &mut h);
        // 0 -> bin 2, +49 -> bin 2, +51 -> bin 3, -249 -> bin 0, +260 out of range
        assert_eq!(h.bins, vec![1, 0, 2, 1, 0]);
    }
}
