//! Effective-index models for the three guided modes taking part in type-II
//! down-conversion: the pump Bragg mode and the TE00 / TM00 signal modes.
//!
//! Indices are supplied as data. Each mode is a polynomial in optical
//! frequency (THz), `n(f) = sum_k c_k (f - f_ref)^k`, valid over a declared
//! band. A TOML file holds one table per mode:
//!
//! ```toml
//! [pump]            # TE Bragg mode
//! coefficients = [3.05, 0.0012]
//! reference_thz = 385.0
//! band_thz = [370.0, 400.0]
//!
//! [te00]
//! coefficients = [3.20, 0.0010]
//! reference_thz = 192.5
//! band_thz = [180.0, 205.0]
//!
//! [tm00]
//! coefficients = [3.19, 0.0011]
//! reference_thz = 192.5
//! band_thz = [180.0, 205.0]
//! ```
//!
//! `reference_thz` defaults to 0, giving plain ascending powers of `f`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::num::Real;

/// Samples used to verify positivity and finiteness over a band at load time.
const VALIDITY_SAMPLES: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    PumpBragg,
    Te00,
    Tm00,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::PumpBragg => "pump",
            Mode::Te00 => "te00",
            Mode::Tm00 => "tm00",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeIndex<T> {
    pub coefficients: Vec<T>,
    pub reference_thz: T,
    pub band_thz: (T, T),
}

impl<T: Real> ModeIndex<T> {
    pub fn new(coefficients: Vec<T>, reference_thz: T, band_thz: (T, T)) -> Self {
        Self {
            coefficients,
            reference_thz,
            band_thz,
        }
    }

    /// Frequency-independent index valid over `band_thz`.
    pub fn constant(n: T, band_thz: (T, T)) -> Self {
        Self::new(vec![n], T::zero(), band_thz)
    }

    pub fn contains(&self, thz: T) -> bool {
        thz >= self.band_thz.0 && thz <= self.band_thz.1
    }

    fn eval_unchecked(&self, thz: T) -> T {
        let x = thz - self.reference_thz;
        self.coefficients
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * x + c)
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        let (lo, hi) = self.band_thz;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo > T::zero()) {
            return Err(Error::Config(format!(
                "{}: validity band must satisfy 0 < lo < hi",
                mode.name()
            )));
        }
        if self.coefficients.is_empty() {
            return Err(Error::Config(format!("{}: no coefficients", mode.name())));
        }
        let steps = T::lit((VALIDITY_SAMPLES - 1) as f64);
        for i in 0..VALIDITY_SAMPLES {
            let f = lo + (hi - lo) * T::lit(i as f64) / steps;
            let n = self.eval_unchecked(f);
            if !(n.is_finite() && n > T::zero()) {
                return Err(Error::Config(format!(
                    "{}: index {n} at {f} THz is not positive and finite",
                    mode.name()
                )));
            }
        }
        Ok(())
    }
}

/// Immutable set of effective-index curves.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexModel<T> {
    pump: ModeIndex<T>,
    te00: ModeIndex<T>,
    tm00: ModeIndex<T>,
}

impl<T: Real> IndexModel<T> {
    pub fn new(pump: ModeIndex<T>, te00: ModeIndex<T>, tm00: ModeIndex<T>) -> Result<Self> {
        pump.validate(Mode::PumpBragg)?;
        te00.validate(Mode::Te00)?;
        tm00.validate(Mode::Tm00)?;
        Ok(Self { pump, te00, tm00 })
    }

    pub fn mode(&self, mode: Mode) -> &ModeIndex<T> {
        match mode {
            Mode::PumpBragg => &self.pump,
            Mode::Te00 => &self.te00,
            Mode::Tm00 => &self.tm00,
        }
    }

    /// Effective index of `mode` at `thz`; errors outside the validity band.
    pub fn index(&self, mode: Mode, thz: T) -> Result<T> {
        let m = self.mode(mode);
        if !m.contains(thz) {
            return Err(Error::OutOfBand {
                mode: mode.name().to_string(),
                thz: thz.to_f64_lossy(),
                lo: m.band_thz.0.to_f64_lossy(),
                hi: m.band_thz.1.to_f64_lossy(),
            });
        }
        Ok(m.eval_unchecked(thz))
    }

    /// Same model with the TE00 and TM00 curves exchanged.
    pub fn with_te_tm_swapped(&self) -> Self {
        Self {
            pump: self.pump.clone(),
            te00: self.tm00.clone(),
            tm00: self.te00.clone(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: IndexModelFile = toml::from_str(text).map_err(|e| Error::Parse {
            file: "<index model>".into(),
            line: toml_line(text, &e),
            reason: e.message().to_string(),
        })?;
        let conv = |m: ModeSection| {
            ModeIndex::new(
                m.coefficients.into_iter().map(T::lit).collect(),
                T::lit(m.reference_thz),
                (T::lit(m.band_thz[0]), T::lit(m.band_thz[1])),
            )
        };
        Self::new(conv(file.pump), conv(file.te00), conv(file.tm00))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { line, reason, .. } => Error::Parse {
                file: path.display().to_string(),
                line,
                reason,
            },
            other => other,
        })
    }
}

/// 1-based line of a TOML error, or 0 when no span is available.
pub(crate) fn toml_line(text: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeSection {
    coefficients: Vec<f64>,
    #[serde(default)]
    reference_thz: f64,
    band_thz: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexModelFile {
    pump: ModeSection,
    te00: ModeSection,
    tm00: ModeSection,
}
