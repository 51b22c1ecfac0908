//! Protocol-level rate math for entanglement-based BBM92.
//!
//! Binary entropy, the visibility/QBER relations and the asymptotic
//! secret-key-rate lower bound `R_key >= R_raw/2 * (1 - f(e) H2(e) - H2(e))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::num::Real;

/// Default error-correction inefficiency. Chosen so that a sifted rate of
/// 13.8 bit/s at e = 0.066 yields a key rate of 3.28 bit/s.
pub const DEFAULT_F_EC: f64 = 1.17;

/// Measurement basis of one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// `{|0>, |1>}`, i.e. TE00 / TM00.
    Computational,
    /// `{|+>, |->}`.
    Diagonal,
}

/// Outcome index within a basis: `Zero` is `|0>` or `|+>`, `One` is `|1>` or `|->`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }
}

/// A single-party projective setting: which basis, and which detector port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisSetting {
    pub basis: Basis,
    pub outcome: Outcome,
}

impl BasisSetting {
    pub const ZERO: Self = Self::new(Basis::Computational, Outcome::Zero);
    pub const ONE: Self = Self::new(Basis::Computational, Outcome::One);
    pub const PLUS: Self = Self::new(Basis::Diagonal, Outcome::Zero);
    pub const MINUS: Self = Self::new(Basis::Diagonal, Outcome::One);

    pub const fn new(basis: Basis, outcome: Outcome) -> Self {
        Self { basis, outcome }
    }

    /// `0`, `1`, `+` or `-`.
    pub fn symbol(self) -> char {
        match (self.basis, self.outcome) {
            (Basis::Computational, Outcome::Zero) => '0',
            (Basis::Computational, Outcome::One) => '1',
            (Basis::Diagonal, Outcome::Zero) => '+',
            (Basis::Diagonal, Outcome::One) => '-',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(Self::ZERO),
            '1' => Some(Self::ONE),
            '+' | 'p' => Some(Self::PLUS),
            '-' | 'm' => Some(Self::MINUS),
            _ => None,
        }
    }
}

/// Joint (Alice, Bob) projective setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingPair {
    pub alice: BasisSetting,
    pub bob: BasisSetting,
}

impl SettingPair {
    pub const fn new(alice: BasisSetting, bob: BasisSetting) -> Self {
        Self { alice, bob }
    }

    pub fn same_basis(&self) -> bool {
        self.alice.basis == self.bob.basis
    }

    /// The eight same-basis settings in a fixed order:
    /// `00, 01, 10, 11, ++, +-, -+, --`. The position in this list is the
    /// setting index used for seed derivation.
    pub fn same_basis_settings() -> [SettingPair; 8] {
        use BasisSetting as S;
        [
            Self::new(S::ZERO, S::ZERO),
            Self::new(S::ZERO, S::ONE),
            Self::new(S::ONE, S::ZERO),
            Self::new(S::ONE, S::ONE),
            Self::new(S::PLUS, S::PLUS),
            Self::new(S::PLUS, S::MINUS),
            Self::new(S::MINUS, S::PLUS),
            Self::new(S::MINUS, S::MINUS),
        ]
    }

    /// Two-character label such as `01` or `+-`.
    pub fn label(&self) -> String {
        format!("{}{}", self.alice.symbol(), self.bob.symbol())
    }

    /// Filesystem-safe label: `+` becomes `p`, `-` becomes `m`.
    pub fn file_label(&self) -> String {
        self.label().replace('+', "p").replace('-', "m")
    }

    pub fn parse(label: &str) -> Option<Self> {
        let mut chars = label.chars();
        let a = BasisSetting::from_symbol(chars.next()?)?;
        let b = BasisSetting::from_symbol(chars.next()?)?;
        if chars.next().is_some() {
            return None;
        }
        Some(Self::new(a, b))
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.alice.symbol(), self.bob.symbol())
    }
}

/// Relative phase of the shared Bell state `(|01> +/- |10>) / sqrt(2)`.
///
/// For `Plus` the diagonal-basis outcomes are correlated (`++`, `--`);
/// for `Minus` they are anti-correlated (`+-`, `-+`). The computational
/// basis is anti-correlated either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BellSign {
    #[default]
    Plus,
    Minus,
}

impl BellSign {
    pub fn label(self) -> &'static str {
        match self {
            BellSign::Plus => "plus",
            BellSign::Minus => "minus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plus" | "+" => Some(BellSign::Plus),
            "minus" | "-" => Some(BellSign::Minus),
            _ => None,
        }
    }

    /// Whether `setting` is a correlated (maximum-count) configuration for
    /// this state. Cross-basis settings are never correlated.
    pub fn is_correlated(self, setting: &SettingPair) -> bool {
        if !setting.same_basis() {
            return false;
        }
        let equal = setting.alice.outcome == setting.bob.outcome;
        match (setting.alice.basis, self) {
            (Basis::Computational, _) => !equal,
            (Basis::Diagonal, BellSign::Plus) => equal,
            (Basis::Diagonal, BellSign::Minus) => !equal,
        }
    }
}

/// Inputs to the key-rate bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs<T> {
    /// Raw coincidence rate over all basis combinations, 1/s.
    pub r_raw: T,
    /// Quantum bit error rate, in `[0, 0.5]`.
    pub qber: T,
    /// Error-correction inefficiency, `>= 1`.
    pub f_ec: T,
}

impl<T: Real> RateInputs<T> {
    pub fn new(r_raw: T, qber: T, f_ec: T) -> Result<Self> {
        if !(r_raw >= T::zero()) || !r_raw.is_finite() {
            return Err(domain("r_raw", r_raw.to_f64_lossy(), "[0, inf)"));
        }
        if !(qber >= T::zero() && qber <= T::lit(0.5)) {
            return Err(domain("qber", qber.to_f64_lossy(), "[0, 0.5]"));
        }
        if !(f_ec >= T::one()) || !f_ec.is_finite() {
            return Err(invalid("f_ec", format!("must be >= 1, got {f_ec}")));
        }
        Ok(Self { r_raw, qber, f_ec })
    }
}

/// Binary entropy `H2(x)` in bits, with `0 log 0 = 0`.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(domain("x", x.to_f64_lossy(), "[0, 1]"));
    }
    Ok(entropy_unchecked(x))
}

fn entropy_unchecked<T: Real>(x: T) -> T {
    let term = |p: T| {
        if p <= T::zero() {
            T::zero()
        } else {
            -p * p.log2()
        }
    };
    term(x) + term(T::one() - x)
}

/// `dH2/dx = log2((1 - x) / x)`.
pub fn binary_entropy_derivative<T: Real>(x: T) -> T {
    ((T::one() - x) / x).log2()
}

/// `e = (1 - V) / 2`.
pub fn qber_from_visibility<T: Real>(v_tot: T) -> Result<T> {
    if !(v_tot >= -T::one() && v_tot <= T::one()) {
        return Err(domain("v_tot", v_tot.to_f64_lossy(), "[-1, 1]"));
    }
    Ok((T::one() - v_tot) / T::lit(2.0))
}

/// `V = 1 - 2e`.
pub fn visibility_from_qber<T: Real>(qber: T) -> T {
    T::one() - T::lit(2.0) * qber
}

/// `V = (C_max - C_min) / (C_max + C_min)`.
pub fn visibility_from_extrema<T: Real>(c_max: T, c_min: T) -> Result<T> {
    if !(c_max >= T::zero()) {
        return Err(domain("c_max", c_max.to_f64_lossy(), "[0, inf)"));
    }
    if !(c_min >= T::zero()) {
        return Err(domain("c_min", c_min.to_f64_lossy(), "[0, inf)"));
    }
    let total = c_max + c_min;
    if total <= T::zero() {
        return Err(crate::Error::Degenerate(
            "C_max + C_min = 0, visibility undefined".into(),
        ));
    }
    Ok((c_max - c_min) / total)
}

/// Signed secret-key-rate lower bound in bit/s.
///
/// Negative values are returned as is so that callers can bracket the
/// zero crossing; reporting code clamps with [`clamp_rate`].
pub fn secret_key_rate<T: Real>(inputs: RateInputs<T>) -> T {
    let h = entropy_unchecked(inputs.qber);
    T::lit(0.5) * inputs.r_raw * (T::one() - inputs.f_ec * h - h)
}

/// Key rate for reporting: negative bounds mean no key.
pub fn clamp_rate<T: Real>(r: T) -> T {
    r.max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_anchor_points() {
        assert_eq!(binary_entropy(0.5_f64).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0_f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0_f64).unwrap(), 0.0);
        // 40-digit reference: 0.35081592989560488973...
        assert_abs_diff_eq!(binary_entropy(0.066_f64).unwrap(), 0.350_815_929_895_604_9, epsilon = 1e-14);
        assert_abs_diff_eq!(binary_entropy(0.066_f32).unwrap(), 0.350_815_9, epsilon = 1e-6);
    }

    #[test]
    fn entropy_domain() {
        assert!(binary_entropy(-0.01_f64).is_err());
        assert!(binary_entropy(1.01_f64).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn visibility_and_qber() {
        assert_eq!(qber_from_visibility(1.0_f64).unwrap(), 0.0);
        assert_eq!(qber_from_visibility(0.0_f64).unwrap(), 0.5);
        assert_abs_diff_eq!(qber_from_visibility(0.867_f64).unwrap(), 0.0665, epsilon = 1e-12);
        assert!(qber_from_visibility(1.2_f64).is_err());

        assert_eq!(visibility_from_extrema(100.0_f64, 0.0).unwrap(), 1.0);
        assert_eq!(visibility_from_extrema(50.0_f64, 50.0).unwrap(), 0.0);
        assert_abs_diff_eq!(visibility_from_extrema(933.0_f64, 67.0).unwrap(), 0.866, epsilon = 1e-12);
        assert!(visibility_from_extrema(0.0_f64, 0.0).is_err());
        assert!(visibility_from_extrema(-1.0_f64, 3.0).is_err());
    }

    #[test]
    fn key_rate_examples() {
        // R_sift = 13.8 bit/s, e = 0.066
        let r = secret_key_rate(RateInputs::new(27.6, 0.066, DEFAULT_F_EC).unwrap());
        assert!((r - 3.28).abs() / 3.28 < 0.02, "{r}");

        for f in [1.0, 1.17, 1.5] {
            let r = secret_key_rate(RateInputs::new(10.0_f64, 0.0, f).unwrap());
            assert_eq!(r, 5.0);
        }

        let r = secret_key_rate(RateInputs::new(100.0_f64, 0.11, 1.0).unwrap());
        assert!(r.abs() < 1e-3 * 50.0, "{r}");
    }

    #[test]
    fn rate_inputs_validate() {
        assert!(RateInputs::new(1.0_f64, 0.6, 1.2).is_err());
        assert!(RateInputs::new(1.0_f64, 0.1, 0.9).is_err());
        assert!(RateInputs::new(-1.0_f64, 0.1, 1.2).is_err());
    }

    #[test]
    fn negative_bound_is_not_clamped() {
        let r = secret_key_rate(RateInputs::new(10.0_f64, 0.2, 1.17).unwrap());
        assert!(r < 0.0);
        assert_eq!(clamp_rate(r), 0.0);
    }

    #[test]
    fn eight_same_basis_settings() {
        let s = SettingPair::same_basis_settings();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|p| p.same_basis()));
        let mut labels: Vec<_> = s.iter().map(|p| p.label()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 8);
        for p in s {
            assert_eq!(SettingPair::parse(&p.label()), Some(p));
            assert_eq!(SettingPair::parse(&p.file_label()), Some(p));
        }
    }
}
