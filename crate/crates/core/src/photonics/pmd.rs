//! Visibility ceiling from polarization-mode dispersion in the
//! polarization-maintaining pigtails of the analysis stations.
//!
//! The differential group delay `tau = lambda L_f / (c L_b)` shifts the two
//! polarization components by `tau`; their temporal overlap `eta` through the
//! DWDM channel response bounds the visibility by `(1 + eta) / 2`.

use serde::Serialize;

use super::itu::CHANNEL_WIDTH_GHZ;
use crate::error::{invalid, Result};
use crate::num::{Real, SPEED_OF_LIGHT};

/// Temporal amplitude response of a DWDM channel, time in ps.
pub trait ChannelResponse<T: Real> {
    fn amplitude(&self, t_ps: T) -> T;

    /// Half-width (ps) outside which the response is negligible.
    fn support_ps(&self) -> T;
}

/// Gaussian amplitude transmission with the given spectral FWHM; its
/// time-domain counterpart is a Gaussian of width `1 / (2 pi sigma_f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianResponse<T> {
    pub fwhm_ghz: T,
}

impl<T: Real> GaussianResponse<T> {
    pub fn new(fwhm_ghz: T) -> Self {
        Self { fwhm_ghz }
    }

    /// 100 GHz grid channel.
    pub fn itu_100ghz() -> Self {
        Self::new(T::lit(CHANNEL_WIDTH_GHZ))
    }

    /// Spectral amplitude sigma in THz.
    pub fn sigma_thz(&self) -> T {
        let two = T::lit(2.0);
        self.fwhm_ghz * T::lit(1e-3) / (two * (two * two.ln()).sqrt())
    }

    /// Temporal amplitude sigma in ps.
    pub fn sigma_ps(&self) -> T {
        T::one() / (T::lit(2.0) * T::PI() * self.sigma_thz())
    }
}

impl<T: Real> ChannelResponse<T> for GaussianResponse<T> {
    fn amplitude(&self, t_ps: T) -> T {
        let s = self.sigma_ps();
        (-(t_ps * t_ps) / (T::lit(2.0) * s * s)).exp()
    }

    fn support_ps(&self) -> T {
        T::lit(10.0) * self.sigma_ps()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmdParams<T> {
    pub fiber_length_m: T,
    pub beat_length_m: T,
    pub wavelength_m: T,
}

impl<T: Real> PmdParams<T> {
    pub fn new(fiber_length_m: T, beat_length_m: T, wavelength_m: T) -> Result<Self> {
        // zero fiber length is accepted as the no-delay limit
        if !(fiber_length_m >= T::zero() && fiber_length_m.is_finite()) {
            return Err(invalid("fiber_length_m", "must be >= 0"));
        }
        if !(beat_length_m > T::zero() && beat_length_m.is_finite()) {
            return Err(invalid("beat_length_m", "must be > 0"));
        }
        if !(wavelength_m > T::zero() && wavelength_m.is_finite()) {
            return Err(invalid("wavelength_m", "must be > 0"));
        }
        Ok(Self {
            fiber_length_m,
            beat_length_m,
            wavelength_m,
        })
    }

    /// 3 m of panda fiber with 5 mm beat length at 1.55 um.
    pub fn panda_pigtails() -> Self {
        Self::new(T::lit(3.0), T::lit(5e-3), T::lit(1.55e-6)).expect("static params")
    }

    /// Differential group delay in ps.
    pub fn differential_delay_ps(&self) -> T {
        self.wavelength_m * self.fiber_length_m / (T::lit(SPEED_OF_LIGHT) * self.beat_length_m) * T::lit(1e12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmdCeiling<T> {
    pub tau_pmd_ps: T,
    pub overlap: T,
    pub v_max: T,
}

/// Normalized overlap `int f_a(t) f_b(tau - t) dt` by composite Simpson
/// quadrature, divided by the responses' L2 norms.
pub fn temporal_overlap<T: Real, A: ChannelResponse<T>, B: ChannelResponse<T>>(a: &A, b: &B, tau_ps: T) -> T {
    const INTERVALS: usize = 8000;
    let span = a.support_ps().max(b.support_ps()) + tau_ps.abs();
    let lo = -span;
    let h = (span + span) / T::lit(INTERVALS as f64);
    let simpson = |f: &dyn Fn(T) -> T| {
        let mut acc = f(lo) + f(span);
        for i in 1..INTERVALS {
            let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
            acc = acc + w * f(lo + h * T::lit(i as f64));
        }
        acc * h / T::lit(3.0)
    };
    let cross = simpson(&|t| a.amplitude(t) * b.amplitude(tau_ps - t));
    let na = simpson(&|t| a.amplitude(t) * a.amplitude(t));
    let nb = simpson(&|t| b.amplitude(t) * b.amplitude(t));
    cross / (na * nb).sqrt()
}

/// PMD ceiling with a pluggable channel response (same response on both arms).
pub fn pmd_visibility_ceiling_with<T: Real, R: ChannelResponse<T>>(params: &PmdParams<T>, response: &R) -> PmdCeiling<T> {
    let tau = params.differential_delay_ps();
    let overlap = temporal_overlap(response, response, tau).min(T::one());
    PmdCeiling {
        tau_pmd_ps: tau,
        overlap,
        v_max: (T::one() + overlap) / T::lit(2.0),
    }
}

/// PMD ceiling with the default Gaussian 100 GHz channel response.
pub fn pmd_visibility_ceiling<T: Real>(params: &PmdParams<T>) -> PmdCeiling<T> {
    pmd_visibility_ceiling_with(params, &GaussianResponse::itu_100ghz())
}
