//! Type-II SPDC tuning curves from energy conservation and phase matching.
//!
//! For a pump at `f_p` the free variable is Alice's frequency `f_a`; Bob's
//! is fixed to `f_p - f_a`, so energy conservation holds by construction.
//! Two mode assignments exist:
//!
//! * [`Branch::TeTm`]: `n_p(f_p) f_p = n_TE(f_a) f_a + n_TM(f_b) f_b`
//! * [`Branch::TmTe`]: `n_p(f_p) f_p = n_TM(f_a) f_a + n_TE(f_b) f_b`
//!
//! Roots are bracketed by sign changes on a uniform frequency grid and
//! refined by bisection.

use serde::Serialize;

use super::index_model::{IndexModel, Mode};
use super::itu::{nm_to_thz, thz_to_nm};
use crate::error::{invalid, Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    /// Alice's photon in TE00, Bob's in TM00.
    TeTm,
    /// Alice's photon in TM00, Bob's in TE00.
    TmTe,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::TeTm => "te-tm",
            Branch::TmTe => "tm-te",
        }
    }

    fn modes(self) -> (Mode, Mode) {
        match self {
            Branch::TeTm => (Mode::Te00, Mode::Tm00),
            Branch::TmTe => (Mode::Tm00, Mode::Te00),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TuningOptions<T> {
    /// Grid points across the search band used for bracketing.
    pub grid_points: usize,
    /// Bisection stops once `|residual|` drops below this (index x THz).
    pub tolerance: T,
}

impl<T: Real> Default for TuningOptions<T> {
    fn default() -> Self {
        Self {
            grid_points: 2001,
            tolerance: T::lit(1e-10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPoint<T> {
    pub branch: Branch,
    pub pump_thz: T,
    pub freq_a_thz: T,
    pub freq_b_thz: T,
    pub lambda_a_nm: T,
    pub lambda_b_nm: T,
    /// Phase-matching residual at the returned root.
    pub residual: T,
}

/// `n_p f_p - n_a(f_a) f_a - n_b(f_p - f_a) (f_p - f_a)` for one branch.
pub fn phase_mismatch<T: Real>(model: &IndexModel<T>, branch: Branch, pump_thz: T, freq_a_thz: T) -> Result<T> {
    let (mode_a, mode_b) = branch.modes();
    let freq_b = pump_thz - freq_a_thz;
    let lhs = model.index(Mode::PumpBragg, pump_thz)? * pump_thz;
    let rhs = model.index(mode_a, freq_a_thz)? * freq_a_thz + model.index(mode_b, freq_b)? * freq_b;
    Ok(lhs - rhs)
}

/// All phase-matched `(lambda_a, lambda_b)` pairs with `lambda_a` inside
/// `search_band_nm`, for both branches. An empty result means no root.
pub fn tuning_curves<T: Real>(
    model: &IndexModel<T>,
    pump_nm: T,
    search_band_nm: (T, T),
    opts: &TuningOptions<T>,
) -> Result<Vec<TuningPoint<T>>> {
    if opts.grid_points < 2 {
        return Err(invalid("grid_points", "need at least 2"));
    }
    let (lo_nm, hi_nm) = search_band_nm;
    if !(lo_nm > T::zero() && hi_nm > lo_nm) {
        return Err(invalid("search_band_nm", "need 0 < lo < hi"));
    }
    let pump_thz = nm_to_thz(pump_nm);
    let f_lo = nm_to_thz(hi_nm);
    let f_hi = nm_to_thz(lo_nm);

    let steps = T::lit((opts.grid_points - 1) as f64);
    let grid: Vec<T> = (0..opts.grid_points)
        .map(|i| {
            if i + 1 == opts.grid_points {
                f_hi
            } else {
                f_lo + (f_hi - f_lo) * T::lit(i as f64) / steps
            }
        })
        .collect();

    let mut out = Vec::new();
    let mut all_flat = true;
    for branch in [Branch::TeTm, Branch::TmTe] {
        let residuals = grid
            .iter()
            .map(|&f| phase_mismatch(model, branch, pump_thz, f))
            .collect::<Result<Vec<T>>>()?;
        all_flat &= residuals.iter().all(|r| r.abs() <= opts.tolerance);

        for i in 0..grid.len() {
            let r0 = residuals[i];
            if r0 == T::zero() {
                out.push(point(branch, pump_thz, grid[i], r0));
                continue;
            }
            if i + 1 < grid.len() {
                let r1 = residuals[i + 1];
                if r1 != T::zero() && (r0 < T::zero()) != (r1 < T::zero()) {
                    let (f, r) = bisect(model, branch, pump_thz, grid[i], grid[i + 1], r0, opts.tolerance)?;
                    out.push(point(branch, pump_thz, f, r));
                }
            }
        }
    }
    if all_flat {
        return Err(Error::UndeterminedPhaseMatching);
    }
    Ok(out)
}

fn point<T: Real>(branch: Branch, pump_thz: T, freq_a: T, residual: T) -> TuningPoint<T> {
    let freq_b = pump_thz - freq_a;
    TuningPoint {
        branch,
        pump_thz,
        freq_a_thz: freq_a,
        freq_b_thz: freq_b,
        lambda_a_nm: thz_to_nm(freq_a),
        lambda_b_nm: thz_to_nm(freq_b),
        residual,
    }
}

fn bisect<T: Real>(
    model: &IndexModel<T>,
    branch: Branch,
    pump_thz: T,
    mut a: T,
    mut b: T,
    mut ra: T,
    tol: T,
) -> Result<(T, T)> {
    let half = T::lit(0.5);
    let mut best = (a, ra);
    for _ in 0..200 {
        let m = (a + b) * half;
        if m <= a || m >= b {
            break;
        }
        let rm = phase_mismatch(model, branch, pump_thz, m)?;
        if rm.abs() < best.1.abs() {
            best = (m, rm);
        }
        if rm.abs() < tol {
            return Ok((m, rm));
        }
        if (rm < T::zero()) == (ra < T::zero()) {
            a = m;
            ra = rm;
        } else {
            b = m;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::index_model::ModeIndex;

    fn birefringent_constant() -> IndexModel<f64> {
        let band = (150.0, 240.0);
        IndexModel::new(
            ModeIndex::constant(3.15, (300.0, 450.0)),
            ModeIndex::constant(3.2, band),
            ModeIndex::constant(3.1, band),
        )
        .unwrap()
    }

    #[test]
    fn dispersionless_gives_degenerate_pair() {
        let m = birefringent_constant();
        let pts = tuning_curves(&m, 779.0, (1450.0, 1700.0), &TuningOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert!((p.lambda_a_nm - 1558.0).abs() < 1e-6, "{p:?}");
            assert!((p.lambda_b_nm - 1558.0).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn identical_constants_are_undetermined() {
        let band = (150.0, 240.0);
        let m = IndexModel::new(
            ModeIndex::constant(3.2, (300.0, 450.0)),
            ModeIndex::constant(3.2, band),
            ModeIndex::constant(3.2, band),
        )
        .unwrap();
        assert_eq!(
            tuning_curves(&m, 779.0, (1450.0, 1700.0), &TuningOptions::default()),
            Err(Error::UndeterminedPhaseMatching)
        );
    }

    #[test]
    fn out_of_band_pump() {
        let m = birefringent_constant();
        assert!(matches!(
            tuning_curves(&m, 500.0, (1450.0, 1700.0), &TuningOptions::default()),
            Err(Error::OutOfBand { .. })
        ));
    }

    #[test]
    fn no_root_is_empty() {
        let band = (150.0, 240.0);
        let m = IndexModel::new(
            ModeIndex::constant(3.5, (300.0, 450.0)),
            ModeIndex::constant(3.2, band),
            ModeIndex::constant(3.1, band),
        )
        .unwrap();
        let pts = tuning_curves(&m, 779.0, (1450.0, 1700.0), &TuningOptions::default()).unwrap();
        assert!(pts.is_empty());
    }
}
