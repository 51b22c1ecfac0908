//! Multi-user entanglement-based QKD over a DWDM fiber network.
//!
//! * [`qkd`]: binary entropy, visibility/QBER and the key-rate bound
//! * [`photonics`]: ITU grid, channel pairing, tuning curves, PMD ceiling
//! * [`linkmodel`]: analytic CW-SPDC link model, calibration and cutoffs
//! * [`simulator`]: seeded Monte Carlo of the full detection chain
//! * [`analysis`]: coincidence histograms to protocol metrics
//!
//! The analytic modules are generic over [`Real`] (`f32` / `f64`); the
//! aliases below fix the scalar to `f64`, which is what the rest of the
//! crate and the command line use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod linkmodel;
pub mod num;
pub mod photonics;
pub mod qkd;
pub mod simulator;

pub use error::{Error, Result};
pub use num::Real;
pub use qkd::{Basis, BasisSetting, BellSign, Outcome, SettingPair};

pub type RateInputs = qkd::RateInputs<f64>;
pub type SourceParams = linkmodel::SourceParams<f64>;
pub type LinkParams = linkmodel::LinkParams<f64>;
pub type RatePrediction = linkmodel::RatePrediction<f64>;
pub type ScenarioPreset = linkmodel::ScenarioPreset<f64>;
pub type IndexModel = photonics::IndexModel<f64>;
pub type PmdParams = photonics::PmdParams<f64>;
pub type PmdCeiling = photonics::PmdCeiling<f64>;
pub type ItuChannel = photonics::ItuChannel<f64>;
pub type TuningPoint = photonics::TuningPoint<f64>;

pub type SourceParamsF32 = linkmodel::SourceParams<f32>;
pub type LinkParamsF32 = linkmodel::LinkParams<f32>;
