//! Wavelength bookkeeping: ITU grid and channel pairing, SPDC tuning curves
//! from supplied index models, and the PMD visibility ceiling.

pub mod index_model;
pub mod itu;
pub mod pmd;
pub mod tuning;

pub use index_model::{IndexModel, Mode, ModeIndex};
pub use itu::{
    channel_frequency_thz, channel_wavelength, channel_wavelength_in, nm_to_thz, symmetric_partner, thz_to_nm, ChannelPlan,
    ChannelRange, ItuChannel, UserPair,
};
pub use pmd::{
    pmd_visibility_ceiling, pmd_visibility_ceiling_with, ChannelResponse, GaussianResponse, PmdCeiling, PmdParams,
};
pub use tuning::{phase_mismatch, tuning_curves, Branch, TuningOptions, TuningPoint};
