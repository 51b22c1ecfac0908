//! 100 GHz ITU-T grid bookkeeping and symmetric channel pairing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::{Real, SPEED_OF_LIGHT};

/// Grid origin: channel `n` sits at `190.0 + 0.1 n` THz.
pub const GRID_ORIGIN_THZ: f64 = 190.0;
pub const GRID_SPACING_THZ: f64 = 0.1;

/// Channel width equals channel spacing on this grid.
pub const CHANNEL_WIDTH_GHZ: f64 = 100.0;

pub const DEFAULT_MIN_CHANNEL: i32 = 17;
pub const DEFAULT_MAX_CHANNEL: i32 = 33;
pub const DEFAULT_DEGENERACY_CHANNEL: i32 = 25;

/// Inclusive range of channel numbers available in a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: i32,
    pub max: i32,
}

impl Default for ChannelRange {
    fn default() -> Self {
        Self {
            min: DEFAULT_MIN_CHANNEL,
            max: DEFAULT_MAX_CHANNEL,
        }
    }
}

impl ChannelRange {
    pub fn check(&self, channel: i32) -> Result<()> {
        if channel < self.min || channel > self.max {
            return Err(Error::ChannelOutOfPlan {
                channel,
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItuChannel<T> {
    pub number: i32,
    pub center_frequency_thz: T,
    pub center_wavelength_nm: T,
}

impl<T: Real> ItuChannel<T> {
    pub fn new(number: i32, range: ChannelRange) -> Result<Self> {
        range.check(number)?;
        let f = channel_frequency_thz::<T>(number);
        Ok(Self {
            number,
            center_frequency_thz: f,
            center_wavelength_nm: thz_to_nm(f),
        })
    }
}

pub fn channel_frequency_thz<T: Real>(number: i32) -> T {
    // integer arithmetic in tenths of THz keeps 192.5 exact
    T::lit((1900 + number) as f64 / 10.0)
}

/// Centre wavelength (nm) of a channel on the default plan range.
pub fn channel_wavelength<T: Real>(number: i32) -> Result<T> {
    channel_wavelength_in(number, ChannelRange::default())
}

pub fn channel_wavelength_in<T: Real>(number: i32, range: ChannelRange) -> Result<T> {
    Ok(ItuChannel::<T>::new(number, range)?.center_wavelength_nm)
}

/// Vacuum wavelength in nm of an optical frequency in THz.
pub fn thz_to_nm<T: Real>(thz: T) -> T {
    T::lit(SPEED_OF_LIGHT * 1e-3) / thz
}

pub fn nm_to_thz<T: Real>(nm: T) -> T {
    T::lit(SPEED_OF_LIGHT * 1e-3) / nm
}

/// Channel mirrored about the degeneracy channel: `2 c - n`.
pub fn symmetric_partner(plan_center: i32, channel: i32) -> Result<i32> {
    if channel == plan_center {
        return Err(Error::DegenerateChannel(channel));
    }
    Ok(2 * plan_center - channel)
}

/// One user pair: Alice's and Bob's channel numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserPair {
    pub alice: i32,
    pub bob: i32,
}

impl UserPair {
    pub fn label(&self) -> String {
        format!("{}-{}", self.alice, self.bob)
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (a, b) = s.split_once('-')?;
        Some(Self {
            alice: a.trim().parse().ok()?,
            bob: b.trim().parse().ok()?,
        })
    }
}

/// Symmetric DWDM channel allocation around a degeneracy channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub degeneracy_channel: i32,
    pub range: ChannelRange,
    pub user_pairs: Vec<UserPair>,
}

impl ChannelPlan {
    /// Validates symmetry about the degeneracy channel and channel uniqueness.
    pub fn new(degeneracy_channel: i32, range: ChannelRange, user_pairs: Vec<UserPair>) -> Result<Self> {
        range.check(degeneracy_channel)?;
        let mut used = HashSet::new();
        for p in &user_pairs {
            range.check(p.alice)?;
            range.check(p.bob)?;
            if p.alice + p.bob != 2 * degeneracy_channel {
                return Err(invalid(
                    "plan.pairs",
                    format!(
                        "pair {} is not symmetric about channel {degeneracy_channel}",
                        p.label()
                    ),
                ));
            }
            if p.alice == degeneracy_channel {
                return Err(Error::DegenerateChannel(p.alice));
            }
            for c in [p.alice, p.bob] {
                if !used.insert(c) {
                    return Err(invalid(
                        "plan.pairs",
                        format!("channel {c} appears in more than one pair"),
                    ));
                }
            }
        }
        Ok(Self {
            degeneracy_channel,
            range,
            user_pairs,
        })
    }

    /// Pairs every listed Alice channel with its mirror image.
    pub fn symmetric(degeneracy_channel: i32, range: ChannelRange, alice_channels: &[i32]) -> Result<Self> {
        let pairs = alice_channels
            .iter()
            .map(|&a| {
                Ok(UserPair {
                    alice: a,
                    bob: symmetric_partner(degeneracy_channel, a)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(degeneracy_channel, range, pairs)
    }

    /// The four-pair, 8-channel demultiplexer layout around channel 25:
    /// channels 21-24 to Alice, 26-29 to Bob.
    pub fn eight_channel_default() -> Self {
        Self::symmetric(DEFAULT_DEGENERACY_CHANNEL, ChannelRange::default(), &[21, 22, 23, 24])
            .expect("static plan is valid")
    }
}
