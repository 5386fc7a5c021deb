//! Blind block compressive sampling for raw Bayer frames.
//!
//! The capture side multiplies each non-overlapping `kx`×`ky` block of a
//! frame by `n_c` small integer masks, quantizes the block sums to 8 bits
//! with a single integer divisor and optionally entropy codes the result.
//! The display side dequantizes and applies a learned linear transpose
//! kernel. Masks and decode kernel are learned jointly as a linear
//! autoencoder over training crops.

pub mod bench;
mod bytes;
pub mod container;
pub mod demosaic;
pub mod encoder;
pub mod entropy;
mod error;
pub mod frame;
pub mod kernel;
pub mod linear;
pub mod masks;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use frame::{BayerFrame, CfaPattern, RgbImage};
pub use kernel::Kernel;
pub use masks::MaskSet;

/// Round half away from zero. Used for every float→integer conversion in
/// the codec so encoder and mask integerization agree.
#[inline]
pub(crate) fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Round to the nearest 8-bit sample, clamping to `[0, 255]`.
#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    round_half_away(v).clamp(0.0, 255.0) as u8
}
