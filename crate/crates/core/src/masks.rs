//! Mask sets: trained float masks, their low-bit integer form and the
//! float decode kernel, plus the on-disk mask file.

use crate::bytes::{put_f32s, put_i8s, Reader};
use crate::{round_half_away, Error, Kernel, Result};

const MASK_MAGIC: &[u8; 6] = b"DLMSK\0";
const MASK_VERSION: u8 = 1;

const FLAG_DECODE: u8 = 1;
const FLAG_FLOAT: u8 = 1 << 1;
const FLAG_DEGENERATE: u8 = 1 << 2;

/// Number of candidates in the default `sc_W` scan.
pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    /// Signed bit depth of `w_int`.
    pub bits: u8,
    /// Integer masks applied by the encoder.
    pub w_int: Kernel<i8>,
    /// Scale mapping float masks onto `w_int`: `w_int ≈ w_float * sc_w`.
    pub sc_w: f32,
    /// Trained float masks, absent when only the integer form is known.
    pub w_float: Option<Kernel<f32>>,
    /// Float transpose kernel used by the linear decoder (in float-mask units).
    pub decode: Option<Kernel<f32>>,
    /// Quantization divisor selected on training data.
    pub q_scale: u32,
    /// Set when integerization saw an all-zero float kernel.
    pub degenerate: bool,
}

impl MaskSet {
    pub fn kx(&self) -> usize {
        self.w_int.kx()
    }

    pub fn ky(&self) -> usize {
        self.w_int.ky()
    }

    pub fn n_c(&self) -> usize {
        self.w_int.n_c()
    }

    /// Build a set straight from integer masks (no float masks).
    pub fn from_integer(w_int: Kernel<i8>, bits: u8, sc_w: f32) -> Result<Self> {
        check_bits(bits)?;
        let (lo, hi) = int_range(bits);
        if w_int
            .weights()
            .iter()
            .any(|&w| (w as i32) < lo || (w as i32) > hi)
        {
            return Err(Error::invalid(format!(
                "mask weight outside {bits}-bit range"
            )));
        }
        if !(sc_w > 0.0 && sc_w.is_finite()) {
            return Err(Error::invalid(format!("sc_W must be positive, got {sc_w}")));
        }
        Ok(Self {
            bits,
            w_int,
            sc_w,
            w_float: None,
            decode: None,
            q_scale: 1,
            degenerate: false,
        })
    }

    pub fn with_decode(mut self, decode: Kernel<f32>) -> Result<Self> {
        if !decode.same_shape(&self.w_int) {
            return Err(Error::DimensionMismatch(
                "decode kernel shape differs from masks".into(),
            ));
        }
        self.decode = Some(decode);
        Ok(self)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut flags = 0;
        if self.decode.is_some() {
            flags |= FLAG_DECODE;
        }
        if self.w_float.is_some() {
            flags |= FLAG_FLOAT;
        }
        if self.degenerate {
            flags |= FLAG_DEGENERATE;
        }
        let mut out = Vec::new();
        out.extend_from_slice(MASK_MAGIC);
        out.push(MASK_VERSION);
        out.push(flags);
        out.extend_from_slice(&(self.kx() as u16).to_le_bytes());
        out.extend_from_slice(&(self.ky() as u16).to_le_bytes());
        out.push(self.n_c() as u8);
        out.push(self.bits);
        out.extend_from_slice(&self.sc_w.to_le_bytes());
        out.extend_from_slice(&self.q_scale.to_le_bytes());
        put_i8s(&mut out, self.w_int.weights());
        if let Some(w) = &self.w_float {
            put_f32s(&mut out, w.weights());
        }
        if let Some(d) = &self.decode {
            put_f32s(&mut out, d.weights());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(MASK_MAGIC.len())? != MASK_MAGIC {
            return Err(Error::BadMagic("mask file"));
        }
        let version = r.u8()?;
        if version != MASK_VERSION {
            return Err(Error::VersionMismatch {
                what: "mask file",
                found: version,
                expected: MASK_VERSION,
            });
        }
        let flags = r.u8()?;
        if flags & !(FLAG_DECODE | FLAG_FLOAT | FLAG_DEGENERATE) != 0 {
            return Err(Error::malformed(
                "mask file",
                format!("unknown flags {flags:#04x}"),
            ));
        }
        let kx = r.u16()? as usize;
        let ky = r.u16()? as usize;
        let n_c = r.u8()? as usize;
        let bits = r.u8()?;
        check_bits(bits)?;
        let sc_w = r.f32()?;
        let q_scale = r.u32()?;
        if q_scale == 0 {
            return Err(Error::malformed("mask file", "Q_scale is zero"));
        }
        let n = kx * ky * n_c;
        let w_int = Kernel::new(kx, ky, n_c, r.i8s(n)?)?;
        let w_float = if flags & FLAG_FLOAT != 0 {
            Some(Kernel::new(kx, ky, n_c, r.f32s(n)?)?)
        } else {
            None
        };
        let decode = if flags & FLAG_DECODE != 0 {
            Some(Kernel::new(kx, ky, n_c, r.f32s(n)?)?)
        } else {
            None
        };
        if r.remaining() != 0 {
            return Err(Error::malformed("mask file", "trailing bytes"));
        }
        Ok(Self {
            bits,
            w_int,
            sc_w,
            w_float,
            decode,
            q_scale,
            degenerate: flags & FLAG_DEGENERATE != 0,
        })
    }
}

/// The integer kernel actually applied on the capture side.
pub fn effective_encoder(masks: &MaskSet) -> &Kernel<i8> {
    &masks.w_int
}

pub fn serialize_masks(masks: &MaskSet) -> Vec<u8> {
    masks.serialize()
}

pub fn deserialize_masks(bytes: &[u8]) -> Result<MaskSet> {
    MaskSet::deserialize(bytes)
}

/// Signed range `[-2^(b-1), 2^(b-1) - 1]` of a `bits`-bit mask weight.
pub fn int_range(bits: u8) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

pub(crate) fn check_bits(bits: u8) -> Result<()> {
    if (2..=8).contains(&bits) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "mask bit depth {bits} outside [2, 8]"
        )))
    }
}

/// `count` log-spaced scales from `0.1 / maxabs` to `2 * (2^(b-1) - 1) / maxabs`.
pub fn default_scale_grid(maxabs: f64, bits: u8, count: usize) -> Vec<f64> {
    let hi_int = ((1u32 << (bits - 1)) - 1) as f64;
    let lo = (0.1 / maxabs).ln();
    let hi = (2.0 * hi_int / maxabs).ln();
    if count == 1 {
        return vec![lo.exp()];
    }
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Integerized {
    pub w_int: Kernel<i8>,
    pub sc_w: f64,
    /// Mean squared integerization error in float-mask units.
    pub mse: f64,
    pub degenerate: bool,
}

fn quantize_weights(weights: &[f64], sc: f64, lo: i32, hi: i32) -> impl Iterator<Item = i32> + '_ {
    weights
        .iter()
        .map(move |&w| round_half_away(w * sc).clamp(lo as f64, hi as f64) as i32)
}

/// Mean of `(w - round(w * sc) / sc)^2` with the rounded value clamped to
/// the `bits`-bit range.
pub fn integerization_mse(weights: &[f64], sc: f64, bits: u8) -> f64 {
    let (lo, hi) = int_range(bits);
    let sum: f64 = weights
        .iter()
        .zip(quantize_weights(weights, sc, lo, hi))
        .map(|(&w, q)| {
            let e = w - q as f64 / sc;
            e * e
        })
        .sum();
    sum / weights.len() as f64
}

/// Pick the grid scale whose rounded-and-clamped masks best reproduce the
/// float masks, and return the integer masks at that scale.
///
/// The error is measured after mapping integers back through `1 / sc`, so
/// tiny scales that round every weight to zero are not rewarded. Ties keep
/// the smallest scale. `grid` defaults to [`default_scale_grid`].
pub fn integerize_masks(
    w_float: &Kernel<f32>,
    bits: u8,
    grid: Option<&[f64]>,
) -> Result<Integerized> {
    check_bits(bits)?;
    let weights: Vec<f64> = w_float.weights().iter().map(|&w| w as f64).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("float masks contain non-finite values"));
    }
    let maxabs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if let Some(g) = grid {
        if g.is_empty() || g.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("scale grid must be nonempty and positive"));
        }
        if g.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::invalid("scale grid must be strictly ascending"));
        }
    }
    let zeros = || w_float.map(|_| 0i8);
    if maxabs == 0.0 {
        let sc_w = grid.map_or(1.0, |g| g[0]);
        return Ok(Integerized {
            w_int: zeros(),
            sc_w,
            mse: 0.0,
            degenerate: true,
        });
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_scale_grid(maxabs, bits, DEFAULT_GRID_POINTS);
            &owned
        }
    };
    let (mut best_sc, mut best_mse) = (grid[0], f64::INFINITY);
    for &sc in grid {
        let mse = integerization_mse(&weights, sc, bits);
        if mse < best_mse {
            best_sc = sc;
            best_mse = mse;
        }
    }
    let (lo, hi) = int_range(bits);
    let ints: Vec<i8> = quantize_weights(&weights, best_sc, lo, hi)
        .map(|q| q as i8)
        .collect();
    Ok(Integerized {
        w_int: Kernel::new(w_float.kx(), w_float.ky(), w_float.n_c(), ints)?,
        sc_w: best_sc,
        mse: best_mse,
        degenerate: false,
    })
}
