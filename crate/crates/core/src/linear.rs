//! Display-side linear decoder: dequantization followed by a blockwise
//! conv-transpose with the learned decode kernel.

use crate::encoder::{check_divisible, CompQ, STORAGE_OFFSET};
use crate::{to_u8, BayerFrame, CfaPattern, Error, Kernel, MaskSet, Result};

/// Real-valued block coefficients, same layout as [`crate::encoder::CompRaw`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompValues {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub n_c: usize,
    pub values: Vec<f64>,
}

/// A reconstructed plane before rounding to 8 bits.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// `value = (stored - 128) * Q_scale`.
pub fn dequantize(comp: &CompQ) -> CompValues {
    let q = comp.q_scale as f64;
    CompValues {
        blocks_x: comp.blocks_x,
        blocks_y: comp.blocks_y,
        n_c: comp.n_c,
        values: comp
            .data
            .iter()
            .map(|&s| (s as i32 - STORAGE_OFFSET) as f64 * q)
            .collect(),
    }
}

/// Tile the frame with `block(i, j)[row, col] = Σ_c comp[i, j, c] · D[c, row, col]`.
pub fn transpose_decode<T: Copy + Into<f64>>(
    comp: &CompValues,
    decode: &Kernel<T>,
) -> Result<DecodedFrame> {
    let (kx, ky, n_c) = (decode.kx(), decode.ky(), decode.n_c());
    if comp.n_c != n_c {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficient channels but decode kernel has {n_c} masks",
            comp.n_c
        )));
    }
    if comp.values.len() != comp.blocks_x * comp.blocks_y * n_c {
        return Err(Error::DimensionMismatch(
            "coefficient count differs from dims".into(),
        ));
    }
    let (width, height) = (comp.blocks_x * kx, comp.blocks_y * ky);
    let mut values = vec![0.0; width * height];
    let block_len = kx * ky;
    let dk: Vec<f64> = decode.weights().iter().map(|&w| w.into()).collect();
    let mut block = vec![0.0; block_len];
    for by in 0..comp.blocks_y {
        for bx in 0..comp.blocks_x {
            let coeffs = &comp.values[(by * comp.blocks_x + bx) * n_c..][..n_c];
            block.fill(0.0);
            for (c, &z) in coeffs.iter().enumerate() {
                for (b, &d) in block
                    .iter_mut()
                    .zip(&dk[c * block_len..(c + 1) * block_len])
                {
                    *b += z * d;
                }
            }
            for row in 0..ky {
                let start = (by * ky + row) * width + bx * kx;
                values[start..start + kx].copy_from_slice(&block[row * kx..(row + 1) * kx]);
            }
        }
    }
    Ok(DecodedFrame {
        width,
        height,
        values,
    })
}

/// Float blocked projection, the operator whose adjoint is [`transpose_decode`].
pub fn blocked_project(
    values: &[f64],
    width: usize,
    height: usize,
    kernel: &Kernel<f64>,
) -> Result<CompValues> {
    let (kx, ky, n_c) = (kernel.kx(), kernel.ky(), kernel.n_c());
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(
            "sample count differs from dims".into(),
        ));
    }
    check_divisible(width, height, kx, ky)?;
    let (blocks_x, blocks_y) = (width / kx, height / ky);
    let mut out = Vec::with_capacity(blocks_x * blocks_y * n_c);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            for c in 0..n_c {
                let mask = kernel.mask(c);
                let mut acc = 0.0;
                for row in 0..ky {
                    let start = (by * ky + row) * width + bx * kx;
                    acc += values[start..start + kx]
                        .iter()
                        .zip(&mask[row * kx..(row + 1) * kx])
                        .map(|(p, w)| p * w)
                        .sum::<f64>();
                }
                out.push(acc);
            }
        }
    }
    Ok(CompValues {
        blocks_x,
        blocks_y,
        n_c,
        values: out,
    })
}

/// Clamp to `[0, 255]` and round half away from zero.
pub fn decode_to_frame(decoded: &DecodedFrame, pattern: CfaPattern) -> BayerFrame {
    BayerFrame {
        width: decoded.width,
        height: decoded.height,
        samples: decoded.values.iter().map(|&v| to_u8(v)).collect(),
        pattern,
    }
}

/// Full linear decode of one quantized plane with a mask set.
///
/// Block sums are in `sc_W`-scaled units of the float masks the decode
/// kernel was trained against, so coefficients are divided by `sc_W`
/// before the transpose.
pub fn decode_plane(comp: &CompQ, masks: &MaskSet) -> Result<DecodedFrame> {
    let decode = masks
        .decode
        .as_ref()
        .ok_or(Error::DecodeKernelUnavailable)?;
    let mut coeffs = dequantize(comp);
    let inv = 1.0 / masks.sc_w as f64;
    coeffs.values.iter_mut().for_each(|v| *v *= inv);
    transpose_decode(&coeffs, decode)
}
