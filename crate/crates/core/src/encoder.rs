//! Capture-side encoder: blocked mask sums, `Q_scale` selection and 8-bit
//! quantization.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use num_rational::Ratio;

use crate::{BayerFrame, Error, Kernel, Result, RgbImage};

/// Default `Q_scale` search range is `1..=DEFAULT_MAX_Q_SCALE`.
pub const DEFAULT_MAX_Q_SCALE: u32 = 4096;

/// Offset between signed quantized values and stored bytes.
pub const STORAGE_OFFSET: i32 = 128;

/// What the encoder is fed: a raw Bayer mosaic, or each plane of an RGB image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    Bayer,
    Rgb,
}

/// Block sums before quantization.
///
/// Values are laid out block-row-major with channels innermost:
/// `values[(by * blocks_x + bx) * n_c + c]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompRaw {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub n_c: usize,
    pub values: Vec<i32>,
}

impl CompRaw {
    pub fn get(&self, bx: usize, by: usize, c: usize) -> i32 {
        self.values[(by * self.blocks_x + bx) * self.n_c + c]
    }
}

/// Quantized block sums, stored as `signed + 128` bytes in the [`CompRaw`] layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompQ {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub n_c: usize,
    pub data: Vec<u8>,
    pub q_scale: u32,
}

impl CompQ {
    pub fn payload_len(blocks_x: usize, blocks_y: usize, n_c: usize) -> usize {
        blocks_x * blocks_y * n_c
    }
}

pub(crate) fn check_divisible(width: usize, height: usize, kx: usize, ky: usize) -> Result<()> {
    if !width.is_multiple_of(kx) || !height.is_multiple_of(ky) || width == 0 || height == 0 {
        return Err(Error::NotDivisible {
            width,
            height,
            kx,
            ky,
            crop_w: width - width % kx,
            crop_h: height - height % ky,
        });
    }
    Ok(())
}

/// Blocked mask sums over `samples` using arithmetic type `N`.
///
/// Each output is accumulated from zero with one multiply and one add per
/// block pixel, so a frame costs exactly `n_c` multiplies and `n_c` adds
/// per pixel.
pub fn compress_generic<N, T>(
    samples: &[u8],
    width: usize,
    height: usize,
    kernel: &Kernel<T>,
) -> Result<Vec<N>>
where
    N: Copy + Default + From<u8> + Add<Output = N> + Mul<Output = N>,
    T: Copy + Into<N>,
{
    let (kx, ky, n_c) = (kernel.kx(), kernel.ky(), kernel.n_c());
    if samples.len() != width * height {
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
                let mut acc = N::default();
                for row in 0..ky {
                    let start = (by * ky + row) * width + bx * kx;
                    let src = &samples[start..start + kx];
                    let weights = &mask[row * kx..(row + 1) * kx];
                    for (&p, &w) in src.iter().zip(weights) {
                        acc = acc + N::from(p) * w.into();
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Row-streaming i32 form of [`compress_generic`] with the same per-pixel
/// arithmetic. Weights are interleaved as `[row][col][c]` so each pixel does
/// one `C`-wide multiply-add.
fn compress_fast<const C: usize>(
    samples: &[u8],
    width: usize,
    height: usize,
    kx: usize,
    ky: usize,
    wt: &[i32],
    out: &mut [i32],
) {
    let blocks_x = width / kx;
    for y in 0..height {
        let row = y % ky;
        let src = &samples[y * width..(y + 1) * width];
        let wrow = &wt[row * kx * C..(row + 1) * kx * C];
        let orow = &mut out[(y / ky) * blocks_x * C..(y / ky + 1) * blocks_x * C];
        for (block, out) in src.chunks_exact(kx).zip(orow.chunks_exact_mut(C)) {
            let out: &mut [i32; C] = out.try_into().expect("chunk of C");
            let mut acc = *out;
            for (&p, w) in block.iter().zip(wrow.chunks_exact(C)) {
                let w: &[i32; C] = w.try_into().expect("chunk of C");
                let p = p as i32;
                // The caller bounds every sum inside i32.
                for c in 0..C {
                    acc[c] = acc[c].wrapping_add(p.wrapping_mul(w[c]));
                }
            }
            *out = acc;
        }
    }
}

fn compress_i32<T: Copy + Into<i32>>(
    samples: &[u8],
    width: usize,
    height: usize,
    kernel: &Kernel<T>,
) -> Result<Vec<i32>> {
    let (kx, ky, n_c) = (kernel.kx(), kernel.ky(), kernel.n_c());
    if samples.len() != width * height {
        return Err(Error::DimensionMismatch(
            "sample count differs from dims".into(),
        ));
    }
    check_divisible(width, height, kx, ky)?;
    let mut wt = vec![0i32; kx * ky * n_c];
    let maxabs = (0..n_c)
        .flat_map(|c| {
            kernel
                .mask(c)
                .iter()
                .map(|&w| Into::<i32>::into(w).unsigned_abs() as u64)
        })
        .max()
        .unwrap_or(0);
    if 255 * maxabs * (kx * ky) as u64 > i32::MAX as u64 {
        return Err(Error::invalid(
            "mask sums could overflow 32 bits; use smaller blocks or weights",
        ));
    }
    for c in 0..n_c {
        for (i, &w) in kernel.mask(c).iter().enumerate() {
            wt[i * n_c + c] = w.into();
        }
    }
    let mut out = vec![0i32; (width / kx) * (height / ky) * n_c];
    match n_c {
        1 => compress_fast::<1>(samples, width, height, kx, ky, &wt, &mut out),
        2 => compress_fast::<2>(samples, width, height, kx, ky, &wt, &mut out),
        3 => compress_fast::<3>(samples, width, height, kx, ky, &wt, &mut out),
        4 => compress_fast::<4>(samples, width, height, kx, ky, &wt, &mut out),
        8 => compress_fast::<8>(samples, width, height, kx, ky, &wt, &mut out),
        _ => return compress_generic::<i32, T>(samples, width, height, kernel),
    }
    Ok(out)
}

/// Apply integer masks to every non-overlapping block of `frame`.
pub fn compress<T: Copy + Into<i32>>(frame: &BayerFrame, kernel: &Kernel<T>) -> Result<CompRaw> {
    let values = compress_i32(&frame.samples, frame.width, frame.height, kernel)?;
    Ok(CompRaw {
        blocks_x: frame.width / kernel.kx(),
        blocks_y: frame.height / kernel.ky(),
        n_c: kernel.n_c(),
        values,
    })
}

/// Compress each plane of an RGB image independently with the same masks.
pub fn compress_rgb<T: Copy + Into<i32>>(
    image: &RgbImage,
    kernel: &Kernel<T>,
) -> Result<[CompRaw; 3]> {
    let plane = |c| compress(&image.plane_frame(c), kernel);
    Ok([plane(0)?, plane(1)?, plane(2)?])
}

/// `round(v / q)` with halves rounded away from zero.
///
/// Computed as `floor((2|v| + q) / 2q)`. The division runs in f64, which is
/// exact here: both operands are integers below 2^34, so a non-integral
/// quotient sits at least `1 / (2|v| + q)` (relative) below the next integer,
/// far above f64 resolution.
#[inline]
pub fn round_div(v: i32, q: u32) -> i32 {
    let a = v.unsigned_abs() as f64;
    let q = q as f64;
    let r = ((2.0 * a + q) / (2.0 * q)).floor();
    (if v < 0 { -r } else { r }) as i32
}

#[inline]
fn quantized_signed(v: i32, q: u32) -> i32 {
    round_div(v, q).clamp(-128, 127)
}

/// Quantize with a caller-supplied divider; `quantize` passes [`round_div`].
pub fn quantize_with(
    comp: &CompRaw,
    q_scale: u32,
    mut divide: impl FnMut(i32, u32) -> i32,
) -> Result<CompQ> {
    if q_scale == 0 {
        return Err(Error::invalid("Q_scale must be at least 1"));
    }
    let data = comp
        .values
        .iter()
        .map(|&v| (divide(v, q_scale).clamp(-128, 127) + STORAGE_OFFSET) as u8)
        .collect();
    Ok(CompQ {
        blocks_x: comp.blocks_x,
        blocks_y: comp.blocks_y,
        n_c: comp.n_c,
        data,
        q_scale,
    })
}

/// `stored = clamp(round(value / Q_scale), -128, 127) + 128`.
pub fn quantize(comp: &CompRaw, q_scale: u32) -> Result<CompQ> {
    quantize_with(comp, q_scale, round_div)
}

/// Sum over a value histogram of squared dequantization error at divisor `q`.
fn total_sq_error(hist: &BTreeMap<i32, u64>, q: u32) -> u128 {
    hist.iter()
        .map(|(&v, &n)| {
            let e = (q as i64 * quantized_signed(v, q) as i64 - v as i64).unsigned_abs() as u128;
            e * e * n as u128
        })
        .sum()
}

/// Choose the divisor minimizing mean `(q * clamp(round(v / q)) - v)^2`
/// over every value in `samples`. Ties keep the smallest `q`.
/// `grid` defaults to `1..=4096`.
pub fn select_q_scale(samples: &[CompRaw], grid: Option<&[u32]>) -> Result<u32> {
    let mut hist = BTreeMap::new();
    for v in samples.iter().flat_map(|s| &s.values) {
        *hist.entry(*v).or_insert(0u64) += 1;
    }
    if hist.is_empty() {
        return Err(Error::invalid(
            "no compressed samples to select Q_scale from",
        ));
    }
    let default_grid: Vec<u32>;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = (1..=DEFAULT_MAX_Q_SCALE).collect();
            &default_grid
        }
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::invalid("Q_scale grid must be nonempty and positive"));
    }
    let mut best = (grid[0], u128::MAX);
    for &q in grid {
        let err = total_sq_error(&hist, q);
        if err < best.1 || (err == best.1 && q < best.0) {
            best = (q, err);
        }
    }
    Ok(best.0)
}

/// Stored bytes over uncompressed 8-bit bytes: `n_c / (3 kx ky)` against a
/// three-color frame for Bayer input, `n_c / (kx ky)` per plane for RGB.
pub fn compression_ratio(kx: u64, ky: u64, n_c: u64, mode: SamplingMode) -> Result<Ratio<u64>> {
    if kx == 0 || ky == 0 || n_c == 0 {
        return Err(Error::invalid("ratio dims must be positive"));
    }
    Ok(match mode {
        SamplingMode::Bayer => Ratio::new(n_c, 3 * kx * ky),
        SamplingMode::Rgb => Ratio::new(n_c, kx * ky),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CfaPattern;
    use proptest::prelude::*;

    fn frame2x2() -> BayerFrame {
        BayerFrame::new(2, 2, vec![1, 2, 3, 4], CfaPattern::Rggb).unwrap()
    }

    #[test]
    fn unit_mask_sums_block() {
        let k = Kernel::filled(2, 2, 1, 1i32).unwrap();
        assert_eq!(compress(&frame2x2(), &k).unwrap().values, vec![10]);
    }

    #[test]
    fn zero_mask_gives_zero() {
        let f = BayerFrame::new(4, 4, (0..16).map(|v| v * 13).collect(), CfaPattern::Rggb).unwrap();
        let k = Kernel::filled(2, 2, 3, 0i8).unwrap();
        assert!(compress(&f, &k).unwrap().values.iter().all(|&v| v == 0));
    }

    #[test]
    fn two_masks_match_dot_products() {
        let k = Kernel::new(2, 2, 2, vec![1, 1, 1, 1, -1, 1, -1, 1]).unwrap();
        let comp = compress(&frame2x2(), &k).unwrap();
        // Oracle: direct dot products of the block [1,2,3,4] with each mask.
        let block = [1, 2, 3, 4];
        let oracle: Vec<i32> = (0..2)
            .map(|c| block.iter().zip(k.mask(c)).map(|(p, w)| p * w).sum())
            .collect();
        assert_eq!(comp.values, oracle);
        assert_eq!(comp.values, vec![10, 2]);
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let f = BayerFrame::filled(10, 8, 1, CfaPattern::Rggb);
        let err = compress(&f, &Kernel::filled(4, 4, 1, 1i8).unwrap()).unwrap_err();
        assert!(err.to_string().contains("pad or crop required"));
        assert!(err.to_string().contains("8x8"));
    }

    #[test]
    fn block_layout_is_row_major() {
        // 4x2 frame, 2x2 blocks: left block sums 1+2+5+6, right 3+4+7+8.
        let f = BayerFrame::new(4, 2, (1..=8).collect(), CfaPattern::Plain).unwrap();
        let c = compress(&f, &Kernel::filled(2, 2, 1, 1i8).unwrap()).unwrap();
        assert_eq!((c.blocks_x, c.blocks_y), (2, 1));
        assert_eq!(c.values, vec![14, 22]);
    }

    #[test]
    fn quantize_examples() {
        let raw = |v| CompRaw {
            blocks_x: 1,
            blocks_y: 1,
            n_c: 1,
            values: vec![v],
        };
        assert_eq!(quantize(&raw(100), 10).unwrap().data, vec![138]);
        assert_eq!(quantize(&raw(-2000), 10).unwrap().data, vec![0]);
        assert_eq!(quantize(&raw(5000), 10).unwrap().data, vec![255]);
        assert_eq!(quantize(&raw(15), 10).unwrap().data, vec![130]);
        assert_eq!(quantize(&raw(-15), 10).unwrap().data, vec![126]);
        assert!(quantize(&raw(1), 0).is_err());
    }

    #[test]
    fn round_div_is_half_away_from_zero() {
        assert_eq!(round_div(5, 10), 1);
        assert_eq!(round_div(-5, 10), -1);
        assert_eq!(round_div(4, 10), 0);
        assert_eq!(round_div(7, 3), 2);
        assert_eq!(round_div(-7, 2), -4);
        assert_eq!(round_div(i32::MIN, 1), i32::MIN);
    }

    #[test]
    fn q_scale_in_range_values_is_one() {
        let s = CompRaw {
            blocks_x: 4,
            blocks_y: 1,
            n_c: 1,
            values: vec![-128, 0, 50, 127],
        };
        assert_eq!(select_q_scale(&[s], None).unwrap(), 1);
        let z = CompRaw {
            blocks_x: 2,
            blocks_y: 1,
            n_c: 1,
            values: vec![0, 0],
        };
        assert_eq!(select_q_scale(&[z], None).unwrap(), 1);
        assert!(select_q_scale(&[], None).is_err());
    }

    #[test]
    fn ratios() {
        let r = |kx, ky, n, m| compression_ratio(kx, ky, n, m).unwrap();
        assert_eq!(r(8, 8, 4, SamplingMode::Bayer), Ratio::new(1, 48));
        assert_eq!(r(16, 16, 4, SamplingMode::Bayer), Ratio::new(1, 192));
        assert_eq!(r(32, 32, 4, SamplingMode::Bayer), Ratio::new(1, 768));
        assert_eq!(r(1, 1, 1, SamplingMode::Rgb), Ratio::from_integer(1));
        assert_eq!(r(8, 8, 4, SamplingMode::Rgb), Ratio::new(1, 16));
        assert_eq!(r(32, 32, 4, SamplingMode::Rgb), Ratio::new(1, 256));
    }

    #[test]
    fn rgb_planes_compress_independently() {
        let plane: Vec<u8> = (0..64).map(|v| (v * 3) as u8).collect();
        let img = RgbImage::new(8, 8, [plane.clone(), plane.clone(), plane]).unwrap();
        let k = Kernel::new(4, 4, 2, (0..32).map(|i| (i % 5) as i8 - 2).collect()).unwrap();
        let [r, g, b] = compress_rgb(&img, &k).unwrap();
        assert_eq!(r, g);
        assert_eq!(g, b);
    }

    proptest! {
        #[test]
        fn compress_is_linear(
            a in 0i32..3,
            f1 in prop::collection::vec(0u8..60, 64),
            f2 in prop::collection::vec(0u8..60, 64),
            w in prop::collection::vec(-8i32..8, 32),
        ) {
            let k = Kernel::new(4, 4, 2, w).unwrap();
            let mk = |s: Vec<u8>| BayerFrame::new(8, 8, s, CfaPattern::Rggb).unwrap();
            let mixed: Vec<u8> = f1.iter().zip(&f2).map(|(&x, &y)| (a * x as i32 + y as i32) as u8).collect();
            let c1 = compress(&mk(f1), &k).unwrap();
            let c2 = compress(&mk(f2), &k).unwrap();
            let cm = compress(&mk(mixed), &k).unwrap();
            for i in 0..cm.values.len() {
                prop_assert_eq!(cm.values[i], a * c1.values[i] + c2.values[i]);
            }
        }

        #[test]
        fn fast_path_matches_reference(
            kx in 1usize..6, ky in 1usize..6, n_c in 1usize..10, bx in 1usize..5, by in 1usize..5, seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (bx * kx, by * ky);
            let samples: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
            let k = Kernel::new(kx, ky, n_c, (0..kx * ky * n_c).map(|_| rng.random_range(-128i8..=127)).collect()).unwrap();
            let fast = compress(&BayerFrame::new(w, h, samples.clone(), CfaPattern::Plain).unwrap(), &k).unwrap();
            prop_assert_eq!(fast.values, compress_generic::<i32, i8>(&samples, w, h, &k).unwrap());
        }

        #[test]
        fn round_div_matches_integer_form(v in any::<i32>(), q in 1u32..) {
            let a = v.unsigned_abs() as u64;
            let r = ((2 * a + q as u64) / (2 * q as u64)) as i64;
            prop_assert_eq!(round_div(v, q) as i64, if v < 0 { -r } else { r });
        }

        #[test]
        fn quantization_error_bounded(v in -100_000i32..100_000, q in 1u32..2000) {
            prop_assume!((v.abs() as f64) <= 127.5 * q as f64 - 1.0);
            let raw = CompRaw { blocks_x: 1, blocks_y: 1, n_c: 1, values: vec![v] };
            let stored = quantize(&raw, q).unwrap().data[0] as i64;
            let deq = (stored - 128) * q as i64;
            prop_assert!(2 * (deq - v as i64).abs() <= q as i64);
        }

        #[test]
        fn payload_size_is_closed_form(bx in 1usize..6, by in 1usize..6, n_c in 1usize..5) {
            let f = BayerFrame::filled(bx * 8, by * 8, 9, CfaPattern::Rggb);
            let k = Kernel::filled(8, 8, n_c, 1i8).unwrap();
            let q = quantize(&compress(&f, &k).unwrap(), 7).unwrap();
            prop_assert_eq!(q.data.len(), bx * by * n_c);
        }
    }
}
