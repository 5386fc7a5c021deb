//! Encoder complexity: a reference 8×8 DCT, closed-form and instrumented
//! operation counts, a single-threaded per-pixel timing harness and the
//! down-and-up-sampling baseline.

use std::cell::Cell;
use std::fmt::Write as _;
use std::hint::black_box;
use std::ops::{Add, Mul};
use std::sync::OnceLock;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoder::{
    compress, compress_generic, quantize, quantize_with, round_div, CompQ, SamplingMode,
};
use crate::{to_u8, BayerFrame, Error, Kernel, Result, RgbImage};

// ---------------------------------------------------------------------------
// DCT

const N: usize = 8;

/// Row `k` holds the 2D basis function of output coefficient `k`
/// (`k = u * 8 + v`) evaluated at every input pixel `m * 8 + n`.
fn dct_basis() -> &'static [f64] {
    static BASIS: OnceLock<Vec<f64>> = OnceLock::new();
    BASIS.get_or_init(|| {
        let alpha = |k: usize| {
            if k == 0 {
                (1.0 / N as f64).sqrt()
            } else {
                (2.0 / N as f64).sqrt()
            }
        };
        let c = |k: usize, m: usize| {
            alpha(k) * (((2 * m + 1) * k) as f64 * std::f64::consts::PI / (2 * N) as f64).cos()
        };
        let mut b = vec![0.0; 64 * 64];
        for u in 0..N {
            for v in 0..N {
                for m in 0..N {
                    for n in 0..N {
                        b[(u * N + v) * 64 + m * N + n] = c(u, m) * c(v, n);
                    }
                }
            }
        }
        b
    })
}

/// Direct (non-separable) transform: every output is a 64-term weighted
/// sum, i.e. 64 multiplies and 64 adds per pixel.
pub fn dct_generic<T>(block: &[T; 64]) -> [T; 64]
where
    T: Copy + Default + From<f64> + Add<Output = T> + Mul<Output = T>,
{
    let basis = dct_basis();
    let mut out = [T::default(); 64];
    for (k, o) in out.iter_mut().enumerate() {
        let row = &basis[k * 64..(k + 1) * 64];
        let mut acc = T::default();
        for (&b, &x) in row.iter().zip(block) {
            acc = acc + T::from(b) * x;
        }
        *o = acc;
    }
    out
}

/// Orthonormal 8×8 DCT-II, row-major in and out.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    dct_generic(block)
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut out = [0.0; 64];
    for (k, &c) in coeffs.iter().enumerate() {
        for (o, &b) in out.iter_mut().zip(&basis[k * 64..(k + 1) * 64]) {
            *o += c * b;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Operation counts

/// Arithmetic operations per pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpCount {
    pub mults: Ratio<u64>,
    pub adds: Ratio<u64>,
    pub divs: Ratio<u64>,
}

/// Chroma layout of the JPEG reference; sets how many channel samples the
/// DCT touches per pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChromaSampling {
    Yuv444,
    Yuv422,
    Yuv420,
}

impl ChromaSampling {
    /// Y, Cb and Cr samples per pixel.
    pub fn samples_per_pixel(self) -> Ratio<u64> {
        match self {
            ChromaSampling::Yuv444 => Ratio::from_integer(3),
            ChromaSampling::Yuv422 => Ratio::from_integer(2),
            ChromaSampling::Yuv420 => Ratio::new(3, 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Complexity {
    pub dlacs: OpCount,
    pub jpeg_dct: OpCount,
    /// JPEG-DCT multiplies (or adds) over DLACS multiplies (or adds).
    pub jpeg_ratio: Ratio<u64>,
}

/// Closed-form per-pixel costs of the mask encoder and a direct 8×8 DCT.
///
/// The encoder does `n_c` multiplies and adds per input sample plus one
/// division per stored value; in RGB mode every pixel carries three
/// samples. The DCT does 64 multiplies and adds per channel sample.
pub fn count_ops(
    kx: u64,
    ky: u64,
    n_c: u64,
    mode: SamplingMode,
    chroma: ChromaSampling,
) -> Result<Complexity> {
    if kx == 0 || ky == 0 || n_c == 0 {
        return Err(Error::invalid("op count dims must be positive"));
    }
    let planes = match mode {
        SamplingMode::Bayer => 1,
        SamplingMode::Rgb => 3,
    };
    let per = Ratio::from_integer(planes * n_c);
    let dlacs = OpCount {
        mults: per,
        adds: per,
        divs: Ratio::new(planes * n_c, kx * ky),
    };
    let dct = Ratio::from_integer(64) * chroma.samples_per_pixel();
    let jpeg_dct = OpCount {
        mults: dct,
        adds: dct,
        divs: Ratio::from_integer(0),
    };
    Ok(Complexity {
        dlacs,
        jpeg_dct,
        jpeg_ratio: dct / per,
    })
}

thread_local! {
    static MULS: Cell<u64> = const { Cell::new(0) };
    static ADDS: Cell<u64> = const { Cell::new(0) };
    static DIVS: Cell<u64> = const { Cell::new(0) };
}

fn bump(c: &'static std::thread::LocalKey<Cell<u64>>) {
    c.with(|v| v.set(v.get() + 1));
}

/// A number that tallies every multiply and add performed on it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counted<T>(pub T);

impl<T: Add<Output = T>> Add for Counted<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        bump(&ADDS);
        Counted(self.0 + rhs.0)
    }
}

impl<T: Mul<Output = T>> Mul for Counted<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        bump(&MULS);
        Counted(self.0 * rhs.0)
    }
}

impl From<u8> for Counted<i32> {
    fn from(v: u8) -> Self {
        Counted(v as i32)
    }
}

impl From<i8> for Counted<i32> {
    fn from(v: i8) -> Self {
        Counted(v as i32)
    }
}

impl From<f64> for Counted<f64> {
    fn from(v: f64) -> Self {
        Counted(v)
    }
}

/// Raw operation totals from an instrumented run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpTally {
    pub mults: u64,
    pub adds: u64,
    pub divs: u64,
}

impl OpTally {
    pub fn per_pixel(&self, pixels: u64) -> OpCount {
        OpCount {
            mults: Ratio::new(self.mults, pixels),
            adds: Ratio::new(self.adds, pixels),
            divs: Ratio::new(self.divs, pixels),
        }
    }
}

fn reset_tally() {
    MULS.with(|c| c.set(0));
    ADDS.with(|c| c.set(0));
    DIVS.with(|c| c.set(0));
}

fn read_tally() -> OpTally {
    OpTally {
        mults: MULS.with(Cell::get),
        adds: ADDS.with(Cell::get),
        divs: DIVS.with(Cell::get),
    }
}

/// Run the encoder and quantizer on counting arithmetic.
pub fn instrumented_encode(
    frame: &BayerFrame,
    kernel: &Kernel<i8>,
    q_scale: u32,
) -> Result<(CompQ, OpTally)> {
    reset_tally();
    let counted =
        compress_generic::<Counted<i32>, i8>(&frame.samples, frame.width, frame.height, kernel)?;
    let raw = crate::encoder::CompRaw {
        blocks_x: frame.width / kernel.kx(),
        blocks_y: frame.height / kernel.ky(),
        n_c: kernel.n_c(),
        values: counted.into_iter().map(|c| c.0).collect(),
    };
    let q = quantize_with(&raw, q_scale, |v, q| {
        bump(&DIVS);
        round_div(v, q)
    })?;
    Ok((q, read_tally()))
}

/// Run the reference DCT over every 8×8 block on counting arithmetic.
pub fn instrumented_dct(frame: &BayerFrame) -> Result<OpTally> {
    crate::encoder::check_divisible(frame.width, frame.height, N, N)?;
    reset_tally();
    let mut block = [Counted(0.0f64); 64];
    for by in 0..frame.height / N {
        for bx in 0..frame.width / N {
            load_block(frame, bx, by, |i, v| block[i] = Counted(v));
            black_box(dct_generic(&block));
        }
    }
    Ok(read_tally())
}

#[inline]
fn load_block(frame: &BayerFrame, bx: usize, by: usize, mut put: impl FnMut(usize, f64)) {
    for m in 0..N {
        let row = &frame.row(by * N + m)[bx * N..(bx + 1) * N];
        for (n, &p) in row.iter().enumerate() {
            put(m * N + n, p as f64);
        }
    }
}

// ---------------------------------------------------------------------------
// Timing

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub n_c: usize,
    pub iterations: usize,
    pub threads: usize,
    pub ns_per_pixel_dlacs: f64,
    pub ns_per_pixel_dct: f64,
    /// `ns_per_pixel_dct / ns_per_pixel_dlacs`.
    pub ratio: f64,
    pub dlacs_samples: Vec<f64>,
    pub dct_samples: Vec<f64>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let spread = |s: &[f64]| {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(0.0, f64::max);
            (lo, hi)
        };
        let (dl, dh) = spread(&self.dlacs_samples);
        let (cl, ch) = spread(&self.dct_samples);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "frame {}x{}, {} iterations, {} thread",
            self.width, self.height, self.iterations, self.threads
        );
        let _ = writeln!(out, "{:<22} {:>12} {:>22}", "run", "ns/pixel", "range");
        let _ = writeln!(
            out,
            "{:<22} {:>12.4} {:>10.4} .. {:<10.4}",
            format!("DLACS [{b}, {b}, {}]", self.n_c, b = self.block),
            self.ns_per_pixel_dlacs,
            dl,
            dh
        );
        let _ = writeln!(
            out,
            "{:<22} {:>12.4} {:>10.4} .. {:<10.4}",
            "DCT 8x8", self.ns_per_pixel_dct, cl, ch
        );
        let _ = writeln!(out, "DCT / DLACS = {:.2}", self.ratio);
        out
    }
}

/// Seeded 4-bit masks used for timing; the values do not affect cost.
pub fn bench_masks(block: usize, n_c: usize, seed: u64) -> Kernel<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..block * block * n_c)
        .map(|_| rng.random_range(-8i8..8))
        .collect();
    Kernel::new(block, block, n_c, w).expect("block and n_c are positive")
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn dct_frame(frame: &BayerFrame, out: &mut [f64]) {
    let blocks_x = frame.width / N;
    let mut block = [0.0f64; 64];
    for by in 0..frame.height / N {
        for bx in 0..blocks_x {
            load_block(frame, bx, by, |i, v| block[i] = v);
            let coeffs = dct8x8(&block);
            let base = (by * blocks_x + bx) * 64;
            out[base..base + 64].copy_from_slice(&coeffs);
        }
    }
}

/// Time the integer mask encoder (`block`×`block`×4 masks, compress and
/// quantize) against the reference DCT over the same pixels, on the
/// calling thread. One untimed warm-up pass of each precedes the
/// `iterations` timed passes; medians are reported.
pub fn bench_encode_vs_dct(
    frame: &BayerFrame,
    iterations: usize,
    block: usize,
) -> Result<BenchReport> {
    const N_C: usize = 4;
    if iterations < 3 {
        return Err(Error::invalid("benchmark needs at least 3 iterations"));
    }
    if block == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    let unit = num_integer_lcm(block, N);
    if frame.width < unit || frame.height < unit {
        return Err(Error::invalid(format!(
            "{}x{} frame is smaller than one {unit}x{unit} block",
            frame.width, frame.height
        )));
    }
    let frame = frame.crop(
        0,
        0,
        frame.width - frame.width % unit,
        frame.height - frame.height % unit,
    )?;
    let pixels = (frame.width * frame.height) as f64;
    let masks = bench_masks(block, N_C, 0x5eed);
    let q_scale = 1024;
    let mut coeffs = vec![0.0f64; frame.width * frame.height];

    let run_dlacs = || -> Result<()> {
        let raw = compress(black_box(&frame), black_box(&masks))?;
        black_box(quantize(&raw, black_box(q_scale))?);
        Ok(())
    };
    run_dlacs()?;
    dct_frame(&frame, &mut coeffs);
    black_box(&coeffs);

    let mut dlacs = Vec::with_capacity(iterations);
    let mut dct = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        run_dlacs()?;
        dlacs.push(t.elapsed().as_nanos() as f64 / pixels);

        let t = Instant::now();
        dct_frame(black_box(&frame), &mut coeffs);
        black_box(&coeffs);
        dct.push(t.elapsed().as_nanos() as f64 / pixels);
    }
    let ns_dlacs = median(&mut dlacs.clone());
    let ns_dct = median(&mut dct.clone());
    Ok(BenchReport {
        width: frame.width,
        height: frame.height,
        block,
        n_c: N_C,
        iterations,
        threads: 1,
        ns_per_pixel_dlacs: ns_dlacs,
        ns_per_pixel_dct: ns_dct,
        ratio: ns_dct / ns_dlacs,
        dlacs_samples: dlacs,
        dct_samples: dct,
    })
}

fn num_integer_lcm(a: usize, b: usize) -> usize {
    let gcd = |mut x: usize, mut y: usize| {
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x
    };
    a / gcd(a, b) * b
}

// ---------------------------------------------------------------------------
// Down-and-up-sampling baseline

fn area_downsample(plane: &[u8], width: usize, height: usize, f: usize) -> Vec<u8> {
    let (lw, lh) = (width / f, height / f);
    let area = (f * f) as f64;
    let mut out = Vec::with_capacity(lw * lh);
    for ly in 0..lh {
        for lx in 0..lw {
            let mut sum = 0u64;
            for y in ly * f..(ly + 1) * f {
                sum += plane[y * width + lx * f..y * width + (lx + 1) * f]
                    .iter()
                    .map(|&v| v as u64)
                    .sum::<u64>();
            }
            out.push(to_u8(sum as f64 / area));
        }
    }
    out
}

/// Source coordinate and weight of a bilinear tap with pixel-center alignment.
fn bilinear_taps(dst: usize, f: usize, src_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) / f as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

fn bilinear_upsample(low: &[u8], lw: usize, lh: usize, f: usize) -> Vec<u8> {
    let (width, height) = (lw * f, lh * f);
    let xs: Vec<_> = (0..width).map(|x| bilinear_taps(x, f, lw)).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, ty) = bilinear_taps(y, f, lh);
        for &(x0, x1, tx) in &xs {
            let p = |xx: usize, yy: usize| low[yy * lw + xx] as f64;
            let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
            let bot = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
            out.push(to_u8(top * (1.0 - ty) + bot * ty));
        }
    }
    out
}

/// Area-average each plane down by `factor`, store as 8 bits, then
/// upsample bilinearly back to the original size.
pub fn daus_baseline(image: &RgbImage, factor: usize) -> Result<RgbImage> {
    if factor == 0 {
        return Err(Error::invalid("DAUS factor must be positive"));
    }
    if !image.width.is_multiple_of(factor) || !image.height.is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "{}x{} not divisible by DAUS factor {factor}",
            image.width, image.height
        )));
    }
    let (lw, lh) = (image.width / factor, image.height / factor);
    let planes = image.planes.clone().map(|p| {
        bilinear_upsample(
            &area_downsample(&p, image.width, image.height, factor),
            lw,
            lh,
            factor,
        )
    });
    RgbImage::new(image.width, image.height, planes)
}
