//! MSE, PSNR and SSIM for 8-bit planes, frames and RGB images.
//!
//! SSIM uses the usual 11×11 Gaussian window (σ = 1.5) with K1 = 0.01,
//! K2 = 0.03 and L = 255, averaged over all fully-contained window
//! positions. RGB metrics pool all three planes into one mean.

use serde::{Serialize, Serializer};

use crate::{BayerFrame, Error, Result, RgbImage};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub mse: f64,
    /// Decibels; `f64::INFINITY` when the inputs are identical.
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
}

impl QualityReport {
    pub fn psnr_is_infinite(&self) -> bool {
        self.psnr.is_infinite()
    }
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} vs {b} samples")));
    }
    if a == 0 {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    Ok(())
}

pub fn mse(a: &[u8], b: &[u8]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let sum: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    Ok(sum as f64 / a.len() as f64)
}

pub fn mse_f64(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(max_val^2 / mse)`, infinite for zero error.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

pub fn psnr(a: &[u8], b: &[u8], max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, max_val))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of a `width`×`height` plane.
fn filter_valid(src: &[f64], width: usize, height: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let ow = width - WINDOW + 1;
    let oh = height - WINDOW + 1;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let line = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = line[x..x + WINDOW].iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, &wk) in w.iter().enumerate() {
            let line = &rows[(y + k) * ow..(y + k + 1) * ow];
            for (o, &v) in out[y * ow..(y + 1) * ow].iter_mut().zip(line) {
                *o += wk * v;
            }
        }
    }
    out
}

/// Sum and count of the SSIM map over one plane.
fn ssim_map_sum(a: &[u8], b: &[u8], width: usize, height: usize) -> Result<(f64, usize)> {
    check_len(a.len(), b.len())?;
    if a.len() != width * height {
        return Err(Error::DimensionMismatch(
            "sample count differs from dims".into(),
        ));
    }
    if width < WINDOW || height < WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} samples, got {width}x{height}"
        )));
    }
    let w = gaussian_window();
    let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&fa, width, height, &w);
    let mu_b = filter_valid(&fb, width, height, &w);
    let e_aa = filter_valid(&prod(&fa, &fa), width, height, &w);
    let e_bb = filter_valid(&prod(&fb, &fb), width, height, &w);
    let e_ab = filter_valid(&prod(&fa, &fb), width, height, &w);
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok((sum, mu_a.len()))
}

pub fn ssim(a: &[u8], b: &[u8], width: usize, height: usize) -> Result<f64> {
    let (s, n) = ssim_map_sum(a, b, width, height)?;
    Ok(s / n as f64)
}

fn check_frames(a: &BayerFrame, b: &BayerFrame) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn evaluate_frames(a: &BayerFrame, b: &BayerFrame) -> Result<QualityReport> {
    check_frames(a, b)?;
    let mse = mse(&a.samples, &b.samples)?;
    Ok(QualityReport {
        mse,
        psnr: psnr_from_mse(mse, L),
        ssim: ssim(&a.samples, &b.samples, a.width, a.height)?,
    })
}

pub fn evaluate_rgb(a: &RgbImage, b: &RgbImage) -> Result<QualityReport> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut sq = 0.0;
    let (mut ssim_sum, mut ssim_n) = (0.0, 0);
    for c in 0..3 {
        sq += mse(&a.planes[c], &b.planes[c])?;
        let (s, n) = ssim_map_sum(&a.planes[c], &b.planes[c], a.width, a.height)?;
        ssim_sum += s;
        ssim_n += n;
    }
    let mse = sq / 3.0;
    Ok(QualityReport {
        mse,
        psnr: psnr_from_mse(mse, L),
        ssim: ssim_sum / ssim_n as f64,
    })
}
