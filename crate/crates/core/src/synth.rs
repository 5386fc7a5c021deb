//! Seeded synthetic imagery with natural-image-like statistics: sums of
//! box-blurred white noise over octave scales with equal variance per octave
//! (a 1/f amplitude spectrum), rescaled into 8 bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demosaic::mosaic_rggb;
use crate::{to_u8, BayerFrame, CfaPattern, RgbImage};

/// Blur radii of the noise octaves, all with equal weight.
const OCTAVES: [usize; 6] = [32, 16, 8, 4, 2, 1];

fn box_blur_1d(src: &[f64], dst: &mut [f64], len: usize, stride: usize, radius: usize) {
    let window = (2 * radius + 1) as f64;
    let at = |i: isize| src[(i.clamp(0, len as isize - 1) as usize) * stride];
    let mut acc: f64 = (-(radius as isize)..=radius as isize).map(at).sum();
    for i in 0..len {
        dst[i * stride] = acc / window;
        let i = i as isize;
        acc += at(i + radius as isize + 1) - at(i - radius as isize);
    }
}

/// Three passes of a separable box blur (close to a Gaussian).
fn blur(plane: &mut [f64], width: usize, height: usize, radius: usize) {
    let mut tmp = vec![0.0; plane.len()];
    for _ in 0..3 {
        for y in 0..height {
            let row = y * width;
            box_blur_1d(
                &plane[row..row + width],
                &mut tmp[row..row + width],
                width,
                1,
                radius,
            );
        }
        for x in 0..width {
            box_blur_1d(&tmp[x..], &mut plane[x..], height, width, radius);
        }
    }
}

/// Zero-mean multi-scale noise field, normalized to unit peak amplitude.
fn noise_field(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut field = vec![0.0; width * height];
    for radius in OCTAVES {
        let mut layer: Vec<f64> = (0..width * height)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        blur(&mut layer, width, height, radius);
        // Blurring shrinks variance by roughly the window area; undo that.
        let gain = (2 * radius + 1) as f64;
        for (f, l) in field.iter_mut().zip(&layer) {
            *f += gain * l;
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let peak = field
        .iter()
        .fold(0.0f64, |m, v| m.max((v - mean).abs()))
        .max(1e-12);
    field.iter().map(|v| (v - mean) / peak).collect()
}

/// A smooth single plane with values spread over roughly `[20, 235]`.
pub fn smooth_plane(width: usize, height: usize, seed: u64) -> BayerFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = noise_field(width, height, &mut rng);
    let base = rng.random_range(100.0..156.0);
    BayerFrame {
        width,
        height,
        samples: field.iter().map(|v| to_u8(base + 100.0 * v)).collect(),
        pattern: CfaPattern::Plain,
    }
}

/// A smooth RGB image whose channels share a luminance field plus weaker
/// per-channel chroma fields.
pub fn smooth_rgb(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let luma = noise_field(width, height, &mut rng);
    let mut planes: [Vec<u8>; 3] = Default::default();
    for plane in planes.iter_mut() {
        let chroma = noise_field(width, height, &mut rng);
        let base = rng.random_range(90.0..165.0);
        *plane = luma
            .iter()
            .zip(&chroma)
            .map(|(l, c)| to_u8(base + 80.0 * l + 25.0 * c))
            .collect();
    }
    RgbImage {
        width,
        height,
        planes,
    }
}

/// An RGGB mosaic of [`smooth_rgb`].
pub fn smooth_bayer(width: usize, height: usize, seed: u64) -> BayerFrame {
    mosaic_rggb(&smooth_rgb(width, height, seed))
}

/// Uniform white noise, for incompressible or timing inputs.
pub fn noise_frame(width: usize, height: usize, seed: u64) -> BayerFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BayerFrame {
        width,
        height,
        samples: (0..width * height).map(|_| rng.random()).collect(),
        pattern: CfaPattern::Rggb,
    }
}
