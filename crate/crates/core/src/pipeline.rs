//! End-to-end train, compress and decompress, shared by the CLI and tests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::container::Container;
use crate::demosaic::demosaic_bilinear;
use crate::encoder::{compress, quantize, select_q_scale, CompRaw};
use crate::frame::{extract_crops, load_pgm};
use crate::linear::{decode_plane, decode_to_frame};
use crate::trainer::{finalize_mask_set, train_linear_autoencoder, TrainConfig, TrainReport};
use crate::{BayerFrame, CfaPattern, Error, MaskSet, Result, RgbImage};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainParams {
    pub kx: usize,
    pub ky: usize,
    pub n_c: usize,
    pub bits: u8,
    /// Square crop edge in pixels.
    pub crop: usize,
    /// Crops drawn from each input frame.
    pub count: usize,
    pub config: TrainConfig,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            kx: 8,
            ky: 8,
            n_c: 4,
            bits: 4,
            crop: 128,
            count: 16,
            config: TrainConfig::default(),
        }
    }
}

/// Crops → float autoencoder → integer masks → `Q_scale` on the training crops.
pub fn train_mask_set(
    frames: &[BayerFrame],
    params: &TrainParams,
) -> Result<(MaskSet, TrainReport)> {
    if frames.is_empty() {
        return Err(Error::invalid("no training frames"));
    }
    let seed = params.config.seed;
    let mut crops = Vec::with_capacity(frames.len() * params.count);
    for (i, frame) in frames.iter().enumerate() {
        crops.extend(extract_crops(
            frame,
            params.crop,
            params.count,
            seed.wrapping_add(i as u64),
        )?);
    }
    let (w, d, report) =
        train_linear_autoencoder(&crops, params.kx, params.ky, params.n_c, &params.config)?;
    let mut masks = finalize_mask_set(w, d, params.bits)?;
    let sums: Vec<CompRaw> = crops
        .iter()
        .map(|c| compress(c, &masks.w_int))
        .collect::<Result<_>>()?;
    masks.q_scale = select_q_scale(&sums, None)?;
    Ok((masks, report))
}

/// Every `*.pgm` directly inside `dir`, in file-name order.
pub fn load_pgm_dir(dir: impl AsRef<Path>) -> Result<Vec<BayerFrame>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .pgm files in {}",
            dir.as_ref().display()
        )));
    }
    paths.iter().map(load_pgm).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompressOptions {
    pub entropy_code: bool,
    pub include_decode: bool,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self {
            entropy_code: false,
            include_decode: true,
        }
    }
}

pub fn compress_frame(
    frame: &BayerFrame,
    masks: &MaskSet,
    opts: CompressOptions,
) -> Result<Container> {
    let q = quantize(&compress(frame, &masks.w_int)?, masks.q_scale)?;
    Container::from_planes(
        frame.width,
        frame.height,
        masks,
        &[q],
        opts.entropy_code,
        opts.include_decode,
    )
}

pub fn compress_image(
    image: &RgbImage,
    masks: &MaskSet,
    opts: CompressOptions,
) -> Result<Container> {
    let planes = (0..3)
        .map(|c| {
            quantize(
                &compress(&image.plane_frame(c), &masks.w_int)?,
                masks.q_scale,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Container::from_planes(
        image.width,
        image.height,
        masks,
        &planes,
        opts.entropy_code,
        opts.include_decode,
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decoded {
    Frame(BayerFrame),
    Rgb(RgbImage),
}

/// Decode a container with its embedded kernel, falling back to the decode
/// kernel of `masks`.
pub fn decompress(container: &Container, masks: Option<&MaskSet>) -> Result<Decoded> {
    let mut set = container.mask_set()?;
    if set.decode.is_none() {
        let fallback = masks
            .and_then(|m| m.decode.clone())
            .ok_or(Error::DecodeKernelUnavailable)?;
        set = set.with_decode(fallback)?;
    }
    let pattern = if container.rgb {
        CfaPattern::Plain
    } else {
        CfaPattern::Rggb
    };
    let mut frames = container
        .planes()?
        .iter()
        .map(|p| Ok(decode_to_frame(&decode_plane(p, &set)?, pattern)))
        .collect::<Result<Vec<_>>>()?;
    if container.rgb {
        let b = frames.pop().expect("three planes");
        let g = frames.pop().expect("three planes");
        let r = frames.pop().expect("three planes");
        Ok(Decoded::Rgb(RgbImage::from_plane_frames([r, g, b])?))
    } else {
        Ok(Decoded::Frame(frames.pop().expect("one plane")))
    }
}

/// Demosaic a decoded Bayer frame; RGB results pass through.
pub fn to_rgb(decoded: Decoded) -> Result<RgbImage> {
    match decoded {
        Decoded::Frame(f) => demosaic_bilinear(&f),
        Decoded::Rgb(img) => Ok(img),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_frames;
    use crate::synth::smooth_bayer;

    fn quick_params() -> TrainParams {
        TrainParams {
            crop: 64,
            count: 4,
            config: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            ..TrainParams::default()
        }
    }

    #[test]
    fn train_compress_decompress() {
        let frames: Vec<BayerFrame> = (0..3).map(|s| smooth_bayer(128, 128, s)).collect();
        let (masks, report) = train_mask_set(&frames, &quick_params()).unwrap();
        assert!(masks.q_scale >= 1);
        assert!(report.final_mse < report.zero_decoder_mse);
        let test = smooth_bayer(64, 48, 77);
        for ec in [false, true] {
            let opts = CompressOptions {
                entropy_code: ec,
                include_decode: true,
            };
            let c = compress_frame(&test, &masks, opts).unwrap();
            let back = Container::from_bytes(&c.to_bytes()).unwrap();
            let Decoded::Frame(out) = decompress(&back, None).unwrap() else {
                panic!("expected a frame")
            };
            assert_eq!((out.width, out.height), (64, 48));
            let q = evaluate_frames(&test, &out).unwrap();
            assert!(q.psnr > 20.0, "psnr {}", q.psnr);
        }
    }

    #[test]
    fn stripped_kernel_needs_mask_file() {
        let frames = vec![smooth_bayer(128, 128, 1)];
        let (masks, _) = train_mask_set(&frames, &quick_params()).unwrap();
        let opts = CompressOptions {
            entropy_code: false,
            include_decode: false,
        };
        let c = compress_frame(&smooth_bayer(32, 32, 2), &masks, opts).unwrap();
        let err = decompress(&c, None).unwrap_err();
        assert_eq!(err.to_string(), "decode kernel unavailable");
        assert!(decompress(&c, Some(&masks)).is_ok());
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(train_mask_set(&[], &TrainParams::default()).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(load_pgm_dir(dir.path()).is_err());
    }
}
