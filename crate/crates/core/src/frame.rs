//! 8-bit single-plane frames, 3-plane RGB images and their PGM/PPM I/O.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Color filter layout of a single-plane frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CfaPattern {
    /// Red at even rows and even columns, blue at odd rows and odd columns.
    #[default]
    Rggb,
    /// A single color channel (or monochrome) plane.
    Plain,
}

/// A single-plane 8-bit frame, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BayerFrame {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
    pub pattern: CfaPattern,
}

impl BayerFrame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>, pattern: CfaPattern) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} frame needs {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
            pattern,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, pattern: CfaPattern) -> Self {
        Self {
            width,
            height,
            samples: vec![value; width * height],
            pattern,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn with_pattern(mut self, pattern: CfaPattern) -> Self {
        self.pattern = pattern;
        self
    }

    /// Copy out the `w`×`h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h} at ({x},{y}) exceeds {}x{} frame",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(w * h);
        for row in y..y + h {
            samples.extend_from_slice(&self.row(row)[x..x + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            samples,
            pattern: self.pattern,
        })
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.samples);
        out
    }

    /// Parse a binary PGM. The pattern defaults to RGGB.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let (width, height, data) = parse_pnm(bytes, b"P5", 1, "PGM")?;
        Self::new(width, height, data.to_vec(), CfaPattern::Rggb)
    }
}

/// Three 8-bit planes of equal size, row-major, in R, G, B order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<u8>; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<u8>; 3]) -> Result<Self> {
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::DimensionMismatch(format!(
                "every plane of a {width}x{height} image needs {} samples",
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn from_interleaved(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "interleaved {width}x{height} image needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let mut planes: [Vec<u8>; 3] = Default::default();
        for (c, plane) in planes.iter_mut().enumerate() {
            *plane = rgb.iter().skip(c).step_by(3).copied().collect();
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn interleaved(&self) -> Vec<u8> {
        let [r, g, b] = &self.planes;
        r.iter()
            .zip(g)
            .zip(b)
            .flat_map(|((&r, &g), &b)| [r, g, b])
            .collect()
    }

    /// View one plane as a PLAIN frame.
    pub fn plane_frame(&self, c: usize) -> BayerFrame {
        BayerFrame {
            width: self.width,
            height: self.height,
            samples: self.planes[c].clone(),
            pattern: CfaPattern::Plain,
        }
    }

    pub fn from_plane_frames(frames: [BayerFrame; 3]) -> Result<Self> {
        let [r, g, b] = frames;
        if r.width != g.width || r.width != b.width || r.height != g.height || r.height != b.height
        {
            return Err(Error::DimensionMismatch("planes differ in size".into()));
        }
        Self::new(r.width, r.height, [r.samples, g.samples, b.samples])
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.interleaved());
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let (width, height, data) = parse_pnm(bytes, b"P6", 3, "PPM")?;
        Self::from_interleaved(width, height, data)
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<BayerFrame> {
    BayerFrame::from_pgm_bytes(&fs::read(path)?)
}

pub fn save_pgm(frame: &BayerFrame, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, frame.to_pgm_bytes())?;
    Ok(())
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    RgbImage::from_ppm_bytes(&fs::read(path)?)
}

pub fn save_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, image.to_ppm_bytes())?;
    Ok(())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::malformed(self.what, format!("missing {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::malformed(self.what, format!("{field} out of range")))
    }
}

fn parse_pnm<'a>(
    bytes: &'a [u8],
    magic: &[u8; 2],
    channels: usize,
    what: &'static str,
) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::malformed(
            what,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut cur = HeaderCursor {
        bytes,
        pos: 2,
        what,
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::malformed(what, "no whitespace after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::malformed(what, "dimensions overflow"))?;
    let data = &bytes[cur.pos..];
    if data.len() < need {
        return Err(Error::malformed(
            what,
            format!(
                "truncated payload: expected {need} bytes, found {}",
                data.len()
            ),
        ));
    }
    Ok((width, height, &data[..need]))
}

/// Top-left corners of `count` random `crop`×`crop` windows, all on even
/// rows and columns so every crop keeps the RGGB phase of its source.
pub fn crop_offsets(
    width: usize,
    height: usize,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if crop == 0 || !crop.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "crop size {crop} must be a positive even number"
        )));
    }
    if crop > width || crop > height {
        return Err(Error::invalid(format!(
            "crop {crop} larger than {width}x{height} frame"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_x = (width - crop) / 2;
    let max_y = (height - crop) / 2;
    Ok((0..count)
        .map(|_| {
            (
                2 * rng.random_range(0..=max_x),
                2 * rng.random_range(0..=max_y),
            )
        })
        .collect())
}

pub fn extract_crops(
    frame: &BayerFrame,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<BayerFrame>> {
    crop_offsets(frame.width, frame.height, crop, count, seed)?
        .into_iter()
        .map(|(x, y)| frame.crop(x, y, crop, crop))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_2x2_maps_bytes_row_major() {
        let f = BayerFrame::from_pgm_bytes(b"P5\n2 2\n255\n\x01\x02\x03\x04").unwrap();
        assert_eq!((f.width, f.height), (2, 2));
        assert_eq!(f.row(0), &[1, 2]);
        assert_eq!(f.row(1), &[3, 4]);
        assert_eq!(f.pattern, CfaPattern::Rggb);
    }

    #[test]
    fn pgm_single_sample() {
        let f = BayerFrame::from_pgm_bytes(b"P5\n1 1\n255\n\x00").unwrap();
        assert_eq!(f.samples, vec![0]);
    }

    #[test]
    fn pgm_16_bit_rejected() {
        let err = BayerFrame::from_pgm_bytes(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::UnsupportedMaxval(65535)));
        assert!(err.to_string().contains("unsupported maxval"));
    }

    #[test]
    fn pgm_malformed_and_truncated() {
        assert!(BayerFrame::from_pgm_bytes(b"P2\n1 1\n255\n0").is_err());
        assert!(BayerFrame::from_pgm_bytes(b"P5\n1\n").is_err());
        let err = BayerFrame::from_pgm_bytes(b"P5\n2 2\n255\n\x01\x02").unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn pgm_header_comment_is_skipped() {
        let f = BayerFrame::from_pgm_bytes(b"P5\n# made by hand\n1 1\n255\n\x07").unwrap();
        assert_eq!(f.samples, vec![7]);
    }

    #[test]
    fn saturated_frame_round_trip() {
        let f = BayerFrame::filled(8, 8, 255, CfaPattern::Rggb);
        assert_eq!(BayerFrame::from_pgm_bytes(&f.to_pgm_bytes()).unwrap(), f);
    }

    #[test]
    fn ppm_interleaving() {
        let img = RgbImage::from_ppm_bytes(b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.planes[0], vec![1, 4]);
        assert_eq!(img.planes[1], vec![2, 5]);
        assert_eq!(img.planes[2], vec![3, 6]);
        let one = RgbImage::new(1, 1, [vec![10], vec![20], vec![30]]).unwrap();
        assert_eq!(RgbImage::from_ppm_bytes(&one.to_ppm_bytes()).unwrap(), one);
    }

    #[test]
    fn crops_land_on_even_offsets() {
        let frame = BayerFrame::filled(3864, 2048, 0, CfaPattern::Rggb);
        let crops = extract_crops(&frame, 128, 10, 7).unwrap();
        assert_eq!(crops.len(), 10);
        assert!(crops.iter().all(|c| c.width == 128 && c.height == 128));
        for (x, y) in crop_offsets(3864, 2048, 128, 10, 7).unwrap() {
            assert_eq!(x % 2, 0);
            assert_eq!(y % 2, 0);
            assert!(x + 128 <= 3864 && y + 128 <= 2048);
        }
    }

    #[test]
    fn full_size_crop_is_identity() {
        let frame = BayerFrame::new(4, 4, (0..16).collect(), CfaPattern::Rggb).unwrap();
        let crops = extract_crops(&frame, 4, 1, 0).unwrap();
        assert_eq!(crops, vec![frame]);
    }

    #[test]
    fn crop_offsets_are_deterministic() {
        let a = crop_offsets(500, 300, 64, 20, 99).unwrap();
        let b = crop_offsets(500, 300, 64, 20, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, crop_offsets(500, 300, 64, 20, 100).unwrap());
    }

    #[test]
    fn bad_crops_rejected() {
        assert!(crop_offsets(64, 64, 128, 1, 0).is_err());
        assert!(crop_offsets(64, 64, 7, 1, 0).is_err());
    }
}
