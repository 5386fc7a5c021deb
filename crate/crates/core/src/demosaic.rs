//! Bilinear RGGB demosaicing.

use crate::{BayerFrame, CfaPattern, Error, Result, RgbImage};

/// Mirror an out-of-range coordinate about the edge sample (`-1 → 1`,
/// `n → n - 2`). Parity is preserved, so a mirrored tap always lands on a
/// site of the same color.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Fill in the two missing colors at every site from the nearest samples of
/// that color: left/right or up/down pairs, or the four orthogonal or
/// diagonal neighbors. Taps past the edge are mirrored back onto same-color
/// samples.
pub fn demosaic_bilinear(frame: &BayerFrame) -> Result<RgbImage> {
    if frame.pattern != CfaPattern::Rggb {
        return Err(Error::invalid("bilinear demosaic needs an RGGB frame"));
    }
    let (w, h) = (frame.width, frame.height);
    if w == 0 || h == 0 || w % 2 != 0 || h % 2 != 0 {
        return Err(Error::invalid(format!(
            "demosaic needs even dims, got {w}x{h}"
        )));
    }
    let px = |x: isize, y: isize| frame.get(reflect(x, w), reflect(y, h)) as u32;
    let avg = |taps: &[(isize, isize)], x: isize, y: isize| -> u8 {
        let sum: u32 = taps.iter().map(|&(dx, dy)| px(x + dx, y + dy)).sum();
        let n = taps.len() as u32;
        ((2 * sum + n) / (2 * n)) as u8
    };
    const HORIZ: [(isize, isize); 2] = [(-1, 0), (1, 0)];
    const VERT: [(isize, isize); 2] = [(0, -1), (0, 1)];
    const CROSS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const DIAG: [(isize, isize); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];

    let mut planes: [Vec<u8>; 3] = [vec![0; w * h], vec![0; w * h], vec![0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let raw = frame.get(x, y);
            let (r, g, b) = match (y % 2, x % 2) {
                (0, 0) => (raw, avg(&CROSS, xi, yi), avg(&DIAG, xi, yi)),
                (1, 1) => (avg(&DIAG, xi, yi), avg(&CROSS, xi, yi), raw),
                (0, _) => (avg(&HORIZ, xi, yi), raw, avg(&VERT, xi, yi)),
                _ => (avg(&VERT, xi, yi), raw, avg(&HORIZ, xi, yi)),
            };
            let i = y * w + x;
            planes[0][i] = r;
            planes[1][i] = g;
            planes[2][i] = b;
        }
    }
    RgbImage::new(w, h, planes)
}

/// Sample an RGB image back onto an RGGB mosaic.
pub fn mosaic_rggb(image: &RgbImage) -> BayerFrame {
    let (w, h) = (image.width, image.height);
    let samples = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let c = match (y % 2, x % 2) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            image.planes[c][i]
        })
        .collect();
    BayerFrame {
        width: w,
        height: h,
        samples,
        pattern: CfaPattern::Rggb,
    }
}
