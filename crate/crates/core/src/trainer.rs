//! Learning encoder masks and decode kernel as a linear autoencoder over
//! flattened training blocks, plus the exact PCA solution used to check it.
//!
//! Blocks are flattened row-major and scaled to `[0, 1]`. The objective is
//! the mean over blocks of `‖x − Dᵀ(W x)‖²`, with no bias and no centering.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::check_divisible;
use crate::masks::{integerize_masks, MaskSet};
use crate::{BayerFrame, Error, Kernel, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Full-corpus loss before the first update.
    pub initial_mse: f64,
    /// Full-corpus loss after each epoch.
    pub trace: Vec<f64>,
    pub final_mse: f64,
    /// Residual of the optimal rank-`n_c` linear map on the same blocks;
    /// `None` when there are fewer blocks than block pixels.
    pub pca_mse: Option<f64>,
    /// Loss of a decoder that outputs zeros: the mean block energy.
    pub zero_decoder_mse: f64,
}

impl TrainReport {
    /// One `epoch mse` line per epoch, epoch 0 being the initial loss.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "0 {:.9e}", self.initial_mse);
        for (i, mse) in self.trace.iter().enumerate() {
            let _ = writeln!(out, "{} {:.9e}", i + 1, mse);
        }
        match self.pca_mse {
            Some(pca) => writeln!(out, "# final {:.9e} pca {:.9e}", self.final_mse, pca),
            None => writeln!(out, "# final {:.9e} pca n/a", self.final_mse),
        }
        .ok();
        out
    }
}

/// Flattened `[0, 1]` blocks, `dim` values each.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSet {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl BlockSet {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean_energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }
}

/// Cut every crop into `kx`×`ky` blocks scaled to `[0, 1]`.
pub fn extract_blocks(crops: &[BayerFrame], kx: usize, ky: usize) -> Result<BlockSet> {
    if crops.is_empty() {
        return Err(Error::invalid("no training crops"));
    }
    if kx == 0 || ky == 0 {
        return Err(Error::invalid("block dims must be positive"));
    }
    let mut data = Vec::new();
    for crop in crops {
        check_divisible(crop.width, crop.height, kx, ky)?;
        for by in 0..crop.height / ky {
            for bx in 0..crop.width / kx {
                for row in 0..ky {
                    let start = (by * ky + row) * crop.width + bx * kx;
                    data.extend(
                        crop.samples[start..start + kx]
                            .iter()
                            .map(|&v| v as f64 / 255.0),
                    );
                }
            }
        }
    }
    Ok(BlockSet { dim: kx * ky, data })
}

/// `n_c`×`dim` encoder and decoder matrices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAutoencoder {
    pub n_c: usize,
    pub dim: usize,
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl LinearAutoencoder {
    fn random(n_c: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (3.0 / dim as f64).sqrt();
        let mut draw = || {
            (0..n_c * dim)
                .map(|_| rng.random_range(-a..a))
                .collect::<Vec<_>>()
        };
        let encoder = draw();
        let decoder = draw();
        Self {
            n_c,
            dim,
            encoder,
            decoder,
        }
    }

    fn code(&self, x: &[f64], z: &mut [f64]) {
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = dot(&self.encoder[c * self.dim..(c + 1) * self.dim], x);
        }
    }

    fn reconstruct(&self, z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (c, &zc) in z.iter().enumerate() {
            axpy(zc, &self.decoder[c * self.dim..(c + 1) * self.dim], out);
        }
    }

    /// Mean over blocks of the squared reconstruction error.
    pub fn loss(&self, blocks: &BlockSet) -> f64 {
        let mut z = vec![0.0; self.n_c];
        let mut xh = vec![0.0; self.dim];
        let sum: f64 = blocks
            .iter()
            .map(|x| {
                self.code(x, &mut z);
                self.reconstruct(&z, &mut xh);
                xh.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        sum / blocks.len() as f64
    }

    /// Loss over the selected blocks and its gradients with respect to the
    /// encoder and decoder.
    pub fn loss_and_grad(&self, blocks: &BlockSet, indices: &[usize]) -> (f64, Vec<f64>, Vec<f64>) {
        let (n_c, dim) = (self.n_c, self.dim);
        let mut g_enc = vec![0.0; n_c * dim];
        let mut g_dec = vec![0.0; n_c * dim];
        let mut z = vec![0.0; n_c];
        let mut r = vec![0.0; dim];
        let mut dr = vec![0.0; n_c];
        let mut loss = 0.0;
        for &i in indices {
            let x = blocks.block(i);
            self.code(x, &mut z);
            self.reconstruct(&z, &mut r);
            for (rp, xp) in r.iter_mut().zip(x) {
                *rp -= xp;
            }
            loss += r.iter().map(|v| v * v).sum::<f64>();
            for c in 0..n_c {
                let row = c * dim..(c + 1) * dim;
                dr[c] = dot(&self.decoder[row.clone()], &r);
                axpy(z[c], &r, &mut g_dec[row.clone()]);
                axpy(dr[c], x, &mut g_enc[row]);
            }
        }
        let scale = 2.0 / indices.len() as f64;
        g_enc.iter_mut().for_each(|g| *g *= scale);
        g_dec.iter_mut().for_each(|g| *g *= scale);
        (loss / indices.len() as f64, g_enc, g_dec)
    }

    pub fn to_kernels(&self, kx: usize, ky: usize) -> Result<(Kernel<f32>, Kernel<f32>)> {
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        Ok((
            Kernel::new(kx, ky, self.n_c, f(&self.encoder))?,
            Kernel::new(kx, ky, self.n_c, f(&self.decoder))?,
        ))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Minibatch SGD on a block set. Deterministic for a given seed.
pub fn train_blocks(
    blocks: &BlockSet,
    n_c: usize,
    cfg: &TrainConfig,
) -> Result<(LinearAutoencoder, TrainReport)> {
    cfg.validate()?;
    if blocks.is_empty() {
        return Err(Error::invalid("no training blocks"));
    }
    if n_c == 0 || n_c > blocks.dim {
        return Err(Error::invalid(format!(
            "n_c {n_c} outside [1, {}]",
            blocks.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LinearAutoencoder::random(n_c, blocks.dim, &mut rng);
    let initial_mse = model.loss(blocks);
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, g_enc, g_dec) = model.loss_and_grad(blocks, batch);
            axpy(-cfg.learning_rate, &g_enc, &mut model.encoder);
            axpy(-cfg.learning_rate, &g_dec, &mut model.decoder);
        }
        let mse = model.loss(blocks);
        if !mse.is_finite() {
            return Err(Error::invalid("training diverged; lower the learning rate"));
        }
        trace.push(mse);
    }
    let pca_mse = if blocks.len() >= blocks.dim {
        Some(pca_of_blocks(blocks, n_c)?.residual_mse)
    } else {
        None
    };
    let report = TrainReport {
        initial_mse,
        final_mse: *trace.last().expect("at least one epoch"),
        trace,
        pca_mse,
        zero_decoder_mse: blocks.mean_energy(),
    };
    Ok((model, report))
}

/// Train float masks and decode kernel on `kx`×`ky` blocks of `crops`.
pub fn train_linear_autoencoder(
    crops: &[BayerFrame],
    kx: usize,
    ky: usize,
    n_c: usize,
    cfg: &TrainConfig,
) -> Result<(Kernel<f32>, Kernel<f32>, TrainReport)> {
    let blocks = extract_blocks(crops, kx, ky)?;
    let (model, report) = train_blocks(&blocks, n_c, cfg)?;
    let (w, d) = model.to_kernels(kx, ky)?;
    Ok((w, d, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaOracle {
    /// Top eigenvectors of the block second-moment matrix, `n_c`×`dim` row-major.
    pub basis: Vec<f64>,
    /// Sum of the `dim − n_c` smallest eigenvalues.
    pub residual_mse: f64,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

/// Exact optimal rank-`n_c` linear autoencoder via the eigendecomposition of
/// `S = mean(x xᵀ)`.
pub fn pca_of_blocks(blocks: &BlockSet, n_c: usize) -> Result<PcaOracle> {
    let dim = blocks.dim;
    if n_c == 0 || n_c > dim {
        return Err(Error::invalid(format!("n_c {n_c} outside [1, {dim}]")));
    }
    if blocks.len() < dim {
        return Err(Error::invalid(format!(
            "PCA needs at least {dim} blocks, got {}",
            blocks.len()
        )));
    }
    if blocks.data.iter().all(|&v| v == 0.0) {
        return Ok(PcaOracle {
            basis: vec![0.0; n_c * dim],
            residual_mse: 0.0,
            eigenvalues: vec![0.0; dim],
            degenerate: true,
        });
    }
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    for x in blocks.iter() {
        for i in 0..dim {
            let xi = x[i];
            for j in i..dim {
                s[(i, j)] += xi * x[j];
            }
        }
    }
    let n = blocks.len() as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = s[(i, j)] / n;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = order[..n_c]
        .iter()
        .flat_map(|&i| {
            eig.eigenvectors
                .column(i)
                .iter()
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    let residual_mse = eigenvalues[n_c..].iter().map(|v| v.max(0.0)).sum();
    Ok(PcaOracle {
        basis,
        residual_mse,
        eigenvalues,
        degenerate: false,
    })
}

pub fn pca_block_oracle(
    crops: &[BayerFrame],
    kx: usize,
    ky: usize,
    n_c: usize,
) -> Result<PcaOracle> {
    pca_of_blocks(&extract_blocks(crops, kx, ky)?, n_c)
}

/// Integerize the trained encoder and bundle the float decode kernel.
pub fn finalize_mask_set(w_float: Kernel<f32>, d_float: Kernel<f32>, bits: u8) -> Result<MaskSet> {
    if !w_float.same_shape(&d_float) {
        return Err(Error::DimensionMismatch(
            "encoder and decoder kernels differ in shape".into(),
        ));
    }
    let ints = integerize_masks(&w_float, bits, None)?;
    Ok(MaskSet {
        bits,
        w_int: ints.w_int,
        sc_w: ints.sc_w as f32,
        w_float: Some(w_float),
        decode: Some(d_float),
        q_scale: 1,
        degenerate: ints.degenerate,
    })
}

/// Reconstruction loss on `blocks` using the float encoder and using the
/// integer encoder divided by `sc_W`, both with the float decode kernel.
pub fn integerization_penalty(blocks: &BlockSet, masks: &MaskSet) -> Result<(f64, f64)> {
    let w = masks
        .w_float
        .as_ref()
        .ok_or_else(|| Error::invalid("mask set has no float masks"))?;
    let d = masks
        .decode
        .as_ref()
        .ok_or(Error::DecodeKernelUnavailable)?;
    if w.block_len() != blocks.dim {
        return Err(Error::DimensionMismatch(
            "block size differs from masks".into(),
        ));
    }
    let decoder: Vec<f64> = d.weights().iter().map(|&v| v as f64).collect();
    let float_model = LinearAutoencoder {
        n_c: w.n_c(),
        dim: blocks.dim,
        encoder: w.weights().iter().map(|&v| v as f64).collect(),
        decoder: decoder.clone(),
    };
    let inv = 1.0 / masks.sc_w as f64;
    let int_model = LinearAutoencoder {
        encoder: masks
            .w_int
            .weights()
            .iter()
            .map(|&v| v as f64 * inv)
            .collect(),
        ..float_model.clone()
    };
    Ok((float_model.loss(blocks), int_model.loss(blocks)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::smooth_plane;
    use crate::CfaPattern;

    fn random_blocks(n: usize, dim: usize, seed: u64) -> BlockSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BlockSet {
            dim,
            data: (0..n * dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Blocks lying exactly in the span of `rank` fixed random vectors.
    fn subspace_blocks(n: usize, dim: usize, rank: usize, seed: u64) -> BlockSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis: Vec<f64> = (0..rank * dim)
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let coeff: Vec<f64> = (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect();
            for p in 0..dim {
                data.push(
                    (0..rank)
                        .map(|r| coeff[r] * basis[r * dim + p])
                        .sum::<f64>(),
                );
            }
        }
        BlockSet { dim, data }
    }

    #[test]
    fn pca_rank_deficient_residual_zero() {
        let b = subspace_blocks(400, 16, 3, 1);
        assert!(pca_of_blocks(&b, 3).unwrap().residual_mse.abs() < 1e-10);
        assert!(pca_of_blocks(&b, 4).unwrap().residual_mse.abs() < 1e-10);
    }

    #[test]
    fn pca_full_basis_residual_zero() {
        let b = random_blocks(200, 16, 2);
        assert!(pca_of_blocks(&b, 16).unwrap().residual_mse.abs() < 1e-10);
    }

    #[test]
    fn pca_residual_matches_direct_projection() {
        let b = random_blocks(500, 16, 3);
        let oracle = pca_of_blocks(&b, 5).unwrap();
        // Independent recomputation: mean ‖x − B Bᵀ x‖² with the returned basis.
        let mut total = 0.0;
        for x in b.iter() {
            let mut proj = vec![0.0; 16];
            for c in 0..5 {
                let v = &oracle.basis[c * 16..(c + 1) * 16];
                let coef: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                for p in 0..16 {
                    proj[p] += coef * v[p];
                }
            }
            total += x
                .iter()
                .zip(&proj)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        let direct = total / b.len() as f64;
        assert!((direct - oracle.residual_mse).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn pca_degenerate_and_too_few_blocks() {
        let zero = BlockSet {
            dim: 4,
            data: vec![0.0; 40],
        };
        let o = pca_of_blocks(&zero, 2).unwrap();
        assert!(o.degenerate && o.residual_mse == 0.0);
        assert!(pca_of_blocks(&random_blocks(3, 4, 0), 2).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let blocks = random_blocks(40, 12, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model = LinearAutoencoder::random(3, 12, &mut rng);
        let idx: Vec<usize> = (0..40).collect();
        let (_, g_enc, g_dec) = model.loss_and_grad(&blocks, &idx);
        let h = 1e-5;
        for _ in 0..5 {
            let which = rng.random_range(0..2);
            let k = rng.random_range(0..36);
            let eval = |delta: f64| {
                let mut m = model.clone();
                if which == 0 {
                    m.encoder[k] += delta;
                } else {
                    m.decoder[k] += delta;
                }
                m.loss(&blocks)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = if which == 0 { g_enc[k] } else { g_dec[k] };
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-5, "rel err {rel} (fd {fd}, analytic {analytic})");
        }
    }

    #[test]
    fn full_rank_reaches_identity() {
        let crops: Vec<BayerFrame> = (0..64).map(|s| smooth_plane(128, 128, s)).collect();
        let (_, _, report) =
            train_linear_autoencoder(&crops, 2, 2, 4, &TrainConfig::default()).unwrap();
        assert!(report.final_mse < 1e-4, "final {}", report.final_mse);
    }

    #[test]
    fn subspace_data_is_learned() {
        let blocks = subspace_blocks(4096, 16, 4, 5);
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        let (_, report) = train_blocks(&blocks, 4, &cfg).unwrap();
        assert!(report.final_mse < 1e-4, "final {}", report.final_mse);
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let crops: Vec<BayerFrame> = (0..2).map(|s| smooth_plane(32, 32, s)).collect();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train_linear_autoencoder(&crops, 8, 8, 4, &cfg).unwrap();
        let b = train_linear_autoencoder(&crops, 8, 8, 4, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let r = &a.2;
        assert!(r.final_mse <= r.trace[0]);
        assert!(r.final_mse <= r.zero_decoder_mse);
        assert!(r.to_log().lines().count() == r.trace.len() + 2);
    }

    #[test]
    fn training_contract_errors() {
        let cfg = TrainConfig::default();
        assert!(train_linear_autoencoder(&[], 8, 8, 4, &cfg).is_err());
        let odd = [BayerFrame::filled(12, 8, 1, CfaPattern::Plain)];
        assert!(train_linear_autoencoder(&odd, 8, 8, 4, &cfg).is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert!(train_linear_autoencoder(
            &[BayerFrame::filled(8, 8, 1, CfaPattern::Plain)],
            8,
            8,
            4,
            &bad
        )
        .is_err());
    }

    #[test]
    fn finalize_zero_kernels_is_degenerate() {
        let z = Kernel::filled(8, 8, 4, 0.0f32).unwrap();
        let m = finalize_mask_set(z.clone(), z, 4).unwrap();
        assert!(m.degenerate);
        assert_eq!(MaskSet::deserialize(&m.serialize()).unwrap(), m);
    }

    #[test]
    fn integerized_encoder_penalty_is_bounded() {
        let crops: Vec<BayerFrame> = (0..6).map(|s| smooth_plane(64, 64, 100 + s)).collect();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let (w, d, report) = train_linear_autoencoder(&crops[..4], 8, 8, 4, &cfg).unwrap();
        let masks = finalize_mask_set(w, d, 4).unwrap();
        assert_eq!(MaskSet::deserialize(&masks.serialize()).unwrap(), masks);
        let held_out = extract_blocks(&crops[4..], 8, 8).unwrap();
        let (float_mse, int_mse) = integerization_penalty(&held_out, &masks).unwrap();
        eprintln!(
            "held-out float {float_mse:.3e}, 4-bit {int_mse:.3e}, factor {:.2} (train {:.3e})",
            int_mse / float_mse,
            report.final_mse
        );
        assert!(int_mse >= 0.0 && float_mse > 0.0);
        assert!(int_mse < held_out.mean_energy());
    }
}
