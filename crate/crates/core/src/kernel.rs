use crate::{Error, Result};

/// A stack of `n_c` masks, each `kx` wide and `ky` tall.
///
/// Weights are stored mask-major, then row-major inside each mask:
/// `weights[c * kx * ky + row * kx + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    kx: usize,
    ky: usize,
    n_c: usize,
    weights: Vec<T>,
}

impl<T: Copy> Kernel<T> {
    pub fn new(kx: usize, ky: usize, n_c: usize, weights: Vec<T>) -> Result<Self> {
        if kx == 0 || ky == 0 || n_c == 0 {
            return Err(Error::invalid(format!(
                "kernel dims must be positive, got {kx}x{ky}x{n_c}"
            )));
        }
        if weights.len() != kx * ky * n_c {
            return Err(Error::DimensionMismatch(format!(
                "kernel {kx}x{ky}x{n_c} needs {} weights, got {}",
                kx * ky * n_c,
                weights.len()
            )));
        }
        Ok(Self {
            kx,
            ky,
            n_c,
            weights,
        })
    }

    pub fn filled(kx: usize, ky: usize, n_c: usize, value: T) -> Result<Self> {
        Self::new(kx, ky, n_c, vec![value; kx * ky * n_c])
    }

    pub fn kx(&self) -> usize {
        self.kx
    }

    pub fn ky(&self) -> usize {
        self.ky
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// Pixels per block.
    pub fn block_len(&self) -> usize {
        self.kx * self.ky
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }

    /// The `c`-th mask as a flat row-major `kx*ky` slice.
    pub fn mask(&self, c: usize) -> &[T] {
        let n = self.block_len();
        &self.weights[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> T {
        self.weights[c * self.block_len() + row * self.kx + col]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Kernel<U> {
        Kernel {
            kx: self.kx,
            ky: self.ky,
            n_c: self.n_c,
            weights: self.weights.iter().copied().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Kernel<U>) -> bool {
        self.kx == other.kx && self.ky == other.ky && self.n_c == other.n_c
    }
}
