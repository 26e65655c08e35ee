//! Discretized synaptic weights for a network of populations on `[-L, L)`.
//!
//! Population `k` sits at `k/m` for `k = -mL, ..., mL - 1` and is stored at
//! array index `k + mL`. The interior weight `w_{kl}` is the kernel mass seen
//! from `k/m` over the cell `[l/m, (l+1)/m)`; the two boundary weights carry the
//! mass of everything beyond `L` and below `-L`, so every row sums to one.

use crate::conv::Toeplitz;
use crate::error::{Error, Result};
use crate::model::SynapticKernel;

/// Default upper bound on `2mL`.
pub const DEFAULT_POPULATION_CAP: usize = 1 << 20;

#[derive(Debug)]
pub struct WeightMatrix {
    m: usize,
    half_length: usize,
    interior: Toeplitz,
    boundary_plus: Vec<f64>,
    boundary_minus: Vec<f64>,
}

impl WeightMatrix {
    pub fn build(kernel: &SynapticKernel, m: usize, half_length: usize) -> Result<Self> {
        Self::build_capped(kernel, m, half_length, DEFAULT_POPULATION_CAP)
    }

    pub fn build_capped(kernel: &SynapticKernel, m: usize, half_length: usize, cap: usize) -> Result<Self> {
        if m == 0 || half_length == 0 {
            return Err(Error::InvalidParameter(format!(
                "weights need m >= 1 and L >= 1, got m={m}, L={half_length}"
            )));
        }
        let p = m
            .checked_mul(half_length)
            .and_then(|v| v.checked_mul(2))
            .ok_or(Error::DomainTooLarge { populations: usize::MAX, cap })?;
        if p > cap {
            return Err(Error::DomainTooLarge { populations: p, cap });
        }
        let mf = m as f64;
        // w_{kl} = int_{(d-1)/m}^{d/m} w,  d = k - l
        let interior = Toeplitz::from_fn(p, |d| kernel.mass((d as f64 - 1.0) / mf, d as f64 / mf));
        let lf = half_length as f64;
        let offset = (m * half_length) as f64;
        let position = |i: usize| (i as f64 - offset) / mf;
        let boundary_plus = (0..p).map(|i| kernel.cdf(position(i) - lf)).collect();
        let boundary_minus = (0..p).map(|i| kernel.tail(position(i) + lf)).collect();
        Ok(Self { m, half_length, interior, boundary_plus, boundary_minus })
    }

    pub fn density(&self) -> usize {
        self.m
    }

    pub fn half_length(&self) -> usize {
        self.half_length
    }

    pub fn populations(&self) -> usize {
        self.interior.size()
    }

    /// Position `k/m` of the population stored at `index`.
    pub fn position(&self, index: usize) -> f64 {
        (index as f64 - (self.m * self.half_length) as f64) / self.m as f64
    }

    /// Array index of lattice label `k`.
    pub fn index_of(&self, k: i64) -> usize {
        (k + (self.m * self.half_length) as i64) as usize
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.interior.get(row, col)
    }

    pub fn boundary_plus(&self) -> &[f64] {
        &self.boundary_plus
    }

    pub fn boundary_minus(&self) -> &[f64] {
        &self.boundary_minus
    }

    pub fn interior(&self) -> &Toeplitz {
        &self.interior
    }

    /// `out_k = sum_l w_{kl} x_l`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.interior.apply(x, out);
    }

    /// `sum_l w_{kl} x_l + w^+_k right + w^-_k left`.
    pub fn input_with_boundary(&self, x: &[f64], left: f64, right: f64, out: &mut [f64]) {
        self.interior.apply(x, out);
        for ((o, bp), bm) in out.iter_mut().zip(&self.boundary_plus).zip(&self.boundary_minus) {
            *o += bp * right + bm * left;
        }
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        let p = self.populations();
        (0..p).map(|l| self.get(row, l)).sum::<f64>() + self.boundary_plus[row] + self.boundary_minus[row]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.interior.to_dense()
    }
}
