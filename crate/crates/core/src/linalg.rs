//! Banded Cholesky factorization for stationary noise covariances.

use crate::error::{Error, Result};

/// Lower factor `L` of a symmetric positive (semi)definite band matrix,
/// `A = L L^T`, stored row by row: `band[i * (b + 1) + (b - d)]` holds `L[i][i - d]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the matrix with entries `entry(i, j)` for `|i - j| <= bandwidth`.
    ///
    /// Pivots below `tol * max diagonal` are treated as zero (semidefinite
    /// directions); a clearly negative pivot is a failure.
    pub fn factor(n: usize, bandwidth: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let b = bandwidth.min(n.saturating_sub(1));
        let w = b + 1;
        let mut band = vec![0.0; n * w];
        let scale = (0..n).map(|i| entry(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let tol = 1e-13 * scale;
        let at = |i: usize, j: usize| i * w + (b - (i - j));
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(b));
                let mut s = entry(i, j);
                for k in klo..j {
                    s -= band[at(i, k)] * band[at(j, k)];
                }
                if i == j {
                    if s < -tol {
                        return Err(Error::Factorization(i));
                    }
                    band[at(i, i)] = if s > tol { s.sqrt() } else { 0.0 };
                } else {
                    let d = band[at(j, j)];
                    band[at(i, j)] = if d > 0.0 { s / d } else { 0.0 };
                }
            }
        }
        Ok(Self { n, bandwidth: b, band })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.bandwidth {
            0.0
        } else {
            self.band[i * (self.bandwidth + 1) + (self.bandwidth - (i - j))]
        }
    }

    /// `out = L z`.
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let b = self.bandwidth;
        let w = b + 1;
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(b);
            let row = &self.band[i * w + (b - (i - lo))..(i + 1) * w];
            *o = row.iter().zip(&z[lo..=i]).map(|(l, v)| l * v).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(c: &BandedCholesky, i: usize, j: usize) -> f64 {
        (0..c.size()).map(|k| c.get(i, k) * c.get(j, k)).sum()
    }

    #[test]
    fn tridiagonal_reconstructs() {
        let n = 40;
        let a = |i: usize, j: usize| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        };
        let c = BandedCholesky::factor(n, 1, a).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((reconstruct(&c, i, j) - a(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semidefinite_tent_covariance() {
        // rank-deficient: all-ones block
        let c = BandedCholesky::factor(5, 4, |_, _| 1.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((reconstruct(&c, i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = |i: usize, j: usize| if i == j { 1.0 } else { 2.0 };
        assert!(matches!(BandedCholesky::factor(3, 2, a), Err(Error::Factorization(1))));
    }

    #[test]
    fn mul_lower_matches_dense() {
        let a = |i: usize, j: usize| (-(i.abs_diff(j) as f64)).exp() * if i.abs_diff(j) <= 3 { 1.0 } else { 0.0 } + if i == j { 1.0 } else { 0.0 };
        let c = BandedCholesky::factor(12, 3, a).unwrap();
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; 12];
        c.mul_lower(&z, &mut out);
        for i in 0..12 {
            let d: f64 = (0..12).map(|k| c.get(i, k) * z[k]).sum();
            assert!((out[i] - d).abs() < 1e-13);
        }
    }
}
