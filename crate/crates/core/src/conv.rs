//! Toeplitz matrix-vector products, direct for small sizes and FFT-backed otherwise.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const FFT_THRESHOLD: usize = 192;

struct Spectral {
    len: usize,
    kernel_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Square Toeplitz operator `y_i = sum_j t[i - j] x_j` of size `n`.
pub struct Toeplitz {
    n: usize,
    /// `t[d]` stored at index `d + n - 1`.
    coeffs: Vec<f64>,
    spectral: Option<Spectral>,
}

impl fmt::Debug for Toeplitz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Toeplitz")
            .field("n", &self.n)
            .field("fft", &self.spectral.is_some())
            .finish()
    }
}

impl Toeplitz {
    /// Builds the operator from the diagonal function `d -> t[d]`, `|d| < n`.
    pub fn from_fn(n: usize, t: impl Fn(isize) -> f64) -> Self {
        assert!(n > 0, "empty Toeplitz operator");
        let coeffs: Vec<f64> = (-(n as isize - 1)..=(n as isize - 1)).map(&t).collect();
        let spectral = (n >= FFT_THRESHOLD).then(|| Self::plan(n, &coeffs));
        Self { n, coeffs, spectral }
    }

    fn plan(n: usize, coeffs: &[f64]) -> Spectral {
        let len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
        kernel_hat[0].re = coeffs[n - 1];
        for d in 1..n {
            kernel_hat[d].re = coeffs[n - 1 + d];
            kernel_hat[len - d].re = coeffs[n - 1 - d];
        }
        forward.process(&mut kernel_hat);
        let scale = 1.0 / len as f64;
        for z in &mut kernel_hat {
            *z *= scale;
        }
        Spectral { len, kernel_hat, forward, inverse }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `t[d]`.
    #[inline]
    pub fn diag(&self, d: isize) -> f64 {
        self.coeffs[(d + self.n as isize - 1) as usize]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.diag(i as isize - j as isize)
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        match &self.spectral {
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    // coeffs[n - 1 + i - j] == t[i - j]; walk j upward, index downward
                    let row = &self.coeffs[i..i + self.n];
                    *o = row.iter().rev().zip(x).map(|(t, v)| t * v).sum();
                }
            }
            Some(s) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); s.len];
                for (b, &v) in buf.iter_mut().zip(x) {
                    b.re = v;
                }
                s.forward.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(&s.kernel_hat) {
                    *b *= k;
                }
                s.inverse.process(&mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o = b.re;
                }
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(t: &Toeplitz, x: &[f64]) -> Vec<f64> {
        t.to_dense().iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn direct_and_fft_agree_with_dense() {
        for &n in &[1usize, 7, 191, 192, 500] {
            let t = Toeplitz::from_fn(n, |d| (-(d as f64 - 0.3).abs() / 9.0).exp() / (1.0 + (d as f64 * 0.01).powi(2)));
            let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
            let y = t.apply_vec(&x);
            let yd = dense_apply(&t, &x);
            for (a, b) in y.iter().zip(&yd) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn asymmetric_coefficients_are_respected() {
        let t = Toeplitz::from_fn(3, |d| d as f64);
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(t.get(0, 2), -2.0);
        assert_eq!(t.apply_vec(&[1.0, 0.0, 0.0]), vec![0.0, 1.0, 2.0]);
    }
}
