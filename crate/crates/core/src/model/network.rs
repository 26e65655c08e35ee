use crate::error::{Error, Result};
use crate::model::{SynapticKernel, WeightMatrix};

/// Dense coupling of a small population network: `input_k = sum_j w_kj x_j + external_k`.
#[derive(Debug, Clone)]
pub struct Network {
    populations: usize,
    weights: Vec<f64>,
    external: Vec<f64>,
}

impl Network {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidParameter("weight matrix must be square and nonempty".into()));
        }
        let weights: Vec<f64> = rows.into_iter().flatten().collect();
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        Ok(Self { populations: p, weights, external: vec![0.0; p] })
    }

    /// `P` populations on a ring with unit spacing; the kernel is wrapped
    /// periodically so each row carries the full unit mass.
    pub fn ring(kernel: &SynapticKernel, populations: usize) -> Result<Self> {
        if populations == 0 {
            return Err(Error::InvalidParameter("ring needs at least one population".into()));
        }
        let p = populations as isize;
        let reach = kernel.support_radius(1e-18).ceil() as isize + 1;
        let images = reach / p + 2;
        let cell = |d: isize| {
            let mut acc = 0.0;
            for n in -images..=images {
                let c = (d + n * p) as f64;
                acc += kernel.mass(c - 0.5, c + 0.5);
            }
            acc
        };
        let rows = (0..p).map(|k| (0..p).map(|j| cell(k - j)).collect()).collect();
        Self::from_rows(rows)
    }

    /// Dense copy of a spatial weight matrix with fixed boundary drive.
    pub fn from_weights(w: &WeightMatrix, left_input: f64, right_input: f64) -> Self {
        let p = w.populations();
        let weights = (0..p).flat_map(|k| (0..p).map(move |l| (k, l))).map(|(k, l)| w.get(k, l)).collect();
        let external = (0..p)
            .map(|k| w.boundary_plus()[k] * right_input + w.boundary_minus()[k] * left_input)
            .collect();
        Self { populations: p, weights, external }
    }

    pub fn with_external(mut self, external: Vec<f64>) -> Result<Self> {
        if external.len() != self.populations {
            return Err(Error::InvalidParameter("external input length mismatch".into()));
        }
        self.external = external;
        Ok(self)
    }

    pub fn populations(&self) -> usize {
        self.populations
    }

    #[inline]
    pub fn weight(&self, k: usize, j: usize) -> f64 {
        self.weights[k * self.populations + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.populations..(k + 1) * self.populations]
    }

    pub fn external(&self) -> &[f64] {
        &self.external
    }

    #[inline]
    pub fn input_at(&self, k: usize, x: &[f64]) -> f64 {
        self.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.external[k]
    }

    pub fn input(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.input_at(k, x);
        }
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row(k).iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_rows_are_stochastic() {
        let k = SynapticKernel::exponential(1.0).unwrap();
        for p in [1, 2, 3, 8] {
            let net = Network::ring(&k, p).unwrap();
            for r in 0..p {
                assert!((net.row_sum(r) - 1.0).abs() < 1e-14, "p={p}");
            }
        }
        assert!((Network::ring(&k, 1).unwrap().weight(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn from_weights_carries_boundary() {
        let k = SynapticKernel::gaussian(1.0).unwrap();
        let w = WeightMatrix::build(&k, 1, 2).unwrap();
        let net = Network::from_weights(&w, 0.3, 0.3);
        let x = vec![0.3; 4];
        for i in 0..4 {
            assert!((net.input_at(i, &x) - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(Network::from_rows(vec![vec![1.0, 0.0]]).is_err());
        assert!(Network::from_rows(vec![vec![-0.1]]).is_err());
        assert!(Network::from_rows(vec![]).is_err());
    }
}
