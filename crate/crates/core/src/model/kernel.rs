//! Homogeneous synaptic kernels with closed-form antiderivatives.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `w(x) = exp(-|x|/s) / (2 s)`
    Exponential,
    /// `w(x) = exp(-x^2 / (2 s^2)) / sqrt(2 pi s^2)`
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { family: KernelFamily::Exponential, sigma: 1.0 }
    }
}

/// Even, unit-mass, nonnegative kernel.
#[derive(Debug, Clone, Copy)]
pub struct SynapticKernel {
    family: KernelFamily,
    sigma: f64,
    tail_constant: f64,
}

impl SynapticKernel {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel sigma must be positive, got {sigma}")));
        }
        let mut k = Self { family, sigma, tail_constant: 0.0 };
        k.tail_constant = k.scan_tail_constant();
        if k.tail_constant > k.tail_constant_analytic() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "tail ratio scan {} exceeds analytic constant {}",
                k.tail_constant,
                k.tail_constant_analytic()
            )));
        }
        Ok(k)
    }

    pub fn from_params(p: KernelParams) -> Result<Self> {
        Self::new(p.family, p.sigma)
    }

    pub fn exponential(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, sigma)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let s = self.sigma;
        match self.family {
            KernelFamily::Exponential => (-x.abs() / s).exp() / (2.0 * s),
            KernelFamily::Gaussian => {
                let z = x / s;
                (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s)
            }
        }
    }

    /// Upper tail mass `int_x^inf w`, valid for any real `x`.
    #[inline]
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - self.tail(-x);
        }
        let s = self.sigma;
        match self.family {
            KernelFamily::Exponential => 0.5 * (-x / s).exp(),
            KernelFamily::Gaussian => 0.5 * erfc(x / (s * std::f64::consts::SQRT_2)),
        }
    }

    /// Lower mass `int_{-inf}^x w`.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        self.tail(-x)
    }

    /// `int_a^b w` for `a <= b`, evaluated on the side that avoids cancellation.
    #[inline]
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        if a >= 0.0 {
            self.tail(a) - self.tail(b)
        } else if b <= 0.0 {
            self.tail(-b) - self.tail(-a)
        } else {
            1.0 - self.tail(b) - self.tail(-a)
        }
    }

    /// `||w_x||_1`; equal to `2 w(0)` for an even kernel decreasing in `|x|`.
    pub fn deriv_l1(&self) -> f64 {
        2.0 * self.eval(0.0)
    }

    /// `sup_x w(x)`.
    pub fn sup(&self) -> f64 {
        self.eval(0.0)
    }

    /// `C_w` obtained by scanning `tail(x) / w(x)` over `[0, 10 sigma]`.
    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    pub fn tail_constant_analytic(&self) -> f64 {
        match self.family {
            KernelFamily::Exponential => self.sigma,
            KernelFamily::Gaussian => self.sigma * (std::f64::consts::PI / 2.0).sqrt(),
        }
    }

    fn scan_tail_constant(&self) -> f64 {
        const POINTS: usize = 4000;
        let top = 10.0 * self.sigma;
        (0..=POINTS)
            .map(|i| {
                let x = top * i as f64 / POINTS as f64;
                self.tail(x) / self.eval(x)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest half-width beyond which the two-sided tail mass drops below `eps`.
    pub fn support_radius(&self, eps: f64) -> f64 {
        let mut r = self.sigma;
        while 2.0 * self.tail(r) > eps {
            r *= 1.25;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn even_and_unit_mass() {
        for k in [SynapticKernel::exponential(0.7).unwrap(), SynapticKernel::gaussian(1.3).unwrap()] {
            for i in 0..50 {
                let x = 0.13 * i as f64;
                assert_eq!(k.eval(x), k.eval(-x));
            }
            assert!((k.mass(-1e3, 1e3) - 1.0).abs() < 1e-14);
            assert_eq!(k.tail(0.0), 0.5);
        }
    }

    #[test]
    fn tail_matches_quadrature() {
        for k in [SynapticKernel::exponential(1.0).unwrap(), SynapticKernel::gaussian(1.0).unwrap()] {
            for &x in &[0.0, 0.5, 2.0, 4.0] {
                let q = simpson(|y| k.eval(y), x, x + 40.0, 40_000);
                assert!((k.tail(x) - q).abs() < 1e-10, "{x}: {} vs {q}", k.tail(x));
            }
        }
    }

    #[test]
    fn exponential_tail_constant_is_sigma() {
        for &s in &[0.5, 1.0, 2.5] {
            let k = SynapticKernel::exponential(s).unwrap();
            assert!((k.tail_constant() - s).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_tail_constant_is_mills_ratio_at_zero() {
        let k = SynapticKernel::gaussian(1.0).unwrap();
        // the ratio tail/w is the Mills ratio, decreasing in x
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let x = 0.1 * i as f64;
            let r = k.tail(x) / k.eval(x);
            assert!(r <= prev + 1e-15);
            prev = r;
        }
        assert!((k.tail_constant() - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tail_bound_holds_on_grid() {
        for k in [SynapticKernel::exponential(1.0).unwrap(), SynapticKernel::gaussian(0.8).unwrap()] {
            let c = k.tail_constant();
            for i in 0..400 {
                let x = 0.02 * i as f64;
                assert!(k.tail(x) <= c * k.eval(x) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn derivative_l1_matches_quadrature() {
        for k in [SynapticKernel::exponential(1.0).unwrap(), SynapticKernel::gaussian(1.0).unwrap()] {
            let h = 1e-6;
            let d = |x: f64| ((k.eval(x + h) - k.eval(x - h)) / (2.0 * h)).abs();
            let q = 2.0 * simpson(d, 1e-5, 40.0, 200_000);
            assert!((k.deriv_l1() - q).abs() < 1e-3, "{} vs {q}", k.deriv_l1());
        }
    }
}
