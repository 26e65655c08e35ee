//! Logistic gain function and its fixed points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scan points used to bracket the roots of `F(x) - x`.
const SCAN_POINTS: usize = 10_000;

/// Logistic sigmoid `F(x) = 1 / (1 + exp(-gamma (x - kappa)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainParams {
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for GainParams {
    fn default() -> Self {
        Self { gamma: 8.0, kappa: 0.5 }
    }
}

/// The three fixed points `a1 < a < a2` of `F(x) = x` with the slopes there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoints {
    pub low: f64,
    pub middle: f64,
    pub high: f64,
    pub slopes: [f64; 3],
}

/// An admissible gain function: bistable, with verified slope conditions.
#[derive(Debug, Clone, Copy)]
pub struct GainFunction {
    gamma: f64,
    kappa: f64,
    fixed: FixedPoints,
}

impl GainFunction {
    pub fn new(gamma: f64, kappa: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidParameter(format!("kappa must lie in (0,1), got {kappa}")));
        }
        let mut gain = Self {
            gamma,
            kappa,
            fixed: FixedPoints { low: 0.0, middle: 0.0, high: 0.0, slopes: [0.0; 3] },
        };
        gain.fixed = gain.find_fixed_points()?;
        Ok(gain)
    }

    pub fn from_params(p: GainParams) -> Result<Self> {
        Self::new(p.gamma, p.kappa)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn fixed_points(&self) -> FixedPoints {
        self.fixed
    }

    /// Returns `(F, 1 - F)` with both halves computed without cancellation.
    #[inline]
    fn halves(&self, x: f64) -> (f64, f64) {
        let z = self.gamma * (x - self.kappa);
        if z >= 0.0 {
            let e = (-z).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = z.exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.halves(x).0
    }

    #[inline]
    pub fn deriv1(&self, x: f64) -> f64 {
        let (f, g) = self.halves(x);
        self.gamma * f * g
    }

    #[inline]
    pub fn deriv2(&self, x: f64) -> f64 {
        let (f, g) = self.halves(x);
        self.gamma * self.gamma * f * g * (g - f)
    }

    #[inline]
    pub fn deriv3(&self, x: f64) -> f64 {
        let (f, g) = self.halves(x);
        self.gamma.powi(3) * f * g * (1.0 - 6.0 * f * g)
    }

    /// `F^{-1}(y)`; fails for activities on or outside the lattice boundary.
    #[inline]
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Boundary { population: 0, value: y });
        }
        Ok(self.kappa + (y / (1.0 - y)).ln() / self.gamma)
    }

    /// `F''/F'^2`, the Ito correction factor of the voltage equation.
    #[inline]
    pub fn ito_factor(&self, x: f64) -> f64 {
        let d1 = self.deriv1(x);
        self.deriv2(x) / (d1 * d1)
    }

    /// Supremum of `F'` over the real line.
    pub fn max_slope(&self) -> f64 {
        self.gamma / 4.0
    }

    fn find_fixed_points(&self) -> Result<FixedPoints> {
        let g = |x: f64| self.eval(x) - x;
        let mut roots = Vec::new();
        let step = 1.0 / SCAN_POINTS as f64;
        let mut prev_x = 0.0;
        let mut prev_g = g(prev_x);
        for i in 1..=SCAN_POINTS {
            let x = i as f64 * step;
            let gx = g(x);
            if gx == 0.0 {
                roots.push(x);
            } else if prev_g != 0.0 && prev_g.signum() != gx.signum() {
                roots.push(bisect(&g, prev_x, x));
            }
            prev_x = x;
            prev_g = gx;
        }
        if roots.len() != 3 {
            return Err(Error::Inadmissible(format!(
                "F(x) - x has {} roots in (0,1) for gamma={}, kappa={}; exactly three required",
                roots.len(),
                self.gamma,
                self.kappa
            )));
        }
        let slopes = [self.deriv1(roots[0]), self.deriv1(roots[1]), self.deriv1(roots[2])];
        if !(slopes[0] < 1.0 && slopes[1] > 1.0 && slopes[2] < 1.0) {
            return Err(Error::Inadmissible(format!(
                "slope conditions violated: F'(a1)={}, F'(a)={}, F'(a2)={}",
                slopes[0], slopes[1], slopes[2]
            )));
        }
        Ok(FixedPoints { low: roots[0], middle: roots[1], high: roots[2], slopes })
    }
}

/// Bisection to full double precision on a bracketing interval.
fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return if g_lo.abs() <= g(hi).abs() { lo } else { hi };
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn value_and_slope_at_threshold() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.deriv1(0.5), 2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        for &x in &[0.1, 0.3, 0.7] {
            assert!((f.deriv1(x) - central(|y| f.eval(y), x, 1e-5)).abs() < 1e-8);
            let d2 = central(|y| f.deriv1(y), x, 1e-5);
            assert!((f.deriv2(x) - d2).abs() < 1e-6 * d2.abs().max(1.0));
            let d3 = central(|y| f.deriv2(y), x, 1e-5);
            assert!((f.deriv3(x) - d3).abs() < 1e-6 * d3.abs().max(1.0));
        }
    }

    #[test]
    fn inverse_round_trips_and_rejects_boundary() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        for &x in &[-0.5, 0.0, 0.2, 0.4, 0.9, 1.5] {
            assert!((f.inverse(f.eval(x)).unwrap() - x).abs() < 1e-12);
        }
        assert!(matches!(f.inverse(0.0), Err(Error::Boundary { .. })));
        assert!(matches!(f.inverse(1.0), Err(Error::Boundary { .. })));
        assert!(f.inverse(f64::NAN).is_err());
    }

    #[test]
    fn symmetric_fixed_points() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        let fp = f.fixed_points();
        assert_eq!(fp.middle, 0.5);
        assert!((fp.low + fp.high - 1.0).abs() < 1e-12);
        assert!((f.eval(fp.low) - fp.low).abs() < 1e-12);
        assert!((f.eval(fp.high) - fp.high).abs() < 1e-12);
        assert_eq!(fp.slopes[1], 2.0);
        assert!(fp.slopes[0] < 1.0 && fp.slopes[2] < 1.0);
    }

    #[test]
    fn low_fixed_point_matches_independent_bisection() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        // plain bisection on (0.001, 0.4), independent of the scan
        let (mut lo, mut hi) = (0.001_f64, 0.4_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = 1.0 / (1.0 + (-8.0 * (mid - 0.5)).exp()) - mid;
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((f.fixed_points().low - lo).abs() < 1e-12);
    }

    #[test]
    fn rejects_monostable_parameters() {
        // gamma/4 < 1: F(x) - x has a single root
        assert!(matches!(GainFunction::new(3.0, 0.5), Err(Error::Inadmissible(_))));
        // far-off threshold: only the low state survives
        assert!(matches!(GainFunction::new(8.0, 0.95), Err(Error::Inadmissible(_))));
        assert!(GainFunction::new(-1.0, 0.5).is_err());
    }
}
