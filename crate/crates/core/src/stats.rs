//! Sample statistics, log-log slope fits and the Kolmogorov-Smirnov normality test.

use statrs::function::erf::erfc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl Summary {
    /// Two-pass mean and unbiased variance in input order.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { count: 0, mean: f64::NAN, variance: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { count: n, mean, variance, stderr: (variance / n as f64).sqrt() }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Sample variance with its standard error, estimated from the fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub stderr: f64,
}

pub fn variance_estimate(xs: &[f64]) -> VarianceEstimate {
    let s = Summary::of(xs);
    let n = xs.len() as f64;
    let m4 = xs.iter().map(|x| (x - s.mean).powi(4)).sum::<f64>() / n;
    let var_of_var = (m4 - s.variance * s.variance * (n - 3.0) / (n - 1.0)) / n;
    VarianceEstimate { variance: s.variance, stderr: var_of_var.max(0.0).sqrt() }
}

/// Sample covariance with the standard error of the mean of centered products.
pub fn covariance(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let ma = Summary::of(a).mean;
    let mb = Summary::of(b).mean;
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let s = Summary::of(&products);
    let n = a.len() as f64;
    (s.mean * n / (n - 1.0), s.stderr)
}

/// Least-squares fit of `log y = a + slope log x` with a jackknife error bar.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn ls_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> LogLogFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points for a slope");
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = ls_line(&lx, &ly);
    let n = lx.len();
    let slope_stderr = if n > 2 {
        let loo: Vec<f64> = (0..n)
            .map(|skip| {
                let xs: Vec<f64> = lx.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                let ys: Vec<f64> = ly.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                ls_line(&xs, &ys).0
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        ((n - 1) as f64 / n as f64 * loo.iter().map(|s| (s - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        0.0
    };
    LogLogFit {
        slope,
        intercept,
        slope_stderr,
        ci_low: slope - 2.0 * slope_stderr,
        ci_high: slope + 2.0 * slope_stderr,
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a fully specified CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

/// KS normality test after standardizing by the sample mean and deviation.
pub fn ks_normality(samples: &[f64]) -> KsResult {
    let s = Summary::of(samples);
    let sd = s.std_dev();
    ks_test(samples, |x| normal_cdf((x - s.mean) / sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn summary_basics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law_slope() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        let fit = loglog_fit(&x, &y);
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // standard table values of the limiting distribution
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 5e-4);
    }

    #[test]
    fn ks_accepts_gaussian_and_rejects_uniform() {
        let mut r = rng::stream(11, 0);
        let g: Vec<f64> = (0..5000).map(|_| rng::normal(&mut r)).collect();
        assert!(ks_normality(&g).p_value > 0.01);
        let u: Vec<f64> = (0..5000).map(|_| rng::uniform(&mut r)).collect();
        assert!(ks_normality(&u).p_value < 1e-6);
    }

    #[test]
    fn variance_stderr_is_gaussian_rate() {
        let mut r = rng::stream(3, 1);
        let g: Vec<f64> = (0..20_000).map(|_| rng::normal(&mut r)).collect();
        let v = variance_estimate(&g);
        assert!((v.stderr - (2.0f64 / 20_000.0).sqrt()).abs() < 2e-3);
    }
}
