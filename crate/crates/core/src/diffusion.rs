//! Diffusion approximations of the jump process.
//!
//! * activity SDE: generator drift plus `sqrt(F'(F^{-1}(a)) |b| / N)` noise;
//! * voltage SDE: the Itô transform `u = F^{-1}(a)` of the activity SDE;
//! * linearized system around a traveling wave on a spatial network, whose
//!   noise coefficient is the first-order Taylor expansion of the voltage one.
//!
//! All schemes are explicit Euler-Maruyama steps taking standard normals.

use crate::error::{Error, Result};
use crate::jumpchain::output_grid;
use crate::model::{GainFunction, Network, WeightMatrix};
use crate::rng::{self, SimRng};
use crate::wave::{WaveProfile, SPEED_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    /// Set when the activity scheme had to pull a state back inside `[1/N, 1 - 1/N]`.
    pub flagged: bool,
}

/// Drift and noise amplitude of the activity SDE.
pub fn activity_coefficients(a: &[f64], net: &Network, f: &GainFunction, n: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut input = vec![0.0; a.len()];
    net.input(a, &mut input);
    let mut drift = Vec::with_capacity(a.len());
    let mut disp = Vec::with_capacity(a.len());
    for (k, &v) in a.iter().enumerate() {
        let u = f.inverse(v).map_err(|_| Error::Boundary { population: k, value: v })?;
        let s = f.deriv1(u);
        let b = -u + input[k];
        drift.push(s * b);
        disp.push((s * b.abs() / n).sqrt());
    }
    Ok((drift, disp))
}

/// One step; returns whether any coordinate had to be clamped.
pub fn activity_sde_step(a: &mut [f64], net: &Network, f: &GainFunction, n: f64, dt: f64, xi: &[f64]) -> Result<bool> {
    let (drift, disp) = activity_coefficients(a, net, f, n)?;
    let sq = dt.sqrt();
    let (lo, hi) = (1.0 / n, 1.0 - 1.0 / n);
    let mut clamped = false;
    for k in 0..a.len() {
        let next = a[k] + drift[k] * dt + disp[k] * sq * xi[k];
        if !(lo..=hi).contains(&next) {
            clamped = true;
        }
        a[k] = next.clamp(lo, hi);
    }
    Ok(clamped)
}

/// Drift (with the `-(1/2N) F''/F'^2 |b|` correction) and noise amplitude
/// `sqrt(|b| / F') / sqrt(N)` of the voltage SDE, `b_k = -u_k + sum_j w_kj F(u_j)`.
pub fn voltage_coefficients(u: &[f64], net: &Network, f: &GainFunction, n: f64) -> (Vec<f64>, Vec<f64>) {
    let fu: Vec<f64> = u.iter().map(|&v| f.eval(v)).collect();
    let mut input = vec![0.0; u.len()];
    net.input(&fu, &mut input);
    let mut drift = Vec::with_capacity(u.len());
    let mut disp = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let b = -u[k] + input[k];
        drift.push(b - 0.5 / n * f.ito_factor(u[k]) * b.abs());
        disp.push((b.abs() / f.deriv1(u[k]) / n).sqrt());
    }
    (drift, disp)
}

/// The Itô correction term alone.
pub fn ito_correction(u: &[f64], net: &Network, f: &GainFunction, n: f64) -> Vec<f64> {
    let fu: Vec<f64> = u.iter().map(|&v| f.eval(v)).collect();
    let mut input = vec![0.0; u.len()];
    net.input(&fu, &mut input);
    (0..u.len()).map(|k| -0.5 / n * f.ito_factor(u[k]) * (-u[k] + input[k]).abs()).collect()
}

pub fn voltage_sde_step(u: &mut [f64], net: &Network, f: &GainFunction, n: f64, dt: f64, xi: &[f64]) {
    let (drift, disp) = voltage_coefficients(u, net, f, n);
    let sq = dt.sqrt();
    for k in 0..u.len() {
        u[k] += drift[k] * dt + disp[k] * sq * xi[k];
    }
}

fn march(
    x0: &[f64],
    horizon: f64,
    dt: f64,
    output_points: usize,
    rng: &mut SimRng,
    mut step: impl FnMut(&mut [f64], f64, &[f64]) -> Result<bool>,
) -> Result<SdePath> {
    if !(dt > 0.0 && horizon > 0.0) || output_points < 2 {
        return Err(Error::InvalidParameter("SDE integration needs dt, T > 0 and two output points".into()));
    }
    let times = output_grid(horizon, output_points);
    let interval = times[1] - times[0];
    let substeps = (interval / dt).ceil().max(1.0) as usize;
    let h = interval / substeps as f64;
    let mut x = x0.to_vec();
    let mut xi = vec![0.0; x.len()];
    let mut states = vec![x.clone()];
    let mut flagged = false;
    for _ in 1..output_points {
        for _ in 0..substeps {
            rng::fill_normal(rng, &mut xi);
            flagged |= step(&mut x, h, &xi)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::StateExit("SDE state is not finite".into()));
        }
        states.push(x.clone());
    }
    Ok(SdePath { times, states, dt: h, flagged })
}

pub fn simulate_activity(
    a0: &[f64],
    net: &Network,
    f: &GainFunction,
    n: f64,
    horizon: f64,
    dt: f64,
    output_points: usize,
    rng: &mut SimRng,
) -> Result<SdePath> {
    march(a0, horizon, dt, output_points, rng, |a, h, xi| activity_sde_step(a, net, f, n, h, xi))
}

pub fn simulate_voltage(
    u0: &[f64],
    net: &Network,
    f: &GainFunction,
    n: f64,
    horizon: f64,
    dt: f64,
    output_points: usize,
    rng: &mut SimRng,
) -> Result<SdePath> {
    march(u0, horizon, dt, output_points, rng, |u, h, xi| {
        voltage_sde_step(u, net, f, n, h, xi);
        Ok(false)
    })
}

/// `b_hat^m_k(t, u)` with the boundary populations driven by the wave at `±L`.
pub fn b_hat(u: &[f64], profile: &WaveProfile, weights: &WeightMatrix, f: &GainFunction, t: f64) -> Vec<f64> {
    let l = weights.half_length() as f64;
    let fu: Vec<f64> = u.iter().map(|&v| f.eval(v)).collect();
    let mut out = vec![0.0; u.len()];
    let left = f.eval(profile.wave_at(t, -l));
    let right = f.eval(profile.wave_at(t, l));
    weights.input_with_boundary(&fu, left, right, &mut out);
    for (o, v) in out.iter_mut().zip(u) {
        *o -= v;
    }
    out
}

/// Wave sampled at the network nodes `k/m`.
pub fn wave_nodes(profile: &WaveProfile, weights: &WeightMatrix, t: f64) -> Vec<f64> {
    (0..weights.populations()).map(|i| profile.wave_at(t, weights.position(i))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    /// `-b_hat_k(t, u^TW_t)` per population.
    pub values: Vec<f64>,
    /// `c u_hat_x(k/m - ct) - (F(u^TW_t(-L)) - F(a1))` per population.
    pub lower_bounds: Vec<f64>,
    pub min: f64,
    pub argmin: usize,
    /// Largest amount by which a value falls below its lower bound (<= 0 when the bound holds).
    pub worst_violation: f64,
}

/// Evaluates `-b_hat(t, u^TW_t)` and its lower bound; rejects `c <= 0` and a
/// nonpositive minimum.
pub fn positivity_check(profile: &WaveProfile, weights: &WeightMatrix, f: &GainFunction, t: f64) -> Result<PositivityReport> {
    let c = profile.speed();
    if !(c > SPEED_EPS) {
        return Err(Error::NonPositiveSpeed { speed: c });
    }
    let nodes = wave_nodes(profile, weights, t);
    let values: Vec<f64> = b_hat(&nodes, profile, weights, f, t).iter().map(|b| -b).collect();
    let l = weights.half_length() as f64;
    let tail = f.eval(profile.wave_at(t, -l)) - f.eval(profile.low());
    let lower_bounds: Vec<f64> =
        (0..nodes.len()).map(|i| c * profile.wave_dx(t, weights.position(i)) - tail).collect();
    let (argmin, min) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let worst_violation = lower_bounds.iter().zip(&values).map(|(b, v)| b - v).fold(f64::NEG_INFINITY, f64::max);
    if !(min > 0.0) {
        return Err(Error::Positivity { min, population: argmin });
    }
    Ok(PositivityReport { values, lower_bounds, min, argmin, worst_violation })
}

/// Drift and noise amplitude of the wave-linearized system at state `u`.
pub fn linearized_coefficients(
    u: &[f64],
    profile: &WaveProfile,
    weights: &WeightMatrix,
    f: &GainFunction,
    n: f64,
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let tw = wave_nodes(profile, weights, t);
    let b_u = b_hat(u, profile, weights, f, t);
    let b_tw = b_hat(&tw, profile, weights, f, t);
    let v: Vec<f64> = u.iter().zip(&tw).map(|(a, b)| a - b).collect();
    let fpv: Vec<f64> = tw.iter().zip(&v).map(|(&w, &vv)| f.deriv1(w) * vv).collect();
    let mut wfv = vec![0.0; u.len()];
    weights.apply(&fpv, &mut wfv);
    let sqn = n.sqrt();
    let mut drift = Vec::with_capacity(u.len());
    let mut disp = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let (fp, fpp) = (f.deriv1(tw[k]), f.deriv2(tw[k]));
        drift.push(b_u[k] + 0.5 / n * f.ito_factor(tw[k]) * b_tw[k]);
        let lead = (-b_tw[k] / fp).sqrt();
        let corr = (fpp / fp * b_tw[k] * v[k] + v[k] - wfv[k]) / (2.0 * (-b_tw[k] * fp).sqrt());
        disp.push((lead + corr) / sqn);
    }
    (drift, disp)
}

/// Full (unlinearized) noise amplitude `sqrt(|b_hat(t, u)| / F'(u_k)) / sqrt(N)`.
pub fn full_dispersion(u: &[f64], profile: &WaveProfile, weights: &WeightMatrix, f: &GainFunction, n: f64, t: f64) -> Vec<f64> {
    b_hat(u, profile, weights, f, t)
        .iter()
        .zip(u)
        .map(|(b, &v)| (b.abs() / f.deriv1(v) / n).sqrt())
        .collect()
}

pub fn linearized_step(
    u: &mut [f64],
    profile: &WaveProfile,
    weights: &WeightMatrix,
    f: &GainFunction,
    n: f64,
    t: f64,
    dt: f64,
    xi: &[f64],
) {
    let (drift, disp) = linearized_coefficients(u, profile, weights, f, n, t);
    let sq = dt.sqrt();
    for k in 0..u.len() {
        u[k] += drift[k] * dt + disp[k] * sq * xi[k];
    }
}

/// Linearized network started on the wave; fails the positivity gate first if needed.
#[allow(clippy::too_many_arguments)]
pub fn simulate_linearized(
    profile: &WaveProfile,
    weights: &WeightMatrix,
    f: &GainFunction,
    n: f64,
    horizon: f64,
    dt: f64,
    output_points: usize,
    rng: &mut SimRng,
) -> Result<SdePath> {
    positivity_check(profile, weights, f, 0.0)?;
    positivity_check(profile, weights, f, horizon)?;
    let u0 = wave_nodes(profile, weights, 0.0);
    let mut t = 0.0;
    march(&u0, horizon, dt, output_points, rng, |u, h, xi| {
        linearized_step(u, profile, weights, f, n, t, h, xi);
        t += h;
        Ok(false)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SynapticKernel;
    use crate::stats;
    use crate::wave::{solve_profile, WaveSettings};

    fn scalar() -> (GainFunction, Network) {
        (GainFunction::new(8.0, 0.5).unwrap(), Network::from_rows(vec![vec![1.0]]).unwrap())
    }

    #[test]
    fn fixed_point_steps_are_inert() {
        let (f, net) = scalar();
        let a = f.fixed_points().middle;
        let mut x = [a];
        activity_sde_step(&mut x, &net, &f, 100.0, 0.01, &[1.3]).unwrap();
        assert!((x[0] - a).abs() < 1e-15);
        let mut u = [a];
        voltage_sde_step(&mut u, &net, &f, 100.0, 0.01, &[-0.7]);
        assert!((u[0] - a).abs() < 1e-15);
    }

    #[test]
    fn one_step_variance() {
        let (f, net) = scalar();
        let (n, dt) = (100.0, 1e-3);
        let x0 = [0.3];
        let (_, disp) = activity_coefficients(&x0, &net, &f, n).unwrap();
        let mut r = rng::stream(2, 0);
        let incs: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut x = x0;
                activity_sde_step(&mut x, &net, &f, n, dt, &[rng::normal(&mut r)]).unwrap();
                x[0] - x0[0]
            })
            .collect();
        let v = stats::Summary::of(&incs).variance;
        let target = dt * disp[0] * disp[0];
        assert!((v / target - 1.0).abs() < 0.02, "{v} vs {target}");
    }

    #[test]
    fn correction_scales_as_inverse_n() {
        let (f, net) = scalar();
        let ns = [1e2, 1e3, 1e4];
        let c: Vec<f64> = ns.iter().map(|&n| ito_correction(&[0.3], &net, &f, n)[0].abs()).collect();
        let fit = stats::loglog_fit(&ns, &c);
        assert!((fit.slope + 1.0).abs() < 0.05);
    }

    fn forward_wave() -> (GainFunction, SynapticKernel, WaveProfile) {
        let f = GainFunction::new(8.0, 0.6).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let p = solve_profile(&f, &w, &WaveSettings { h: 0.1, ..Default::default() }).unwrap();
        (f, w, p)
    }

    #[test]
    fn positivity_gate_and_bound() {
        let (f, w, p) = forward_wave();
        let mut mins = vec![];
        for l in [5, 10, 20] {
            let wm = WeightMatrix::build(&w, 4, l).unwrap();
            let r = positivity_check(&p, &wm, &f, 0.0).unwrap();
            assert!(r.worst_violation <= 1e-9, "L={l}: {}", r.worst_violation);
            mins.push(r.min);
        }
        assert!(mins.windows(2).all(|m| m[1] >= m[0] - 1e-15) || mins[2] > 0.0);

        let sym = GainFunction::new(8.0, 0.5).unwrap();
        let ps = solve_profile(&sym, &w, &WaveSettings { h: 0.1, ..Default::default() }).unwrap();
        let wm = WeightMatrix::build(&w, 4, 10).unwrap();
        assert!(positivity_check(&ps, &wm, &sym, 0.0).is_err());
    }

    #[test]
    fn linearized_coefficients_on_the_wave() {
        let (f, w, p) = forward_wave();
        let wm = WeightMatrix::build(&w, 2, 10).unwrap();
        let n = 1000.0;
        let tw = wave_nodes(&p, &wm, 0.3);
        let (drift, disp) = linearized_coefficients(&tw, &p, &wm, &f, n, 0.3);
        let b = b_hat(&tw, &p, &wm, &f, 0.3);
        for k in 0..tw.len() {
            let lead = (-b[k] / f.deriv1(tw[k])).sqrt() / n.sqrt();
            assert!((disp[k] - lead).abs() <= 1e-15 * lead.max(1.0));
            let expected = b[k] * (1.0 + 0.5 / n * f.deriv2(tw[k]) / f.deriv1(tw[k]).powi(2));
            assert!((drift[k] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn linearization_error_is_quadratic() {
        let (f, w, p) = forward_wave();
        let wm = WeightMatrix::build(&w, 2, 10).unwrap();
        let n = 1.0;
        let tw = wave_nodes(&p, &wm, 0.0);
        // the expansion of sqrt(-b) is only uniform where -b is bounded away from 0
        let front: Vec<bool> = b_hat(&tw, &p, &wm, &f, 0.0).iter().map(|b| -b > 1e-2).collect();
        let dir: Vec<f64> = (0..tw.len()).map(|i| ((i as f64) * 0.7).sin()).collect();
        let eps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let errs: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let u: Vec<f64> = tw.iter().zip(&dir).map(|(a, d)| a + e * d).collect();
                let (_, lin) = linearized_coefficients(&u, &p, &wm, &f, n, 0.0);
                let full = full_dispersion(&u, &p, &wm, &f, n, 0.0);
                (0..u.len()).filter(|&k| front[k]).map(|k| (lin[k] - full[k]).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        let fit = stats::loglog_fit(&eps, &errs);
        assert!((fit.slope - 2.0).abs() < 0.2, "slope {}", fit.slope);
    }
}
