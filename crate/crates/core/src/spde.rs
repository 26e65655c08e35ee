//! The stochastic neural field around a traveling wave and the embedded
//! network that approximates it.
//!
//! The continuum field lives on a fine reference grid of cells on
//! `[-L_ref, L_ref)`; each level `m` is a network on `[-L^m, L^m)` with nodes
//! `k/m`. All levels are driven by one Q-Wiener realization: the continuum
//! sees the fine cell averages, a network sees `Φ^m` of the same cell integrals.

use serde::{Deserialize, Serialize};

use crate::conv::Toeplitz;
use crate::diffusion::{b_hat, wave_nodes};
use crate::error::{Error, Result};
use crate::model::{GainFunction, SynapticKernel, WeightMatrix};
use crate::noise::{CorrelationKernel, NoiseSettings, ReferenceGrid, ReferenceNoise};
use crate::rng::SimRng;
use crate::wave::{WaveProfile, SPEED_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpdeSettings {
    /// Population size scaling the noise and the Ito correction; `inf` switches both off.
    pub population_size: f64,
    /// Noise cutoff level; chosen from `energy_fraction` when absent.
    pub delta: Option<f64>,
    pub energy_fraction: f64,
    pub reference_half_length: usize,
    pub levels: Vec<usize>,
    /// `L^m = base_half_length + log2(m / 4)`.
    pub base_half_length: usize,
    pub dt: f64,
    pub dt_max: f64,
    pub horizon: f64,
    pub output_points: usize,
    pub bump_amplitude: f64,
    pub bump_width: f64,
}

impl Default for SpdeSettings {
    fn default() -> Self {
        Self {
            population_size: 1000.0,
            delta: None,
            energy_fraction: 0.99,
            reference_half_length: 14,
            levels: vec![4, 8, 16, 32],
            base_half_length: 6,
            dt: 0.005,
            dt_max: 0.1,
            horizon: 1.0,
            output_points: 200,
            bump_amplitude: 0.1,
            bump_width: 1.0,
        }
    }
}

impl SpdeSettings {
    pub fn level_half_length(&self, m: usize) -> usize {
        let ratio = (m.max(4) / 4).max(1);
        self.base_half_length + ratio.ilog2() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.population_size > 0.0) {
            return bad("population size must be positive");
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) || self.output_points < 2 {
            return bad("SPDE run needs dt, T > 0 and two output points");
        }
        if self.dt > self.dt_max {
            return Err(Error::Cfl { dt: self.dt, dt_max: self.dt_max });
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return bad("energy fraction must lie in (0, 1]");
        }
        if self.delta.is_some_and(|d| !(d > 0.0)) {
            return bad("cutoff delta must be positive");
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("level ladder must be nonempty and strictly increasing");
        }
        Ok(())
    }

    pub fn noise_scale(&self) -> f64 {
        1.0 / self.population_size.sqrt()
    }
}

/// Largest `δ` such that `{û_x ≥ δ}` retains `fraction` of `∫ û_x²`.
pub fn auto_delta(profile: &WaveProfile, fraction: f64) -> f64 {
    let mut d: Vec<f64> = profile.derivs().iter().map(|v| v.max(0.0)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = d.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    for v in &d {
        acc += v * v;
        if acc >= fraction * total {
            return *v;
        }
    }
    *d.last().unwrap_or(&0.0)
}

/// `α, β, γ` and the cutoff indicator on a set of points at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub indicator: Vec<bool>,
    pub delta: f64,
    pub population_size: f64,
}

impl DispersionCoefficients {
    /// From the drift magnitude `r = c ∂_x u^TW` (or `-b^m`), `F'` and `F''` at each point.
    fn from_parts(r: &[f64], fp: &[f64], fpp: &[f64], indicator: Vec<bool>, delta: f64, n: f64) -> Result<Self> {
        let len = r.len();
        let (mut alpha, mut beta, mut gamma) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for i in 0..len {
            if !indicator[i] {
                continue;
            }
            if !(r[i] > 0.0) {
                return Err(Error::Positivity { min: -r[i], population: i });
            }
            let root = (r[i] * fp[i]).sqrt();
            alpha[i] = (r[i] / fp[i]).sqrt();
            gamma[i] = 0.5 / root;
            beta[i] = gamma[i] * (1.0 - fpp[i] / fp[i] * r[i]);
        }
        Ok(Self { alpha, beta, gamma, indicator, delta, population_size: n })
    }

    /// `L_σ = (sup|β| + sup|γ| ||w||_1 ||F'||_∞) / sqrt(N)`.
    pub fn lipschitz(&self, f: &GainFunction) -> f64 {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        (sup(&self.beta) + sup(&self.gamma) * f.max_slope()) / self.population_size.sqrt()
    }

    /// `(α + β v - γ conv_v) / sqrt(N)` on the support.
    fn combine(&self, v: &[f64], conv_v: &[f64]) -> Vec<f64> {
        let s = 1.0 / self.population_size.sqrt();
        (0..v.len())
            .map(|i| {
                if self.indicator[i] {
                    s * (self.alpha[i] + self.beta[i] * v[i] - self.gamma[i] * conv_v[i])
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn require_positive_speed(profile: &WaveProfile) -> Result<()> {
    if profile.speed() > SPEED_EPS {
        Ok(())
    } else {
        Err(Error::NonPositiveSpeed { speed: profile.speed() })
    }
}

/// The continuum field on the reference grid.
#[derive(Debug)]
pub struct Continuum<'a> {
    profile: &'a WaveProfile,
    f: &'a GainFunction,
    kernel: &'a SynapticKernel,
    grid: ReferenceGrid,
    conv: Toeplitz,
    tail_plus: Vec<f64>,
    tail_minus: Vec<f64>,
    population_size: f64,
    delta: f64,
}

impl<'a> Continuum<'a> {
    pub fn new(
        profile: &'a WaveProfile,
        f: &'a GainFunction,
        kernel: &'a SynapticKernel,
        grid: ReferenceGrid,
        population_size: f64,
        delta: f64,
    ) -> Self {
        let h = grid.h();
        let conv = Toeplitz::from_fn(grid.len(), |d| kernel.mass((d as f64 - 0.5) * h, (d as f64 + 0.5) * h));
        let l = grid.half_length() as f64;
        let centres = grid.centres();
        let tail_plus = centres.iter().map(|x| kernel.cdf(x - l)).collect();
        let tail_minus = centres.iter().map(|x| kernel.tail(x + l)).collect();
        Self { profile, f, kernel, grid, conv, tail_plus, tail_minus, population_size, delta }
    }

    pub fn grid(&self) -> &ReferenceGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &SynapticKernel {
        self.kernel
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn wave(&self, t: f64) -> Vec<f64> {
        self.grid.centres().iter().map(|&x| self.profile.wave_at(t, x)).collect()
    }

    /// `w * g` on the grid with the inputs beyond `±L_ref` held at `left`/`right`.
    fn convolve(&self, g: &[f64], left: f64, right: f64) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        self.conv.apply(g, &mut out);
        for ((o, p), m) in out.iter_mut().zip(&self.tail_plus).zip(&self.tail_minus) {
            *o += p * right + m * left;
        }
        out
    }

    /// `-u + w * F(u)` with the wave supplying the inputs outside the grid.
    pub fn drift_uncorrected(&self, u: &[f64], t: f64) -> Vec<f64> {
        let l = self.grid.half_length() as f64;
        let fu: Vec<f64> = u.iter().map(|&v| self.f.eval(v)).collect();
        let left = self.f.eval(self.profile.wave_at(t, -l));
        let right = self.f.eval(self.profile.wave_at(t, l));
        let mut out = self.convolve(&fu, left, right);
        for (o, v) in out.iter_mut().zip(u) {
            *o -= v;
        }
        out
    }

    /// `-u + w * F(u) + (1/2N) F''/F'^2(u^TW) ∂_t u^TW`.
    pub fn drift(&self, u: &[f64], t: f64) -> Vec<f64> {
        let mut out = self.drift_uncorrected(u, t);
        let scale = 0.5 / self.population_size;
        if scale > 0.0 {
            for (o, x) in out.iter_mut().zip(self.grid.centres()) {
                *o += scale * self.f.ito_factor(self.profile.wave_at(t, x)) * self.profile.wave_dt(t, x);
            }
        }
        out
    }

    pub fn coefficients(&self, t: f64) -> Result<DispersionCoefficients> {
        require_positive_speed(self.profile)?;
        let c = self.profile.speed();
        let centres = self.grid.centres();
        let ux: Vec<f64> = centres.iter().map(|&x| self.profile.wave_dx(t, x)).collect();
        let tw: Vec<f64> = centres.iter().map(|&x| self.profile.wave_at(t, x)).collect();
        let r: Vec<f64> = ux.iter().map(|d| c * d).collect();
        let fp: Vec<f64> = tw.iter().map(|&v| self.f.deriv1(v)).collect();
        let fpp: Vec<f64> = tw.iter().map(|&v| self.f.deriv2(v)).collect();
        let indicator = ux.iter().map(|&d| d >= self.delta).collect();
        DispersionCoefficients::from_parts(&r, &fp, &fpp, indicator, self.delta, self.population_size)
    }

    pub fn dispersion_with(&self, u: &[f64], t: f64, coeffs: &DispersionCoefficients) -> Vec<f64> {
        let tw = self.wave(t);
        let v: Vec<f64> = u.iter().zip(&tw).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = tw.iter().zip(&v).map(|(&w, &vv)| self.f.deriv1(w) * vv).collect();
        let mut conv_v = vec![0.0; g.len()];
        self.conv.apply(&g, &mut conv_v);
        coeffs.combine(&v, &conv_v)
    }

    /// `σ(t, u)` at the cell centres.
    pub fn dispersion(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.dispersion_with(u, t, &self.coefficients(t)?))
    }

    /// Euler–Maruyama step; `z` holds the cell integrals of the noise increment.
    pub fn step(&self, u: &mut [f64], t: f64, dt: f64, z: Option<&[f64]>) -> Result<()> {
        let drift = self.drift(u, t);
        let sigma = match z {
            Some(_) => Some(self.dispersion(u, t)?),
            None => None,
        };
        let inv_h = 1.0 / self.grid.h();
        for i in 0..u.len() {
            u[i] += drift[i] * dt;
            if let (Some(s), Some(z)) = (&sigma, z) {
                u[i] += s[i] * z[i] * inv_h;
            }
        }
        Ok(())
    }

    /// `||u - u^TW_t||` on the whole grid.
    pub fn deviation(&self, u: &[f64], t: f64) -> f64 {
        let tw = self.wave(t);
        (u.iter().zip(&tw).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * self.grid.h()).sqrt()
    }
}

/// The embedded network at density `m`.
#[derive(Debug)]
pub struct NetworkLevel<'a> {
    profile: &'a WaveProfile,
    f: &'a GainFunction,
    weights: WeightMatrix,
    population_size: f64,
    delta: f64,
}

impl<'a> NetworkLevel<'a> {
    pub fn new(
        profile: &'a WaveProfile,
        f: &'a GainFunction,
        kernel: &SynapticKernel,
        m: usize,
        half_length: usize,
        population_size: f64,
        delta: f64,
    ) -> Result<Self> {
        let weights = WeightMatrix::build(kernel, m, half_length)?;
        Ok(Self { profile, f, weights, population_size, delta })
    }

    pub fn density(&self) -> usize {
        self.weights.density()
    }

    pub fn half_length(&self) -> usize {
        self.weights.half_length()
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.populations()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weights.position(i)).collect()
    }

    /// `π^m(u^TW_t)`.
    pub fn wave(&self, t: f64) -> Vec<f64> {
        wave_nodes(self.profile, &self.weights, t)
    }

    /// `b^m(t, u)` without the Ito correction.
    pub fn drift_uncorrected(&self, u: &[f64], t: f64) -> Vec<f64> {
        b_hat(u, self.profile, &self.weights, self.f, t)
    }

    /// `b^m(t, u) + (1/2N) π^m(F''/F'^2(u^TW_t)) b^m(t, π^m(u^TW_t))`.
    pub fn drift(&self, u: &[f64], t: f64) -> Vec<f64> {
        let mut out = self.drift_uncorrected(u, t);
        let scale = 0.5 / self.population_size;
        if scale > 0.0 {
            let tw = self.wave(t);
            let btw = self.drift_uncorrected(&tw, t);
            for k in 0..out.len() {
                out[k] += scale * self.f.ito_factor(tw[k]) * btw[k];
            }
        }
        out
    }

    /// `α^m, β^m, γ^m` at the nodes; the cutoff is sampled at `k/m`.
    pub fn coefficients(&self, t: f64) -> Result<DispersionCoefficients> {
        require_positive_speed(self.profile)?;
        let tw = self.wave(t);
        let r: Vec<f64> = self.drift_uncorrected(&tw, t).iter().map(|b| -b).collect();
        let fp: Vec<f64> = tw.iter().map(|&v| self.f.deriv1(v)).collect();
        let fpp: Vec<f64> = tw.iter().map(|&v| self.f.deriv2(v)).collect();
        let indicator = self.nodes().iter().map(|&x| self.profile.wave_dx(t, x) >= self.delta).collect();
        DispersionCoefficients::from_parts(&r, &fp, &fpp, indicator, self.delta, self.population_size)
    }

    /// `π^m(w * (π^m(F'(u^TW)) v))` for a nodal `v`.
    fn gamma_input(&self, tw: &[f64], v: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = tw.iter().zip(v).map(|(&w, &vv)| self.f.deriv1(w) * vv).collect();
        let mut out = vec![0.0; g.len()];
        self.weights.apply(&g, &mut out);
        out
    }

    pub fn dispersion_with(&self, u: &[f64], t: f64, coeffs: &DispersionCoefficients) -> Vec<f64> {
        let tw = self.wave(t);
        let v: Vec<f64> = u.iter().zip(&tw).map(|(a, b)| a - b).collect();
        coeffs.combine(&v, &self.gamma_input(&tw, &v))
    }

    /// `σ^m(t, u)` at the nodes.
    pub fn dispersion(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.dispersion_with(u, t, &self.coefficients(t)?))
    }

    /// Euler–Maruyama step; `dw` holds the increments of `W^m_k`.
    pub fn step(&self, u: &mut [f64], t: f64, dt: f64, dw: Option<&[f64]>) -> Result<()> {
        let drift = self.drift(u, t);
        let sigma = match dw {
            Some(_) => Some(self.dispersion(u, t)?),
            None => None,
        };
        for k in 0..u.len() {
            u[k] += drift[k] * dt;
            if let (Some(s), Some(dw)) = (&sigma, dw) {
                u[k] += s[k] * dw[k];
            }
        }
        Ok(())
    }
}

/// `||u^m - u||_{L²((-L^m, L^m))}` for nodal `u^m` and reference cell values `u`.
pub fn level_distance(grid: &ReferenceGrid, level: &NetworkLevel<'_>, um: &[f64], u: &[f64]) -> f64 {
    let m = level.density();
    let l = level.half_length();
    let h = grid.h();
    let mut sum = 0.0;
    for (k, &v) in um.iter().enumerate() {
        for i in grid.i_cells(m, l, k) {
            sum += (v - u[i]).powi(2);
        }
    }
    (sum * h).sqrt()
}

/// `||σ^m(t, u 1_{(-L^m, L^m)}) - σ(t, u)||` with `σ^m` evaluated on the
/// reference grid (piecewise-constant coefficients, pointwise `u`).
pub fn condition_ii_at(continuum: &Continuum<'_>, level: &NetworkLevel<'_>, u: &[f64], t: f64) -> Result<f64> {
    let grid = continuum.grid();
    let sigma = continuum.dispersion(u, t)?;
    let coeffs = level.coefficients(t)?;
    let (m, l) = (level.density(), level.half_length());
    let h = grid.h();
    let tw_nodes = level.wave(t);
    let fp_nodes: Vec<f64> = tw_nodes.iter().map(|&v| continuum.f.deriv1(v)).collect();
    let centres = grid.centres();
    // g = π^m(F'(u^TW)) (u - π^m(u^TW)) on (-L^m, L^m), zero elsewhere
    let mut g = vec![0.0; grid.len()];
    let mut owner = vec![usize::MAX; grid.len()];
    for k in 0..level.len() {
        for i in grid.i_cells(m, l, k) {
            g[i] = fp_nodes[k] * (u[i] - tw_nodes[k]);
            owner[i] = k;
        }
    }
    let kernel = continuum.kernel();
    let gamma_input: Vec<f64> = level
        .nodes()
        .iter()
        .map(|&x| {
            g.iter()
                .zip(&centres)
                .filter(|(gi, _)| **gi != 0.0)
                .map(|(gi, &c)| gi * kernel.mass(x - c - 0.5 * h, x - c + 0.5 * h))
                .sum()
        })
        .collect();
    let s = 1.0 / continuum.population_size.sqrt();
    let mut sum = 0.0;
    for i in 0..grid.len() {
        let x = centres[i];
        let sm = match owner[i] {
            usize::MAX => 0.0,
            k if continuum.profile.wave_dx(t, x) >= continuum.delta => {
                s * (coeffs.alpha[k] + coeffs.beta[k] * (u[i] - tw_nodes[k]) - coeffs.gamma[k] * gamma_input[k])
            }
            _ => 0.0,
        };
        sum += (sm - sigma[i]).powi(2);
    }
    Ok((sum * h).sqrt())
}

/// Continuum plus every network level, with the shared reference noise.
#[derive(Debug)]
pub struct CoupledSystem<'a> {
    pub settings: SpdeSettings,
    pub continuum: Continuum<'a>,
    pub levels: Vec<NetworkLevel<'a>>,
    pub noise: ReferenceNoise,
}

/// One coupled replica: distances per level at each output time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub times: Vec<f64>,
    /// `distances[j][i]`: level `j` at output time `i`.
    pub distances: Vec<Vec<f64>>,
    /// `||u_t - u^TW_t||` at each output time.
    pub deviation: Vec<f64>,
    /// Continuum states at the output times when requested.
    pub snapshots: Vec<Vec<f64>>,
}

impl CoupledPath {
    /// `sup_t ||u^m_t - u_t||^p` per level.
    pub fn sup_power(&self, p: f64) -> Vec<f64> {
        self.distances.iter().map(|d| d.iter().fold(0.0f64, |a, b| a.max(*b)).powf(p)).collect()
    }
}

impl<'a> CoupledSystem<'a> {
    pub fn build(
        settings: SpdeSettings,
        noise: &NoiseSettings,
        profile: &'a WaveProfile,
        f: &'a GainFunction,
        kernel: &'a SynapticKernel,
    ) -> Result<Self> {
        settings.validate()?;
        require_positive_speed(profile)?;
        let grid = ReferenceGrid::new(noise.cells_per_unit, settings.reference_half_length)?;
        for &m in &settings.levels {
            grid.check_level(m, settings.level_half_length(m))?;
        }
        let delta = settings.delta.unwrap_or_else(|| auto_delta(profile, settings.energy_fraction));
        let n = settings.population_size;
        let continuum = Continuum::new(profile, f, kernel, grid, n, delta);
        let levels = settings
            .levels
            .iter()
            .map(|&m| NetworkLevel::new(profile, f, kernel, m, settings.level_half_length(m), n, delta))
            .collect::<Result<Vec<_>>>()?;
        let noise = ReferenceNoise::build(CorrelationKernel::boxcar(noise.epsilon)?, grid)?;
        Ok(Self { settings, continuum, levels, noise })
    }

    pub fn delta(&self) -> f64 {
        self.continuum.delta
    }

    /// `u_0 = u^TW_0 + A exp(-x² / (2 s²))`.
    pub fn initial(&self, x: f64) -> f64 {
        let s = &self.settings;
        self.continuum.profile.wave_at(0.0, x) + s.bump_amplitude * (-0.5 * (x / s.bump_width).powi(2)).exp()
    }

    pub fn initial_continuum(&self) -> Vec<f64> {
        self.continuum.grid.centres().iter().map(|&x| self.initial(x)).collect()
    }

    /// `π^m(u_0)`.
    pub fn initial_level(&self, j: usize) -> Vec<f64> {
        self.levels[j].nodes().iter().map(|&x| self.initial(x)).collect()
    }

    /// March every level on one noise realization (or none when `noisy` is false).
    pub fn simulate(&self, rng: &mut SimRng, noisy: bool, keep_snapshots: bool) -> Result<CoupledPath> {
        let s = &self.settings;
        let grid = self.continuum.grid;
        let times = crate::jumpchain::output_grid(s.horizon, s.output_points);
        let substeps = ((times[1] - times[0]) / s.dt).ceil().max(1.0) as usize;
        let h = (times[1] - times[0]) / substeps as f64;
        let noisy = noisy && s.population_size.is_finite();

        let mut u = self.initial_continuum();
        let mut um: Vec<Vec<f64>> = (0..self.levels.len()).map(|j| self.initial_level(j)).collect();
        let mut z = vec![0.0; grid.len()];
        let mut dw: Vec<Vec<f64>> = self.levels.iter().map(|l| vec![0.0; l.len()]).collect();

        let mut distances = vec![Vec::with_capacity(times.len()); self.levels.len()];
        let mut deviation = Vec::with_capacity(times.len());
        let mut snapshots = vec![];
        let mut record = |u: &[f64], um: &[Vec<f64>], t: f64| {
            for (j, level) in self.levels.iter().enumerate() {
                distances[j].push(level_distance(&grid, level, &um[j], u));
            }
            deviation.push(self.continuum.deviation(u, t));
            if keep_snapshots {
                snapshots.push(u.to_vec());
            }
        };
        record(&u, &um, 0.0);
        let mut t = 0.0;
        for i in 1..times.len() {
            for _ in 0..substeps {
                if noisy {
                    self.noise.sample(h, rng, &mut z);
                }
                self.continuum.step(&mut u, t, h, noisy.then_some(&z[..]))?;
                for (j, level) in self.levels.iter().enumerate() {
                    if noisy {
                        grid.project_increments(&z, level.density(), level.half_length(), &mut dw[j])?;
                    }
                    level.step(&mut um[j], t, h, noisy.then_some(&dw[j][..]))?;
                }
                t += h;
            }
            t = times[i];
            if u.iter().chain(um.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::StateExit(format!("non-finite field at t = {t}")));
            }
            record(&u, &um, t);
        }
        Ok(CoupledPath { times, distances, deviation, snapshots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::wave::{solve_profile, WaveSettings};
    use std::sync::OnceLock;

    fn model() -> &'static (GainFunction, SynapticKernel, WaveProfile) {
        static CELL: OnceLock<(GainFunction, SynapticKernel, WaveProfile)> = OnceLock::new();
        CELL.get_or_init(|| {
            let f = GainFunction::new(8.0, 0.6).unwrap();
            let w = SynapticKernel::exponential(1.0).unwrap();
            let p = solve_profile(&f, &w, &WaveSettings::default()).unwrap();
            (f, w, p)
        })
    }

    fn small_settings() -> SpdeSettings {
        SpdeSettings { reference_half_length: 12, levels: vec![4, 8, 16], ..Default::default() }
    }

    fn coarse_noise() -> NoiseSettings {
        NoiseSettings { cells_per_unit: 64, ..Default::default() }
    }

    #[test]
    fn wave_is_a_stationary_point_of_the_moving_frame() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(64, 12).unwrap();
        let c = Continuum::new(p, f, w, grid, f64::INFINITY, 0.01);
        let tw = c.wave(0.3);
        let d = c.drift(&tw, 0.3);
        let err = grid
            .centres()
            .iter()
            .zip(&d)
            .map(|(&x, v)| (v - p.wave_dt(0.3, x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "err {err}");
    }

    #[test]
    fn ito_correction_scales_inversely_with_n() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(16, 8).unwrap();
        let base = Continuum::new(p, f, w, grid, f64::INFINITY, 0.01);
        let tw = base.wave(0.0);
        let d0 = base.drift(&tw, 0.0);
        let d1 = Continuum::new(p, f, w, grid, 100.0, 0.01).drift(&tw, 0.0);
        let d2 = Continuum::new(p, f, w, grid, 200.0, 0.01).drift(&tw, 0.0);
        for i in 0..tw.len() {
            let (a, b) = (d1[i] - d0[i], d2[i] - d0[i]);
            assert!((a - 2.0 * b).abs() <= 1e-14 + 1e-12 * a.abs());
        }
    }

    #[test]
    fn constant_state_has_zero_drift_away_from_the_edges() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(32, 10).unwrap();
        let c = Continuum::new(p, f, w, grid, f64::INFINITY, 0.01);
        let a = f.fixed_points().high;
        let d = c.drift_uncorrected(&vec![a; grid.len()], 0.0);
        // only the tails, fed by the wave at ±L, see anything but a2
        for (x, v) in grid.centres().iter().zip(&d) {
            let left = w.tail(x + 10.0) * (f.eval(p.wave_at(0.0, -10.0)) - a);
            let right = w.cdf(x - 10.0) * (f.eval(p.wave_at(0.0, 10.0)) - a);
            assert!((v - left - right).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn alpha_identity_and_wave_dispersion() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(32, 10).unwrap();
        let delta = auto_delta(p, 0.99);
        let c = Continuum::new(p, f, w, grid, 100.0, delta);
        let co = c.coefficients(0.5).unwrap();
        let centres = grid.centres();
        let mut support = 0;
        for i in 0..grid.len() {
            if co.indicator[i] {
                support += 1;
                let x = centres[i];
                let lhs = co.alpha[i].powi(2) * f.deriv1(p.wave_at(0.5, x));
                let rhs = p.speed() * p.wave_dx(0.5, x);
                assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1.0));
            }
        }
        assert!(support > 0 && support < grid.len());
        let sigma = c.dispersion(&c.wave(0.5), 0.5).unwrap();
        for i in 0..grid.len() {
            assert!((sigma[i] - co.alpha[i] / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn support_translates_with_the_wave() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(64, 10).unwrap();
        let delta = auto_delta(p, 0.99);
        let c = Continuum::new(p, f, w, grid, 100.0, delta);
        let edges = |t: f64| {
            let ind = c.coefficients(t).unwrap().indicator;
            let cs = grid.centres();
            let first = cs[ind.iter().position(|b| *b).unwrap()];
            let last = cs[ind.iter().rposition(|b| *b).unwrap()];
            (first, last)
        };
        let (a0, b0) = edges(0.0);
        let (a1, b1) = edges(1.0);
        let shift = p.speed();
        assert!((a1 - a0 - shift).abs() <= grid.h() + 1e-12);
        assert!((b1 - b0 - shift).abs() <= grid.h() + 1e-12);
    }

    #[test]
    fn dispersion_lipschitz_certificate() {
        let (f, w, p) = model();
        let grid = ReferenceGrid::new(32, 10).unwrap();
        let c = Continuum::new(p, f, w, grid, 100.0, auto_delta(p, 0.99));
        let co = c.coefficients(0.2).unwrap();
        let lip = co.lipschitz(f);
        let tw = c.wave(0.2);
        let mut r = rng::stream(3, 0);
        let h = grid.h();
        for _ in 0..100 {
            let u1: Vec<f64> = tw.iter().map(|v| v + 0.1 * rng::normal(&mut r)).collect();
            let u2: Vec<f64> = tw.iter().map(|v| v + 0.1 * rng::normal(&mut r)).collect();
            let (s1, s2) = (c.dispersion_with(&u1, 0.2, &co), c.dispersion_with(&u2, 0.2, &co));
            let ds = (s1.iter().zip(&s2).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * h).sqrt();
            let du = (u1.iter().zip(&u2).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * h).sqrt();
            assert!(ds <= lip * du * (1.0 + 1e-12));
        }
    }

    #[test]
    fn standing_wave_rejected() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let p = solve_profile(&f, &w, &WaveSettings { h: 0.1, ..Default::default() }).unwrap();
        let grid = ReferenceGrid::new(16, 8).unwrap();
        let c = Continuum::new(&p, &f, &w, grid, 100.0, 0.01);
        assert!(matches!(c.coefficients(0.0), Err(Error::NonPositiveSpeed { .. })));
    }

    #[test]
    fn network_drift_approaches_continuum_drift() {
        let (f, w, p) = model();
        let u = |x: f64| p.wave_at(0.0, x) + 0.1 * (-0.5 * x * x).exp();
        let grid = ReferenceGrid::new(256, 12).unwrap();
        let c = Continuum::new(p, f, w, grid, f64::INFINITY, 0.01);
        let cont = c.drift_uncorrected(&grid.centres().iter().map(|&x| u(x)).collect::<Vec<_>>(), 0.0);
        let mut errs = vec![];
        for m in [4usize, 8, 16, 32] {
            let level = NetworkLevel::new(p, f, w, m, 8, f64::INFINITY, 0.01).unwrap();
            let nodes = level.nodes();
            let um: Vec<f64> = nodes.iter().map(|&x| u(x)).collect();
            let bm = level.drift_uncorrected(&um, 0.0);
            let r = 256 / m;
            // continuum drift at k/m: average of the two fine cells adjacent to the node
            let off = (12 - 8) * 256;
            let err = (0..level.len())
                .map(|k| {
                    let i = off + k * r;
                    (bm[k] - 0.5 * (cont[i - 1] + cont[i])).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for e in errs.windows(2) {
            let ratio = e[0] / e[1];
            assert!((1.6..2.5).contains(&ratio), "errors {errs:?}");
        }
    }

    #[test]
    fn network_positivity_on_the_wave() {
        let (f, w, p) = model();
        let s = SpdeSettings::default();
        for &m in &s.levels {
            let level = NetworkLevel::new(p, f, w, m, s.level_half_length(m), 100.0, auto_delta(p, 0.99)).unwrap();
            for t in [0.0, 0.5, 1.0] {
                let b = level.drift_uncorrected(&level.wave(t), t);
                assert!(b.iter().all(|v| -v > 0.0), "m={m} t={t}");
            }
        }
    }

    #[test]
    fn deterministic_run_tracks_the_wave() {
        let (f, w, p) = model();
        let s = SpdeSettings { population_size: f64::INFINITY, bump_amplitude: 0.0, output_points: 11, ..small_settings() };
        let sys = CoupledSystem::build(s, &coarse_noise(), p, f, w).unwrap();
        let path = sys.simulate(&mut rng::stream(1, 0), true, false).unwrap();
        let dev = *path.deviation.last().unwrap();
        assert!(dev < 1e-2, "deviation {dev}");
    }

    #[test]
    fn coupled_runs_are_reproducible_and_converge_without_noise() {
        let (f, w, p) = model();
        let s = SpdeSettings { output_points: 21, horizon: 0.5, ..small_settings() };
        let sys = CoupledSystem::build(s, &coarse_noise(), p, f, w).unwrap();
        let a = sys.simulate(&mut rng::stream(9, 2), true, false).unwrap();
        let b = sys.simulate(&mut rng::stream(9, 2), true, false).unwrap();
        assert_eq!(a, b);
        let quiet = sys.simulate(&mut rng::stream(9, 2), false, false).unwrap();
        let e = quiet.sup_power(2.0);
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn cfl_guard() {
        let (f, w, p) = model();
        let s = SpdeSettings { dt: 0.5, ..small_settings() };
        assert!(matches!(CoupledSystem::build(s, &coarse_noise(), p, f, w), Err(Error::Cfl { .. })));
    }
}
