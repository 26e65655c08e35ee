//! Traveling wave profile and speed of the deterministic neural field.
//!
//! Solves `-c u' = -u + w * F(u)` on a uniform grid over `[-L_w, L_w]` with
//! Dirichlet ends `a1`, `a2`, a central difference for `u'`, exact
//! cell-averaged kernel weights around each node, and the phase condition
//! `u(0) = a`. The speed is signed: for a fixed gain there is exactly one
//! increasing front from `a1` to `a2`, and its direction of travel is part of
//! the answer.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conv::Toeplitz;
use crate::error::{Error, Result};
use crate::model::{GainFunction, SynapticKernel};
use crate::table::Table;

/// Speeds at or below this magnitude count as a standing front.
pub const SPEED_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSettings {
    pub half_length: f64,
    pub h: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for WaveSettings {
    fn default() -> Self {
        Self { half_length: 30.0, h: 0.05, tol: 1e-8, max_iter: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    x_min: f64,
    h: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
    speed: f64,
    residual_norm: f64,
    low: f64,
    high: f64,
}

struct Discretization<'a> {
    f: &'a GainFunction,
    n: usize,
    mid: usize,
    h: f64,
    weights: Toeplitz,
    far: Vec<f64>,
    free: Vec<usize>,
    col_of: Vec<Option<usize>>,
}

impl<'a> Discretization<'a> {
    fn new(f: &'a GainFunction, w: &SynapticKernel, s: &WaveSettings) -> Result<Self> {
        let cells = 2.0 * s.half_length / s.h;
        let n = cells.round() as usize;
        if !(s.h > 0.0 && s.half_length > 0.0) || (cells - n as f64).abs() > 1e-9 * cells || n % 2 != 0 || n < 8 {
            return Err(Error::InvalidParameter(format!(
                "wave grid needs L_w/h to be a positive integer, got L_w={}, h={}",
                s.half_length, s.h
            )));
        }
        let h = s.h;
        let weights = Toeplitz::from_fn(n + 1, |d| {
            let x = d as f64 * h;
            w.mass(x - 0.5 * h, x + 0.5 * h)
        });
        let fp = f.fixed_points();
        let edge = s.half_length + 0.5 * h;
        let far = (0..=n)
            .map(|i| {
                let x = -s.half_length + i as f64 * h;
                w.tail(x + edge) * f.eval(fp.low) + w.tail(edge - x) * f.eval(fp.high)
            })
            .collect();
        let mid = n / 2;
        let free: Vec<usize> = (1..n).filter(|&i| i != mid).collect();
        let mut col_of = vec![None; n + 1];
        for (c, &i) in free.iter().enumerate() {
            col_of[i] = Some(c);
        }
        Ok(Self { f, n, mid, h, weights, far, free, col_of })
    }

    /// Residual at interior nodes `1..n`.
    fn residual(&self, u: &[f64], c: f64) -> Vec<f64> {
        let fu: Vec<f64> = u.iter().map(|&v| self.f.eval(v)).collect();
        let conv = self.weights.apply_vec(&fu);
        (1..self.n)
            .map(|i| -c * (u[i + 1] - u[i - 1]) / (2.0 * self.h) + u[i] - conv[i] - self.far[i])
            .collect()
    }

    fn jacobian(&self, u: &[f64], c: f64) -> DMatrix<f64> {
        let dim = self.n - 1;
        let fp: Vec<f64> = u.iter().map(|&v| self.f.deriv1(v)).collect();
        let mut jac = DMatrix::zeros(dim, dim);
        for i in 1..self.n {
            let r = i - 1;
            for &j in &self.free {
                jac[(r, self.col_of[j].unwrap())] = -self.weights.get(i, j) * fp[j];
            }
            if let Some(col) = self.col_of[i] {
                jac[(r, col)] += 1.0;
            }
            if let Some(col) = self.col_of[i + 1] {
                jac[(r, col)] -= c / (2.0 * self.h);
            }
            if let Some(col) = self.col_of[i - 1] {
                jac[(r, col)] += c / (2.0 * self.h);
            }
            jac[(r, dim - 1)] = -(u[i + 1] - u[i - 1]) / (2.0 * self.h);
        }
        jac
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn newton(d: &Discretization, mut u: Vec<f64>, mut c: f64, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, f64)> {
    let mut r = d.residual(&u, c);
    let mut norm = l2(&r);
    for _ in 0..max_iter {
        if sup_norm(&r) < tol {
            return Ok((u, c, sup_norm(&r)));
        }
        let jac = d.jacobian(&u, c);
        let rhs = DVector::from_vec(r.iter().map(|v| -v).collect());
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::NewtonFailed { iterations: 0, residual: sup_norm(&r) })?;
        let mut lambda = 1.0;
        loop {
            let mut trial = u.clone();
            for (&i, s) in d.free.iter().zip(step.iter()) {
                trial[i] += lambda * s;
            }
            let tc = c + lambda * step[step.len() - 1];
            let tr = d.residual(&trial, tc);
            let tn = l2(&tr);
            if tn.is_finite() && tn <= (1.0 - 1e-4 * lambda) * norm {
                u = trial;
                c = tc;
                r = tr;
                norm = tn;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::NewtonFailed { iterations: max_iter, residual: sup_norm(&r) });
            }
        }
    }
    if sup_norm(&r) < tol {
        Ok((u, c, sup_norm(&r)))
    } else {
        Err(Error::NewtonFailed { iterations: max_iter, residual: sup_norm(&r) })
    }
}

/// Fourth-order central differences inside, second order next to the ends.
fn differentiate(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn solve_profile(f: &GainFunction, w: &SynapticKernel, settings: &WaveSettings) -> Result<WaveProfile> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter("wave tolerance must be positive".into()));
    }
    let d = Discretization::new(f, w, settings)?;
    let fp = f.fixed_points();
    let x = |i: usize| -settings.half_length + i as f64 * d.h;
    let mut last = Error::NewtonFailed { iterations: 0, residual: f64::INFINITY };

    // fine grids start from the interpolated solution on a grid twice as coarse
    if 2.0 * settings.h <= COARSE_CELL * w.sigma() * (1.0 + 1e-12) && (d.n / 2) % 2 == 0 {
        let coarse = WaveSettings { h: 2.0 * settings.h, ..*settings };
        if let Ok(p) = solve_profile(f, w, &coarse) {
            let u: Vec<f64> = (0..=d.n).map(|i| p.profile(x(i))).collect();
            match finish(&d, u, p.speed(), settings) {
                Ok(p) => return Ok(p),
                Err(e) => last = e,
            }
        }
    }

    // the sigmoid's own shape first, then progressively wider fronts
    let widths = [1.0 / f.gamma(), 0.5 * w.sigma(), w.sigma(), 2.0 * w.sigma()];
    for width in widths {
        let u: Vec<f64> = (0..=d.n).map(|i| fp.low + (fp.high - fp.low) / (1.0 + (-x(i) / width).exp())).collect();
        match finish(&d, u, 0.0, settings) {
            Ok(p) => return Ok(p),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Coarsest grid spacing, in kernel widths, that is solved from scratch.
const COARSE_CELL: f64 = 0.1;

fn finish(d: &Discretization, mut u: Vec<f64>, c: f64, settings: &WaveSettings) -> Result<WaveProfile> {
    let fp = d.f.fixed_points();
    u[0] = fp.low;
    u[d.n] = fp.high;
    u[d.mid] = fp.middle;
    let (u, c, res) = newton(d, u, c, settings.tol, settings.max_iter)?;
    let min_increment = u.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    if min_increment < -1e-10 {
        return Err(Error::NonMonotone { min_increment });
    }
    let derivs = differentiate(&u, d.h);
    Ok(WaveProfile {
        x_min: -settings.half_length,
        h: d.h,
        values: u,
        derivs,
        speed: c,
        residual_norm: res,
        low: fp.low,
        high: fp.high,
    })
}

impl WaveProfile {
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_length(&self) -> f64 {
        -self.x_min
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.x_min + i as f64 * self.h).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    /// Locate `xi` as (interval index, local coordinate), or `None` off the grid.
    fn locate(&self, xi: f64) -> Option<(usize, f64)> {
        let pos = (xi - self.x_min) / self.h;
        let last = self.values.len() - 1;
        if !(pos >= 0.0 && pos <= last as f64) {
            return None;
        }
        let i = (pos.floor() as usize).min(last - 1);
        Some((i, pos - i as f64))
    }

    /// Profile value `u_hat(xi)` by cubic Hermite interpolation, clamped to
    /// `a1`/`a2` off the grid.
    pub fn profile(&self, xi: f64) -> f64 {
        match self.locate(xi) {
            Some((i, s)) => {
                let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1]);
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                    + (s3 - 2.0 * s2 + s) * self.h * d0
                    + (-2.0 * s3 + 3.0 * s2) * y1
                    + (s3 - s2) * self.h * d1
            }
            None if xi < self.x_min => self.low,
            None => self.high,
        }
    }

    pub fn profile_dx(&self, xi: f64) -> f64 {
        match self.locate(xi) {
            Some((i, s)) => {
                let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1]);
                (6.0 * s * s - 6.0 * s) * (y0 - y1) / self.h
                    + (3.0 * s * s - 4.0 * s + 1.0) * d0
                    + (3.0 * s * s - 2.0 * s) * d1
            }
            None => 0.0,
        }
    }

    pub fn profile_dxx(&self, xi: f64) -> f64 {
        match self.locate(xi) {
            Some((i, s)) => {
                let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1]);
                ((12.0 * s - 6.0) * (y0 - y1) / self.h + (6.0 * s - 4.0) * d0 + (6.0 * s - 2.0) * d1) / self.h
            }
            None => 0.0,
        }
    }

    /// `u^TW_t(x) = u_hat(x - ct)`.
    pub fn wave_at(&self, t: f64, x: f64) -> f64 {
        self.profile(x - self.speed * t)
    }

    pub fn wave_dx(&self, t: f64, x: f64) -> f64 {
        self.profile_dx(x - self.speed * t)
    }

    pub fn wave_dt(&self, t: f64, x: f64) -> f64 {
        -self.speed * self.wave_dx(t, x)
    }

    pub fn wave_dxx(&self, t: f64, x: f64) -> f64 {
        self.profile_dxx(x - self.speed * t)
    }

    /// Riemann sum of `u_hat_x^2` over the grid.
    pub fn dx_l2_squared(&self) -> f64 {
        self.derivs.iter().map(|d| d * d).sum::<f64>() * self.h
    }

    /// Upper bound on `int u_hat_x^2` from the wave equation; `|c|` because the
    /// estimate only uses the magnitude of the speed.
    pub fn dx_l2_bound(&self, kernel: &SynapticKernel) -> f64 {
        let c = self.speed.abs();
        if c > SPEED_EPS {
            (self.high / c + 1.0) * (self.high - self.low)
        } else {
            kernel.deriv_l1() * (self.high - self.low)
        }
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["x", "u_hat", "u_hat_x"])
            .with_meta("c", crate::table::fmt_f64(self.speed))
            .with_meta("residual", crate::table::fmt_f64(self.residual_norm))
            .with_meta("h", crate::table::fmt_f64(self.h))
            .with_meta("x_min", crate::table::fmt_f64(self.x_min))
            .with_meta("a1", crate::table::fmt_f64(self.low))
            .with_meta("a2", crate::table::fmt_f64(self.high));
        for (i, (u, d)) in self.values.iter().zip(&self.derivs).enumerate() {
            t.push(vec![self.x_min + i as f64 * self.h, *u, *d]);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let meta = |k: &str| -> Result<f64> {
            t.meta_value(k)
                .ok_or_else(|| Error::Parse(format!("wave table lacks `{k}`")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{k}`: {e}")))
        };
        let values = t.column("u_hat").ok_or_else(|| Error::Parse("missing column u_hat".into()))?;
        let derivs = t.column("u_hat_x").ok_or_else(|| Error::Parse("missing column u_hat_x".into()))?;
        if values.len() < 2 {
            return Err(Error::Parse("wave table needs at least two nodes".into()));
        }
        Ok(Self {
            x_min: meta("x_min")?,
            h: meta("h")?,
            values,
            derivs,
            speed: meta("c")?,
            residual_norm: meta("residual")?,
            low: meta("a1")?,
            high: meta("a2")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_table().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(&Table::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WaveSettings {
        WaveSettings { half_length: 30.0, h: 0.1, ..Default::default() }
    }

    #[test]
    fn symmetric_front_is_stationary() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let p = solve_profile(&f, &w, &small()).unwrap();
        assert!(p.speed().abs() < 1e-6, "c = {}", p.speed());
        let fp = f.fixed_points();
        let vals = p.values();
        let n = vals.len() - 1;
        for i in 0..=n {
            assert!((vals[i] + vals[n - i] - fp.low - fp.high).abs() < 1e-6);
        }
        assert!(p.wave_dt(1.0, 0.3).abs() < 1e-6);
    }

    #[test]
    fn phase_and_endpoints() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let p = solve_profile(&f, &w, &small()).unwrap();
        let fp = f.fixed_points();
        assert!((p.wave_at(0.0, 0.0) - fp.middle).abs() < 1e-12);
        assert!((p.values()[0] - fp.low).abs() < 1e-6);
        assert!((p.values().last().unwrap() - fp.high).abs() < 1e-6);
        assert!(p.residual_norm() < 1e-8);
        assert!(p.speed().abs() > 1e-3);
        assert!(p.dx_l2_squared() <= p.dx_l2_bound(&w) + 1e-6);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let w = SynapticKernel::gaussian(1.0).unwrap();
        let p = solve_profile(&f, &w, &small()).unwrap();
        for j in 0..20 {
            let x = -3.0 + 0.31 * j as f64;
            let e = 1e-6;
            let fd = (p.wave_at(0.7, x + e) - p.wave_at(0.7, x - e)) / (2.0 * e);
            let d = p.wave_dx(0.7, x);
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "x={x}: {fd} vs {d}");
            assert_eq!(p.wave_dt(0.7, x), -p.speed() * d);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let p = solve_profile(&f, &w, &WaveSettings { half_length: 30.0, h: 0.2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wave.csv");
        p.save(&path).unwrap();
        assert_eq!(WaveProfile::load(&path).unwrap(), p);
    }

    #[test]
    fn speed_converges_at_second_order() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let c: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| solve_profile(&f, &w, &WaveSettings { half_length: 30.0, h, ..Default::default() }).unwrap().speed())
            .collect();
        let ratio = (c[0] - c[1]) / (c[1] - c[2]);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_misaligned_grid() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let w = SynapticKernel::exponential(1.0).unwrap();
        let s = WaveSettings { half_length: 10.0, h: 0.3, ..Default::default() };
        assert!(matches!(solve_profile(&f, &w, &s), Err(Error::InvalidParameter(_))));
    }
}
