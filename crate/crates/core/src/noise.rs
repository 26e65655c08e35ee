//! Spatially correlated Wiener noise with a boxcar correlation kernel.
//!
//! `q(x, y) = 1/(2ε) 1{|x - y| < ε}`; the covariance density of the Q-Wiener
//! process is the tent `q*q(d) = (2ε - |d|)_+ / (4ε²)`. Noise is sampled as
//! exact interval integrals: the network level `m` sees the averages
//! `W^m_k = 2m <W^Q, 1_{J_k}>` over `J_k = (k/m - 1/(4m), k/m + 1/(4m))`, and a
//! fine reference grid carries one realization that every level can be
//! projected from.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandedCholesky;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    /// Correlation half-width `ε`.
    pub epsilon: f64,
    /// Reference cells per unit length; a multiple of `4m` for every level `m` in use.
    pub cells_per_unit: usize,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self { epsilon: 0.1, cells_per_unit: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationKernel {
    epsilon: f64,
}

/// Simpson's rule; exact for the piecewise quadratics integrated here.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

/// Integral of `f` over `[lo, hi]`, split at `breaks` so each piece is polynomial.
fn piecewise(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|p| simpson(&f, p[0], p[1])).sum()
}

impl CorrelationKernel {
    pub fn boxcar(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("correlation width must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if (x - y).abs() < self.epsilon {
            0.5 / self.epsilon
        } else {
            0.0
        }
    }

    pub fn l1_norm(&self) -> f64 {
        1.0
    }

    /// `||q(x, .)||^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        0.5 / self.epsilon
    }

    /// `q*q(x, y)`.
    pub fn tent(&self, d: f64) -> f64 {
        (2.0 * self.epsilon - d.abs()).max(0.0) / (4.0 * self.epsilon * self.epsilon)
    }

    /// `int_A int_B q*q(y, z) dz dy` for `A = [0, a]`, `B = [D, D + a]`.
    pub fn interval_pair(&self, a: f64, offset: f64) -> f64 {
        let e2 = 2.0 * self.epsilon;
        let lo = (-e2).max(offset - a);
        let hi = e2.min(offset + a);
        piecewise(|s| self.tent(s) * (a - (s - offset).abs()).max(0.0), lo, hi, &[0.0, offset])
    }
}

/// Covariance and sampler of the level-`m` drivers `W^m_k`, `k = -mL, ..., mL - 1`.
#[derive(Debug, Clone)]
pub struct NoiseGrid {
    kernel: CorrelationKernel,
    m: usize,
    half_length: usize,
    coeffs: Vec<f64>,
    factor: BandedCholesky,
}

/// Nonzero entries `c[d]`, `d = 0, 1, ...` of a stationary covariance with
/// cells of width `a` spaced `spacing` apart, scaled by `scale`.
fn stationary_band(kernel: &CorrelationKernel, a: f64, spacing: f64, scale: f64) -> Vec<f64> {
    let mut coeffs = vec![];
    let mut d = 0usize;
    loop {
        let v = scale * kernel.interval_pair(a, d as f64 * spacing);
        if v == 0.0 {
            break;
        }
        coeffs.push(v);
        d += 1;
    }
    coeffs
}

fn factor_stationary(n: usize, coeffs: &[f64]) -> Result<BandedCholesky> {
    let bw = coeffs.len().saturating_sub(1);
    let entry = |i: usize, j: usize| coeffs.get(i.abs_diff(j)).copied().unwrap_or(0.0);
    BandedCholesky::factor(n, bw, entry).or_else(|_| {
        let jitter = 1e-14 * coeffs[0];
        BandedCholesky::factor(n, bw, |i, j| entry(i, j) + if i == j { jitter } else { 0.0 })
    })
}

impl NoiseGrid {
    pub fn build(kernel: CorrelationKernel, m: usize, half_length: usize) -> Result<Self> {
        if m == 0 || half_length == 0 {
            return Err(Error::InvalidParameter("noise grid needs m >= 1 and L >= 1".into()));
        }
        let mf = m as f64;
        let coeffs = stationary_band(&kernel, 0.5 / mf, 1.0 / mf, 4.0 * mf * mf);
        let factor = factor_stationary(2 * m * half_length, &coeffs)?;
        Ok(Self { kernel, m, half_length, coeffs, factor })
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn density(&self) -> usize {
        self.m
    }

    pub fn half_length(&self) -> usize {
        self.half_length
    }

    pub fn size(&self) -> usize {
        2 * self.m * self.half_length
    }

    pub fn bandwidth(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `C_kl = 4m^2 int_{J_k} int_{J_l} q*q`.
    pub fn covariance(&self, k: usize, l: usize) -> f64 {
        self.coeffs.get(k.abs_diff(l)).copied().unwrap_or(0.0)
    }

    pub fn factor(&self) -> &BandedCholesky {
        &self.factor
    }

    /// Increments over a step `dt`: `sqrt(dt) L xi`.
    pub fn sample_increments(&self, dt: f64, rng: &mut SimRng, out: &mut [f64]) {
        let mut z = vec![0.0; self.size()];
        rng::fill_normal(rng, &mut z);
        self.factor.mul_lower(&z, out);
        let s = dt.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// Fine cells `[-L + i h, -L + (i + 1) h)` with `h = 1 / cells_per_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceGrid {
    cells_per_unit: usize,
    half_length: usize,
}

impl ReferenceGrid {
    pub fn new(cells_per_unit: usize, half_length: usize) -> Result<Self> {
        if cells_per_unit == 0 || half_length == 0 {
            return Err(Error::InvalidParameter("reference grid needs positive resolution and length".into()));
        }
        Ok(Self { cells_per_unit, half_length })
    }

    pub fn cells_per_unit(&self) -> usize {
        self.cells_per_unit
    }

    pub fn half_length(&self) -> usize {
        self.half_length
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_unit as f64
    }

    pub fn len(&self) -> usize {
        2 * self.cells_per_unit * self.half_length
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centre(&self, i: usize) -> f64 {
        -(self.half_length as f64) + (i as f64 + 0.5) * self.h()
    }

    pub fn centres(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.centre(i)).collect()
    }

    /// Whether level `(m, L^m)` can be projected exactly from this grid.
    pub fn check_level(&self, m: usize, half_length: usize) -> Result<()> {
        if m == 0 || self.cells_per_unit % (4 * m) != 0 {
            return Err(Error::Resolution(format!(
                "reference resolution {} per unit does not resolve 1/(4m) for m = {m}",
                self.cells_per_unit
            )));
        }
        if half_length >= self.half_length {
            return Err(Error::Resolution(format!(
                "level half-length {half_length} must be below reference half-length {}",
                self.half_length
            )));
        }
        Ok(())
    }

    /// Reference cells making up `J^m_k` for the level-`m` population with array index `index`.
    pub fn j_cells(&self, m: usize, half_length: usize, index: usize) -> Range<usize> {
        let r = self.cells_per_unit / m;
        let offset = (self.half_length - half_length) * self.cells_per_unit;
        let start = offset + index * r - r / 4;
        start..start + r / 2
    }

    /// Reference cells making up `I^m_k`.
    pub fn i_cells(&self, m: usize, half_length: usize, index: usize) -> Range<usize> {
        let r = self.cells_per_unit / m;
        let offset = (self.half_length - half_length) * self.cells_per_unit;
        offset + index * r..offset + (index + 1) * r
    }

    /// `Φ^m(u)_k = 2m <u, 1_{J_k}>` for `u` given by its cell averages.
    pub fn phi_m(&self, averages: &[f64], m: usize, half_length: usize) -> Result<Vec<f64>> {
        self.check_level(m, half_length)?;
        if averages.len() != self.len() {
            return Err(Error::Resolution("field length differs from the reference grid".into()));
        }
        let scale = 2.0 * m as f64 * self.h();
        Ok((0..2 * m * half_length)
            .map(|k| {
                scale * averages[self.j_cells(m, half_length, k)].iter().sum::<f64>()
            })
            .collect())
    }

    /// The same projection applied to interval integrals `Z_i = <W, 1_{cell_i}>`.
    pub fn project_increments(&self, z: &[f64], m: usize, half_length: usize, out: &mut [f64]) -> Result<()> {
        self.check_level(m, half_length)?;
        let scale = 2.0 * m as f64;
        for (k, o) in out.iter_mut().enumerate().take(2 * m * half_length) {
            *o = scale * z[self.j_cells(m, half_length, k)].iter().sum::<f64>();
        }
        Ok(())
    }
}

/// One Q-Wiener realization on the reference grid: exact cell integrals.
#[derive(Debug, Clone)]
pub struct ReferenceNoise {
    kernel: CorrelationKernel,
    grid: ReferenceGrid,
    factor: BandedCholesky,
}

impl ReferenceNoise {
    pub fn build(kernel: CorrelationKernel, grid: ReferenceGrid) -> Result<Self> {
        let h = grid.h();
        let coeffs = stationary_band(&kernel, h, h, 1.0);
        Ok(Self { kernel, grid, factor: factor_stationary(grid.len(), &coeffs)? })
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &ReferenceGrid {
        &self.grid
    }

    /// Cell integrals of the increment over `dt`.
    pub fn sample(&self, dt: f64, rng: &mut SimRng, out: &mut [f64]) {
        let mut z = vec![0.0; self.grid.len()];
        rng::fill_normal(rng, &mut z);
        self.factor.mul_lower(&z, out);
        let s = dt.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// `||2m sqrt(Q) 1_{J_k} - q(x, .)||^2` for `x` measured from the centre `k/m` of `J_k`.
pub fn condition_i_sq_at(kernel: &CorrelationKernel, m: usize, x: f64) -> f64 {
    let e = kernel.epsilon();
    let j = 0.25 / m as f64;
    let mut pts = [-j - e, -j + e, j - e, j + e, x - e, x + e];
    pts.sort_by(f64::total_cmp);
    let scale = m as f64 / e;
    pts.windows(2)
        .filter(|p| p[1] > p[0])
        .map(|p| {
            // the indicator is constant on each piece; take it from the midpoint
            let inside = if (x - 0.5 * (p[0] + p[1])).abs() < e { 0.5 / e } else { 0.0 };
            let g = |y: f64| (scale * ((y + e).min(j) - (y - e).max(-j)).max(0.0) - inside).powi(2);
            simpson(g, p[0], p[1])
        })
        .sum()
}

/// `2m sqrt(Q) 1_{J}(y) - q(x, y)` with `J` centred at 0.
pub fn condition_i_integrand(kernel: &CorrelationKernel, m: usize, x: f64, y: f64) -> f64 {
    let e = kernel.epsilon();
    let j = 0.25 / m as f64;
    let overlap = ((y + e).min(j) - (y - e).max(-j)).max(0.0);
    2.0 * m as f64 * overlap / (2.0 * e) - kernel.eval(x, y)
}

/// `sup_{x in I_k} ||2m sqrt(Q) 1_{J_k} - q(x, .)||^2`, by a scan over the
/// closed cell `[k/m, (k+1)/m]` (the squared norm is continuous in `x`).
pub fn condition_i_norm_sq(kernel: &CorrelationKernel, m: usize) -> f64 {
    let cell = 1.0 / m as f64;
    let samples = 4000;
    (0..=samples).map(|i| condition_i_sq_at(kernel, m, cell * i as f64 / samples as f64)).fold(0.0, f64::max)
}

/// The bound `1 / (4 ε² m)`.
pub fn condition_i_bound(kernel: &CorrelationKernel, m: usize) -> f64 {
    0.25 / (kernel.epsilon().powi(2) * m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationHeader {
    pub cells_per_unit: u64,
    pub epsilon: f64,
    pub dt: f64,
    pub seed: u64,
}

const MAGIC: &[u8; 8] = b"NFNOISE1";

/// Persist a realization: magic, header fields, length, little-endian samples.
pub fn save_realization(path: &Path, header: &RealizationHeader, data: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&header.cells_per_unit.to_le_bytes())?;
    w.write_all(&header.epsilon.to_le_bytes())?;
    w.write_all(&header.dt.to_le_bytes())?;
    w.write_all(&header.seed.to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_realization(path: &Path) -> Result<(RealizationHeader, Vec<f64>)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    if &word != MAGIC {
        return Err(Error::Parse("not a noise realization file".into()));
    }
    let mut next = || -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let header = RealizationHeader {
        cells_per_unit: u64::from_le_bytes(next()?),
        epsilon: f64::from_le_bytes(next()?),
        dt: f64::from_le_bytes(next()?),
        seed: u64::from_le_bytes(next()?),
    };
    let len = u64::from_le_bytes(next()?) as usize;
    let data = (0..len).map(|_| next().map(f64::from_le_bytes)).collect::<Result<Vec<f64>>>()?;
    Ok((header, data))
}
