//! Deterministic mean-field network, the large-`N` limit of the jump process.
//!
//! `dX_k/dt = F'(F^{-1}(X_k)) (-F^{-1}(X_k) + sum_j w_kj X_j)`, integrated with
//! classical RK4. The bracket rate `F'(F^{-1}(X_k)) |b_k|` is integrated along
//! the same path, since it is the limiting variance of `sqrt(N) M_k`.

use crate::error::{Error, Result};
use crate::jumpchain::output_grid;
use crate::model::{GainFunction, Network};
use crate::table::Table;

pub fn drift(x: &[f64], net: &Network, f: &GainFunction) -> Result<Vec<f64>> {
    let (d, _) = drift_and_bracket_rate(x, net, f)?;
    Ok(d)
}

/// Drift and bracket rate `F'(F^{-1}(x_k)) |b_k|`.
pub fn drift_and_bracket_rate(x: &[f64], net: &Network, f: &GainFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut input = vec![0.0; x.len()];
    net.input(x, &mut input);
    let mut d = Vec::with_capacity(x.len());
    let mut q = Vec::with_capacity(x.len());
    for (k, &v) in x.iter().enumerate() {
        let u = f.inverse(v).map_err(|_| Error::Boundary { population: k, value: v })?;
        let s = f.deriv1(u);
        let b = -u + input[k];
        d.push(s * b);
        q.push(s * b.abs());
    }
    Ok((d, q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `int_0^t F'(F^{-1}(X_k)) |b_k| ds` at each output time.
    pub bracket: Vec<Vec<f64>>,
    pub dt: f64,
}

impl MeanFieldPath {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("path is nonempty")
    }

    pub fn to_table(&self) -> Table {
        let p = self.states[0].len();
        let mut header = vec!["time".to_string()];
        header.extend((1..=p).map(|k| format!("x_{k}")));
        let mut t = Table::new(header).with_meta("dt", self.dt);
        for (time, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![*time];
            row.extend(x);
            t.push(row);
        }
        t
    }
}

fn rhs(y: &[f64], p: usize, net: &Network, f: &GainFunction) -> Result<Vec<f64>> {
    let x = &y[..p];
    if let Some(k) = x.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::StateExit(format!("mean-field population {k} reached {}", x[k])));
    }
    let (mut d, q) = drift_and_bracket_rate(x, net, f)?;
    d.extend(q);
    Ok(d)
}

/// RK4 on the output grid of `output_points` times in `[0, horizon]`, with
/// internal step at most `dt`.
pub fn integrate(
    x0: &[f64],
    net: &Network,
    f: &GainFunction,
    horizon: f64,
    dt: f64,
    output_points: usize,
) -> Result<MeanFieldPath> {
    if !(dt > 0.0 && horizon > 0.0) || output_points < 2 {
        return Err(Error::InvalidParameter("mean-field integration needs dt, T > 0 and two output points".into()));
    }
    let p = x0.len();
    let times = output_grid(horizon, output_points);
    let interval = times[1] - times[0];
    let substeps = (interval / dt).ceil().max(1.0) as usize;
    let h = interval / substeps as f64;

    let mut y: Vec<f64> = x0.iter().copied().chain(std::iter::repeat_n(0.0, p)).collect();
    rhs(&y, p, net, f)?;
    let mut states = vec![x0.to_vec()];
    let mut bracket = vec![vec![0.0; p]];
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for _ in 1..output_points {
        for _ in 0..substeps {
            let k1 = rhs(&y, p, net, f)?;
            let k2 = rhs(&axpy(&y, &k1, 0.5 * h), p, net, f)?;
            let k3 = rhs(&axpy(&y, &k2, 0.5 * h), p, net, f)?;
            let k4 = rhs(&axpy(&y, &k3, h), p, net, f)?;
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        states.push(y[..p].to_vec());
        bracket.push(y[p..].to_vec());
    }
    Ok(MeanFieldPath { times, states, bracket, dt: h })
}
