//! Exact simulation of the population jump process `X^{P,N}`.
//!
//! Each population holds `N` neurons; its activity `x_k = count_k / N` moves by
//! `±1/N` with voltage-based rates. Between jumps all rates are constant, so the
//! generator drift and the bracket of the martingale part are integrated exactly
//! along the path.

use serde::{Deserialize, Serialize};

use crate::ensemble::{try_map_replicas, Execution};
use crate::error::{Error, Result};
use crate::model::{GainFunction, Network};
use crate::rng::{self, SimRng};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    counts: Vec<u32>,
    n: u32,
}

impl ChainState {
    pub fn from_counts(counts: Vec<u32>, n: u32) -> Result<Self> {
        if n == 0 || counts.is_empty() || counts.iter().any(|&c| c > n) {
            return Err(Error::InvalidParameter(format!("counts must lie in [0, {n}]")));
        }
        Ok(Self { counts, n })
    }

    /// Nearest lattice state to the activities `x`.
    pub fn from_activities(x: &[f64], n: u32) -> Result<Self> {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("activities must lie in [0, 1]".into()));
        }
        Self::from_counts(x.iter().map(|v| (v * n as f64).round() as u32).collect(), n)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn population_size(&self) -> u32 {
        self.n
    }

    pub fn populations(&self) -> usize {
        self.counts.len()
    }

    pub fn activities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateChoice {
    /// Rates `N F'(F^{-1}(x_k)) (b_k)_±`: only one direction is active at a time.
    #[default]
    Primary,
    /// Rates `N F'(F^{-1}(x_k)) sum_j w_kj x_j` up and `N F'(F^{-1}(x_k)) F^{-1}(x_k)` down.
    Alternative,
}

/// `F'(F^{-1}(x_k))` and `b_k = -F^{-1}(x_k) + sum_j w_kj x_j` for every population.
fn slope_and_balance(x: &[f64], net: &Network, f: &GainFunction) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut slope = Vec::with_capacity(x.len());
    let mut inv = Vec::with_capacity(x.len());
    for (k, &v) in x.iter().enumerate() {
        let u = f.inverse(v).map_err(|_| Error::Boundary { population: k, value: v })?;
        inv.push(u);
        slope.push(f.deriv1(u));
    }
    let mut input = vec![0.0; x.len()];
    net.input(x, &mut input);
    Ok((slope, inv, input))
}

pub fn jump_rates(x: &[f64], net: &Network, f: &GainFunction, n: u32) -> Result<Rates> {
    let (slope, inv, input) = slope_and_balance(x, net, f)?;
    let nf = n as f64;
    let mut up = vec![0.0; x.len()];
    let mut down = vec![0.0; x.len()];
    for k in 0..x.len() {
        let b = -inv[k] + input[k];
        if b > 0.0 {
            up[k] = nf * slope[k] * b;
        } else {
            down[k] = -nf * slope[k] * b;
        }
    }
    Ok(Rates { up, down })
}

pub fn jump_rates_alternative(x: &[f64], net: &Network, f: &GainFunction, n: u32) -> Result<Rates> {
    let (slope, inv, input) = slope_and_balance(x, net, f)?;
    let nf = n as f64;
    let up = (0..x.len()).map(|k| nf * slope[k] * input[k]).collect();
    let down = (0..x.len()).map(|k| nf * slope[k] * inv[k].max(0.0)).collect();
    Ok(Rates { up, down })
}

pub fn rates_for(choice: RateChoice, x: &[f64], net: &Network, f: &GainFunction, n: u32) -> Result<Rates> {
    match choice {
        RateChoice::Primary => jump_rates(x, net, f, n),
        RateChoice::Alternative => jump_rates_alternative(x, net, f, n),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct N0Check {
    pub holds: bool,
    pub offenders: Vec<usize>,
}

/// Whether jumps out of `[1/N, 1 - 1/N]` are impossible for every population.
///
/// Worst case per population: to leave upward from `1 - 1/N` every other
/// population sits at `1 - 1/N` too; to leave downward from `1/N` every other
/// population sits at `1/N`.
pub fn check_n0(net: &Network, f: &GainFunction, n: u32) -> N0Check {
    if n < 2 {
        return N0Check { holds: false, offenders: (0..net.populations()).collect() };
    }
    let nf = n as f64;
    let hi = 1.0 - 1.0 / nf;
    let lo = 1.0 / nf;
    let (Ok(inv_hi), Ok(inv_lo)) = (f.inverse(hi), f.inverse(lo)) else {
        return N0Check { holds: false, offenders: (0..net.populations()).collect() };
    };
    let offenders: Vec<usize> = (0..net.populations())
        .filter(|&k| {
            let row = net.row_sum(k);
            let ext = net.external()[k];
            inv_hi < row * hi + ext || inv_lo > row * lo + ext
        })
        .collect();
    N0Check { holds: offenders.is_empty(), offenders }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Refuse to simulate unless the boundary-vanishing condition holds.
    #[default]
    Error,
    /// Zero any rate leading out of `[1/N, 1 - 1/N]` and flag the path.
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub horizon: f64,
    pub output_points: usize,
    pub policy: BoundaryPolicy,
    pub rates: RateChoice,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self { horizon: 1.0, output_points: 201, policy: BoundaryPolicy::Error, rates: RateChoice::Primary }
    }
}

impl ChainSettings {
    pub fn times(&self) -> Vec<f64> {
        output_grid(self.horizon, self.output_points)
    }
}

pub fn output_grid(horizon: f64, points: usize) -> Vec<f64> {
    let last = (points - 1).max(1) as f64;
    (0..points).map(|i| horizon * i as f64 / last).collect()
}

/// Sampled path with its martingale decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub drift_integrals: Vec<Vec<f64>>,
    pub martingale: Vec<Vec<f64>>,
    pub bracket: Vec<Vec<f64>>,
    /// Realized `sum (Δx_k)^2` at the horizon.
    pub quadratic_variation: Vec<f64>,
    /// Realized `sum Δx_k Δx_l` at the horizon, row-major `P x P`.
    pub covariation: Vec<f64>,
    pub jumps: u64,
    pub clamped: bool,
}

impl PathRecord {
    pub fn populations(&self) -> usize {
        self.quadratic_variation.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("path has at least one sample")
    }

    pub fn final_martingale(&self) -> &[f64] {
        self.martingale.last().expect("path has at least one sample")
    }

    pub fn to_table(&self) -> Table {
        let p = self.populations();
        let mut header = vec!["time".to_string()];
        header.extend((1..=p).map(|k| format!("x_{k}")));
        header.extend((1..=p).map(|k| format!("M_{k}")));
        header.extend((1..=p).map(|k| format!("bracket_{k}")));
        let mut t = Table::new(header).with_meta("jumps", self.jumps).with_meta("clamped", self.clamped);
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i]];
            row.extend(&self.states[i]);
            row.extend(&self.martingale[i]);
            row.extend(&self.bracket[i]);
            t.push(row);
        }
        t
    }
}

struct Chain<'a> {
    net: &'a Network,
    f: &'a GainFunction,
    n: u32,
    choice: RateChoice,
    clamp: bool,
    counts: Vec<u32>,
    up: Vec<f64>,
    down: Vec<f64>,
    clamped: bool,
}

impl Chain<'_> {
    fn refresh(&mut self) -> Result<f64> {
        let x: Vec<f64> = self.counts.iter().map(|&c| c as f64 / self.n as f64).collect();
        let r = rates_for(self.choice, &x, self.net, self.f, self.n)?;
        self.up = r.up;
        self.down = r.down;
        if self.clamp {
            for k in 0..self.counts.len() {
                if self.counts[k] + 1 >= self.n && self.up[k] > 0.0 {
                    self.up[k] = 0.0;
                    self.clamped = true;
                }
                if self.counts[k] <= 1 && self.down[k] > 0.0 {
                    self.down[k] = 0.0;
                    self.clamped = true;
                }
            }
        }
        let total: f64 = self.up.iter().sum::<f64>() + self.down.iter().sum::<f64>();
        if !total.is_finite() {
            return Err(Error::RateOverflow(total));
        }
        Ok(total)
    }

    /// Population and direction (+1/-1) of the event selected by `target` in `[0, total)`.
    fn select(&self, mut target: f64) -> (usize, i32) {
        let mut fallback = (0, 1);
        for k in 0..self.counts.len() {
            if self.up[k] > 0.0 {
                fallback = (k, 1);
                if target < self.up[k] {
                    return (k, 1);
                }
                target -= self.up[k];
            }
            if self.down[k] > 0.0 {
                fallback = (k, -1);
                if target < self.down[k] {
                    return (k, -1);
                }
                target -= self.down[k];
            }
        }
        // roundoff at the top of the cumulative sum
        fallback
    }
}

pub fn simulate(
    initial: &ChainState,
    net: &Network,
    f: &GainFunction,
    settings: &ChainSettings,
    rng: &mut SimRng,
) -> Result<PathRecord> {
    let p = initial.populations();
    let n = initial.population_size();
    if p != net.populations() {
        return Err(Error::InvalidParameter("state and network sizes differ".into()));
    }
    if !(settings.horizon > 0.0) || settings.output_points < 2 {
        return Err(Error::InvalidParameter("need a positive horizon and at least two output points".into()));
    }
    let check = check_n0(net, f, n);
    let clamp = match settings.policy {
        BoundaryPolicy::Error if !check.holds => {
            return Err(Error::BoundaryRates { n, offenders: check.offenders });
        }
        BoundaryPolicy::Error => false,
        BoundaryPolicy::Clamp => true,
    };
    for (k, &c) in initial.counts().iter().enumerate() {
        if c == 0 || c == n {
            return Err(Error::Boundary { population: k, value: c as f64 / n as f64 });
        }
    }

    let nf = n as f64;
    let times = settings.times();
    let x0 = initial.activities();
    let mut chain =
        Chain { net, f, n, choice: settings.rates, clamp, counts: initial.counts().to_vec(), up: vec![], down: vec![], clamped: false };
    let mut total = chain.refresh()?;

    let mut drift = vec![0.0; p];
    let mut bracket = vec![0.0; p];
    let mut qv = vec![0.0; p];
    let mut cov = vec![0.0; p * p];
    let mut record = PathRecord {
        times: times.clone(),
        states: Vec::with_capacity(times.len()),
        drift_integrals: Vec::with_capacity(times.len()),
        martingale: Vec::with_capacity(times.len()),
        bracket: Vec::with_capacity(times.len()),
        quadratic_variation: vec![],
        covariation: vec![],
        jumps: 0,
        clamped: false,
    };

    let mut t = 0.0;
    let mut next_out = 0;
    loop {
        let wait = if total > 0.0 { rng::exponential(rng) / total } else { f64::INFINITY };
        let t_event = t + wait;
        while next_out < times.len() && times[next_out] < t_event {
            let dt = times[next_out] - t;
            let x: Vec<f64> = chain.counts.iter().map(|&c| c as f64 / nf).collect();
            let d: Vec<f64> = (0..p).map(|k| drift[k] + (chain.up[k] - chain.down[k]) / nf * dt).collect();
            let b: Vec<f64> = (0..p).map(|k| bracket[k] + (chain.up[k] + chain.down[k]) / (nf * nf) * dt).collect();
            let m: Vec<f64> = (0..p).map(|k| x[k] - x0[k] - d[k]).collect();
            record.states.push(x);
            record.drift_integrals.push(d);
            record.martingale.push(m);
            record.bracket.push(b);
            next_out += 1;
        }
        if next_out == times.len() {
            break;
        }
        for k in 0..p {
            drift[k] += (chain.up[k] - chain.down[k]) / nf * wait;
            bracket[k] += (chain.up[k] + chain.down[k]) / (nf * nf) * wait;
        }
        let before: Vec<f64> = chain.counts.iter().map(|&c| c as f64 / nf).collect();
        let (k, dir) = chain.select(rng::uniform(rng) * total);
        if dir > 0 {
            chain.counts[k] += 1;
        } else {
            chain.counts[k] -= 1;
        }
        if chain.counts[k] == 0 || chain.counts[k] == n {
            return Err(Error::Boundary { population: k, value: chain.counts[k] as f64 / nf });
        }
        let moved: Vec<(usize, f64)> = (0..p)
            .filter_map(|j| {
                let dx = chain.counts[j] as f64 / nf - before[j];
                (dx != 0.0).then_some((j, dx))
            })
            .collect();
        for &(a, da) in &moved {
            qv[a] += da * da;
            for &(b, db) in &moved {
                if a != b {
                    cov[a * p + b] += da * db;
                }
            }
        }
        record.jumps += 1;
        t = t_event;
        total = chain.refresh()?;
    }
    record.quadratic_variation = qv;
    record.covariation = cov;
    record.clamped = chain.clamped;
    Ok(record)
}

/// Independent replicas, replica `r` driven by stream `(seed, r)`.
pub fn simulate_ensemble(
    initial: &ChainState,
    net: &Network,
    f: &GainFunction,
    settings: &ChainSettings,
    seed: u64,
    replicas: usize,
    exec: Execution,
) -> Result<Vec<PathRecord>> {
    try_map_replicas(exec, replicas, |r| simulate(initial, net, f, settings, &mut rng::stream(seed, r as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SynapticKernel;

    fn gain() -> GainFunction {
        GainFunction::new(8.0, 0.5).unwrap()
    }

    fn ring3() -> Network {
        Network::ring(&SynapticKernel::exponential(1.0).unwrap(), 3).unwrap()
    }

    #[test]
    fn balanced_state_has_zero_rates() {
        let f = gain();
        let a = f.fixed_points().middle;
        let r = jump_rates(&[a; 3], &ring3(), &f, 100).unwrap();
        assert!(r.up.iter().chain(&r.down).all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn scalar_rate_matches_formula() {
        let f = gain();
        let net = Network::from_rows(vec![vec![1.0]]).unwrap();
        let n = 100;
        let x = (f.fixed_points().high * n as f64).round() / n as f64 + 0.01;
        let r = jump_rates(&[x], &net, &f, n).unwrap();
        // independent evaluation: F^{-1}(x) = kappa + ln(x/(1-x))/gamma, F'(F^{-1}(x)) = gamma x (1-x)
        let inv = 0.5 + (x / (1.0 - x)).ln() / 8.0;
        let b = -inv + x;
        let expected = n as f64 * 8.0 * x * (1.0 - x) * b.abs();
        let got = if b > 0.0 { r.up[0] } else { r.down[0] };
        assert!((got - expected).abs() < 1e-10 * expected);
        assert!(r.up[0] * r.down[0] == 0.0);
    }

    #[test]
    fn rate_choices_share_the_drift() {
        let f = gain();
        let net = ring3();
        let x = [0.2, 0.55, 0.9];
        let a = jump_rates(&x, &net, &f, 50).unwrap();
        let b = jump_rates_alternative(&x, &net, &f, 50).unwrap();
        for k in 0..3 {
            assert!(((a.up[k] - a.down[k]) - (b.up[k] - b.down[k])).abs() / 50.0 < 1e-12);
        }
    }

    #[test]
    fn alternative_rates_at_balance() {
        let f = gain();
        let a = f.fixed_points().middle;
        let net = ring3();
        let n = 200;
        let r = jump_rates_alternative(&[a; 3], &net, &f, n).unwrap();
        let expected = n as f64 * f.deriv1(a) * a;
        for k in 0..3 {
            assert!((r.up[k] - expected).abs() < 1e-9);
            assert!((r.down[k] - expected).abs() < 1e-9);
            // bracket rate (up + down)/N^2
            assert!(((r.up[k] + r.down[k]) / (n as f64).powi(2) - 2.0 * f.deriv1(a) * a / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_states_are_rejected() {
        let f = gain();
        let net = Network::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(jump_rates(&[1.0], &net, &f, 10), Err(Error::Boundary { .. })));
        assert!(matches!(jump_rates(&[0.0], &net, &f, 10), Err(Error::Boundary { .. })));
    }

    #[test]
    fn n0_condition() {
        let f = gain();
        let net = ring3();
        assert!(check_n0(&net, &f, 1000).holds);
        let mut prev = false;
        for n in [3u32, 5, 10, 20, 50, 100, 1000, 5000] {
            let holds = check_n0(&net, &f, n).holds;
            assert!(!prev || holds, "lost at N={n}");
            prev = holds;
        }
        let f4 = GainFunction::new(8.0, 0.4).unwrap();
        let c = check_n0(&net, &f4, 2);
        assert!(!c.holds);
        assert_eq!(c.offenders, vec![0, 1, 2]);
        assert!(!check_n0(&net, &f, 3).holds);
    }

    #[test]
    fn balanced_start_never_jumps() {
        let f = gain();
        let net = ring3();
        let s = ChainState::from_activities(&[0.5; 3], 100).unwrap();
        let path = simulate(&s, &net, &f, &ChainSettings::default(), &mut rng::stream(1, 0)).unwrap();
        assert_eq!(path.jumps, 0);
        assert!(path.states.iter().all(|x| x == &vec![0.5; 3]));
    }

    #[test]
    fn decomposition_and_covariation() {
        let f = gain();
        let net = ring3();
        let s = ChainState::from_activities(&[0.2, 0.6, 0.8], 100).unwrap();
        let path = simulate(&s, &net, &f, &ChainSettings::default(), &mut rng::stream(5, 2)).unwrap();
        assert!(path.jumps > 0);
        let x0 = s.activities();
        for i in 0..path.times.len() {
            for k in 0..3 {
                let rebuilt = x0[k] + path.drift_integrals[i][k] + path.martingale[i][k];
                assert!((rebuilt - path.states[i][k]).abs() < 1e-12);
            }
        }
        for i in 1..path.times.len() {
            assert!(path.bracket[i].iter().zip(&path.bracket[i - 1]).all(|(a, b)| a >= b));
        }
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    assert_eq!(path.covariation[k * 3 + l], 0.0);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_path() {
        let f = gain();
        let net = ring3();
        let s = ChainState::from_activities(&[0.3, 0.6, 0.7], 80).unwrap();
        let a = simulate(&s, &net, &f, &ChainSettings::default(), &mut rng::stream(9, 4)).unwrap();
        let b = simulate(&s, &net, &f, &ChainSettings::default(), &mut rng::stream(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_policy_refuses_small_n() {
        let f = GainFunction::new(8.0, 0.4).unwrap();
        let net = ring3();
        let s = ChainState::from_activities(&[0.5; 3], 2).unwrap();
        let r = simulate(&s, &net, &f, &ChainSettings::default(), &mut rng::stream(0, 0));
        assert!(matches!(r, Err(Error::BoundaryRates { n: 2, .. })));
        let clamp = ChainSettings { policy: BoundaryPolicy::Clamp, ..Default::default() };
        let p = simulate(&s, &net, &f, &clamp, &mut rng::stream(0, 0)).unwrap();
        assert!(p.clamped);
    }
}
