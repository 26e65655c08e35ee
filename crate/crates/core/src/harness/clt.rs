use crate::config::Config;
use crate::ensemble::Execution;
use crate::error::{Error, Result};
use crate::harness::{ExperimentKind, Provenance, Report};
use crate::jumpchain::{check_n0, simulate_ensemble, ChainSettings, ChainState};
use crate::meanfield;
use crate::model::Network;
use crate::stats::{covariance, ks_normality, variance_estimate, VarianceEstimate};
use crate::table::Table;

const MEANFIELD_DT: f64 = 1e-4;
const HISTOGRAM_BINS: usize = 40;

struct Sample {
    scaled: Vec<Vec<f64>>,
    estimates: Vec<VarianceEstimate>,
}

fn scaled_martingales(config: &Config, net: &Network, n: u32, seed: u64, exec: Execution) -> Result<Sample> {
    let c = &config.harness.clt;
    let f = config.gain()?;
    let n0 = check_n0(net, &f, n);
    if !n0.holds {
        return Err(Error::BoundaryRates { n, offenders: n0.offenders });
    }
    let initial = ChainState::from_activities(&vec![c.initial; net.populations()], n)?;
    let settings = ChainSettings { horizon: c.horizon, output_points: 2, ..Default::default() };
    let paths = simulate_ensemble(&initial, net, &f, &settings, seed, c.replicas, exec)?;
    let root = (n as f64).sqrt();
    let scaled: Vec<Vec<f64>> = (0..net.populations())
        .map(|k| paths.iter().map(|p| root * p.final_martingale()[k]).collect())
        .collect();
    let estimates = scaled.iter().map(|s| variance_estimate(s)).collect();
    Ok(Sample { scaled, estimates })
}

fn histogram(xs: &[f64]) -> Table {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / HISTOGRAM_BINS as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &x in xs {
        counts[(((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let mut t = Table::new(["centre", "density"]);
    for (i, c) in counts.into_iter().enumerate() {
        t.push(vec![lo + (i as f64 + 0.5) * width, c as f64 / (xs.len() as f64 * width)]);
    }
    t
}

/// Central limit theorem for the martingale part of a single-population chain.
pub fn run_clt(config: &Config, exec: Execution) -> Result<Report> {
    let c = &config.harness.clt;
    let f = config.gain()?;
    let net = Network::from_rows(vec![vec![1.0]])?;
    let seed = config.harness.seed;
    let mut report = Report::new(ExperimentKind::Clt, Provenance::of(config, exec));
    report.inconclusive = c.replicas < config.harness.min_replicas;

    let mf = meanfield::integrate(&[c.initial], &net, &f, c.horizon, MEANFIELD_DT, 2)?;
    let target = mf.bracket.last().expect("nonempty path")[0];
    report.scalar("target_variance", target);

    let main = scaled_martingales(config, &net, c.population_size, seed, exec)?;
    let est = main.estimates[0];
    report.scalar("variance", est.variance);
    report.scalar("variance_stderr", est.stderr);
    if target == 0.0 && est.variance == 0.0 {
        report.rule("variance", true, "balanced start: sqrt(N) M vanishes identically; vacuous");
        report.rule("normality", true, "degenerate at zero; vacuous");
    } else {
        let rel = (est.variance / target - 1.0).abs();
        report.rule(
            "variance",
            rel <= c.variance_tol,
            format!(
                "Var(sqrt(N) M(T)) = {:.5} +- {:.5} vs bracket quadrature {:.5}: relative {:.4} <= {}",
                est.variance, est.stderr, target, rel, c.variance_tol
            ),
        );
        report.scalar("relative_error", rel);
        let ks = ks_normality(&main.scaled[0]);
        report.rule(
            "normality",
            ks.p_value > c.ks_alpha,
            format!("KS statistic {:.5}, p = {:.4} > {}", ks.statistic, ks.p_value, c.ks_alpha),
        );
        report.scalar("ks_statistic", ks.statistic);
        report.scalar("ks_p_value", ks.p_value);
        report.table("histogram", histogram(&main.scaled[0]));
    }

    let p = main.scaled.len();
    let mut worst: f64 = 0.0;
    for k in 0..p {
        for l in k + 1..p {
            let (cov, se) = covariance(&main.scaled[k], &main.scaled[l]);
            worst = worst.max(cov.abs() / se);
        }
    }
    let cross_detail = if p == 1 { "single population; vacuous".to_string() } else { format!("max |cov|/stderr = {worst:.3}") };
    report.rule("cross_covariance", worst <= 3.0, cross_detail);

    let other = scaled_martingales(config, &net, c.compare_size, seed.wrapping_add(1), exec)?;
    let (a, b) = (est, other.estimates[0]);
    let joint = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    report.rule(
        "n_stability",
        (a.variance - b.variance).abs() <= 3.0 * joint,
        format!(
            "N = {}: {:.5}, N = {}: {:.5}, |diff| <= 3 x {:.5}",
            c.population_size, a.variance, c.compare_size, b.variance, joint
        ),
    );
    report.scalar("compare_variance", b.variance);
    Ok(report)
}
