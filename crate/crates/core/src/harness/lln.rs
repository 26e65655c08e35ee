use crate::config::Config;
use crate::ensemble::Execution;
use crate::error::{Error, Result};
use crate::harness::{list, ExperimentKind, Provenance, Report};
use crate::jumpchain::{check_n0, simulate_ensemble, BoundaryPolicy, ChainSettings, ChainState, PathRecord};
use crate::meanfield;
use crate::model::Network;
use crate::stats::{loglog_fit, Summary};
use crate::table::Table;

const MEANFIELD_DT: f64 = 1e-3;

/// `max_t ||X_t - x_t||_2` over the common output grid.
fn sup_distance(path: &PathRecord, reference: &[Vec<f64>]) -> f64 {
    path.states
        .iter()
        .zip(reference)
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Largest defect of `x_t = x_0 + D_t + M_t` and largest off-diagonal realized covariation.
fn decomposition_defects(paths: &[PathRecord]) -> (f64, f64) {
    let mut identity: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for path in paths {
        let x0 = &path.states[0];
        for i in 0..path.times.len() {
            for k in 0..x0.len() {
                let rebuilt = x0[k] + path.drift_integrals[i][k] + path.martingale[i][k];
                identity = identity.max((path.states[i][k] - rebuilt).abs());
            }
        }
        let p = path.populations();
        for k in 0..p {
            for l in 0..p {
                if k != l {
                    cross = cross.max(path.covariation[k * p + l].abs());
                }
            }
        }
    }
    (identity, cross)
}

/// Law of large numbers: the chain approaches the mean-field ODE at rate `N^{-1/2}`.
pub fn run_lln(config: &Config, exec: Execution) -> Result<Report> {
    let c = &config.chain;
    let f = config.gain()?;
    let kernel = config.kernel()?;
    let net = Network::ring(&kernel, c.populations)?;
    let smallest = c.sizes[0];
    let n0 = check_n0(&net, &f, smallest);
    if !n0.holds && c.policy == BoundaryPolicy::Error {
        return Err(Error::BoundaryRates { n: smallest, offenders: n0.offenders });
    }
    let settings = ChainSettings { horizon: c.horizon, output_points: c.output_points, policy: c.policy, rates: c.rates };
    let seed = config.harness.seed;

    let mut report = Report::new(ExperimentKind::Lln, Provenance::of(config, exec));
    report.inconclusive = c.replicas < config.harness.min_replicas;
    let mut table = Table::new(["N", "error", "stderr"]).with_meta("replicas", c.replicas);
    let (mut ns, mut errs, mut ses) = (vec![], vec![], vec![]);
    let mut defects = (0.0, 0.0);
    for (i, &n) in c.sizes.iter().enumerate() {
        let initial = ChainState::from_activities(&c.initial, n)?;
        let x0 = initial.activities();
        let mf = meanfield::integrate(&x0, &net, &f, c.horizon, MEANFIELD_DT, c.output_points)?;
        let paths = simulate_ensemble(&initial, &net, &f, &settings, seed.wrapping_add(i as u64), c.replicas, exec)?;
        if i == 0 {
            defects = decomposition_defects(&paths);
        }
        let d: Vec<f64> = paths.iter().map(|p| sup_distance(p, &mf.states)).collect();
        let s = Summary::of(&d);
        table.push(vec![n as f64, s.mean, s.stderr]);
        ns.push(n as f64);
        errs.push(s.mean);
        ses.push(s.stderr);
    }
    report.table("lln", table);

    let degenerate = errs.iter().all(|e| *e == 0.0);
    if degenerate {
        report.rule("slope", true, "all errors vanish (balanced start); vacuous");
    } else {
        let fit = loglog_fit(&ns, &errs);
        let (lo, hi) = (config.harness.lln.slope_min, config.harness.lln.slope_max);
        report.rule(
            "slope",
            (lo..=hi).contains(&fit.slope),
            format!("slope {:.4} (CI {:.4}..{:.4}) in [{lo}, {hi}]", fit.slope, fit.ci_low, fit.ci_high),
        );
        report.scalar("slope", fit.slope);
        report.scalar("slope_ci_low", fit.ci_low);
        report.scalar("slope_ci_high", fit.ci_high);
    }
    let monotone = (1..errs.len()).all(|i| errs[i] <= errs[i - 1] + ses[i] + ses[i - 1]);
    report.rule("monotone", monotone, format!("errors {} nonincreasing within one stderr each", list(&errs)));
    report.rule(
        "decomposition_exact",
        defects.0 <= 1e-12,
        format!("max |x - x0 - D - M| = {:e} over {} paths at N = {smallest}", defects.0, c.replicas),
    );
    report.rule("cross_covariation_zero", defects.1 == 0.0, format!("max |[M_k, M_l]| = {:e}", defects.1));
    report.scalar("decomposition_defect", defects.0);
    report.scalar("cross_covariation", defects.1);
    Ok(report)
}
