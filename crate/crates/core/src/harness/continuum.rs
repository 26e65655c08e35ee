use crate::config::Config;
use crate::ensemble::{try_map_replicas, Execution};
use crate::error::Result;
use crate::harness::{list, ExperimentKind, Provenance, Report};
use crate::model::GainFunction;
use crate::noise::condition_i_norm_sq;
use crate::rng;
use crate::spde::{condition_ii_at, CoupledPath, CoupledSystem, SpdeSettings};
use crate::stats::{loglog_fit, Summary};
use crate::table::Table;
use crate::wave::{solve_profile, WaveProfile};

/// Output times between condition-(ii) evaluations along a stored path.
const CONDITION_II_STRIDE: usize = 10;

/// Everything the continuum run produced, beyond the report.
#[derive(Debug, Clone)]
pub struct ContinuumOutcome {
    pub report: Report,
    pub profile: WaveProfile,
    pub levels: Vec<usize>,
    /// `samples[r][j]`: `sup_t ||u^m_t - u_t||^p` of replica `r` at level `j`.
    pub samples: Vec<Vec<f64>>,
    /// Noise-off coupled path with continuum snapshots.
    pub quiet: CoupledPath,
}

struct Replica {
    sup_p: Vec<f64>,
    deviation: f64,
}

fn sup(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |a, b| a.max(*b))
}

/// `sup_t ||σ^m(t, u_t 1) - σ(t, u_t)||` per level along the snapshots of `path`.
fn condition_ii(system: &CoupledSystem<'_>, path: &CoupledPath) -> Result<Vec<f64>> {
    system
        .levels
        .iter()
        .map(|level| {
            let mut worst: f64 = 0.0;
            for (i, u) in path.snapshots.iter().enumerate().step_by(CONDITION_II_STRIDE) {
                worst = worst.max(condition_ii_at(&system.continuum, level, u, path.times[i])?);
            }
            Ok(worst)
        })
        .collect()
}

/// Terms of the remainder `R(t, v_t, m)` per level, evaluated on a stored path
/// with continuum snapshots.
///
/// Columns: the `1/m²` term `(sup ||v||² + ||û_x||² + ||û_xx||²) / m²`, the
/// tails `sup_t ∫_{|x| ≥ L^m} v_t²` and `sup_t ∫_{|x| ≥ L^m} (∂_x u^TW_t)²`,
/// the squared condition-(i) norm and the condition-(ii) distance.
pub fn error_budget(system: &CoupledSystem<'_>, profile: &WaveProfile, path: &CoupledPath) -> Result<Table> {
    let grid = system.continuum.grid();
    let h = grid.h();
    let centres = grid.centres();
    let ux = profile.dx_l2_squared();
    let uxx = profile.nodes().iter().map(|&x| profile.profile_dxx(x).powi(2)).sum::<f64>() * profile.h();
    let v_sup = sup(&path.deviation).powi(2);
    let kernel = system.noise.kernel();
    let eps = kernel.epsilon();
    let cond_ii = condition_ii(system, path)?;

    let mut table = Table::new(["m", "L", "inverse_square", "tail_v", "tail_wave", "condition_i", "condition_ii"])
        .with_meta("epsilon", eps)
        .with_meta("delta", system.delta());
    for (j, level) in system.levels.iter().enumerate() {
        let (m, l) = (level.density(), level.half_length() as f64);
        let outside = |x: f64| x.abs() >= l;
        let mut tail_v: f64 = 0.0;
        let mut tail_w: f64 = 0.0;
        for (i, u) in path.snapshots.iter().enumerate() {
            let t = path.times[i];
            let wave = system.continuum.wave(t);
            let (mut sv, mut sw) = (0.0, 0.0);
            for (k, &x) in centres.iter().enumerate() {
                if outside(x) {
                    sv += (u[k] - wave[k]).powi(2);
                    sw += profile.wave_dx(t, x).powi(2);
                }
            }
            tail_v = tail_v.max(sv * h);
            tail_w = tail_w.max(sw * h);
        }
        let mf = m as f64;
        table.push(vec![
            mf,
            l,
            (v_sup + ux + uxx) / (mf * mf),
            tail_v,
            tail_w,
            condition_i_norm_sq(kernel, m),
            cond_ii[j],
        ]);
    }
    Ok(table)
}

fn summarize(samples: &[Vec<f64>], levels: usize) -> (Vec<Summary>, Vec<Summary>) {
    let per_level: Vec<Summary> = (0..levels)
        .map(|j| Summary::of(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect();
    let paired: Vec<Summary> = (1..levels)
        .map(|j| Summary::of(&samples.iter().map(|s| s[j - 1] - s[j]).collect::<Vec<_>>()))
        .collect();
    (per_level, paired)
}

/// Strong continuum limit: the embedded network approaches the stochastic
/// field on a common noise realization as the density grows.
pub fn run_continuum(config: &Config, exec: Execution) -> Result<ContinuumOutcome> {
    let hc = &config.harness.continuum;
    let f = GainFunction::new(config.model.gain.gamma, hc.kappa)?;
    let kernel = config.kernel()?;
    let profile = solve_profile(&f, &kernel, &config.wave)?;
    let settings = config.spde.clone();
    let levels = settings.levels.clone();
    let system = CoupledSystem::build(settings.clone(), &config.noise, &profile, &f, &kernel)?;
    let quiet_system = CoupledSystem::build(
        SpdeSettings { population_size: f64::INFINITY, ..settings.clone() },
        &config.noise,
        &profile,
        &f,
        &kernel,
    )?;
    let seed = config.harness.seed;
    let p = hc.moment;

    let mut report = Report::new(ExperimentKind::Continuum, Provenance::of(config, exec));
    report.inconclusive = hc.replicas < config.harness.min_replicas;
    report.scalar("speed", profile.speed());
    report.scalar("delta", system.delta());
    report.scalar("population_size", settings.population_size);

    let quiet = quiet_system.simulate(&mut rng::stream(seed, 0), false, true)?;
    let deterministic = quiet.sup_power(p);
    let budget = error_budget(&system, &profile, &quiet)?;

    let replicas: Vec<Replica> = try_map_replicas(exec, hc.replicas, |r| {
        let path = system.simulate(&mut rng::stream(seed, r as u64), true, false)?;
        Ok(Replica { sup_p: path.sup_power(p), deviation: sup(&path.deviation) })
    })?;
    let samples: Vec<Vec<f64>> = replicas.iter().map(|r| r.sup_p.clone()).collect();
    let (stats, paired) = summarize(&samples, levels.len());
    let e: Vec<f64> = stats.iter().map(|s| s.mean).collect();

    let mut table = Table::new(["m", "L", "E", "stderr", "deterministic", "condition_i", "condition_ii"])
        .with_meta("replicas", hc.replicas)
        .with_meta("p", p)
        .with_meta("epsilon", config.noise.epsilon)
        .with_meta("delta", system.delta())
        .with_meta("N", settings.population_size);
    for (j, &m) in levels.iter().enumerate() {
        let row = &budget.rows[j];
        table.push(vec![m as f64, row[1], e[j], stats[j].stderr, deterministic[j], row[5], row[6]]);
        report.scalar(&format!("E_{m}"), e[j]);
        report.scalar(&format!("E_{m}_stderr"), stats[j].stderr);
        report.scalar(&format!("deterministic_{m}"), deterministic[j]);
        report.scalar(&format!("condition_ii_{m}"), row[6]);
    }

    let strict = paired.iter().all(|d| d.mean > d.stderr);
    let gaps: Vec<String> = paired
        .iter()
        .zip(levels.windows(2))
        .map(|(d, w)| format!("E_{} - E_{} = {:.3e} +- {:.1e}", w[0], w[1], d.mean, d.stderr))
        .collect();
    report.rule("strictly_decreasing", strict, format!("paired differences beyond one stderr: {}", gaps.join(", ")));
    let (first, last) = (e[0], e[e.len() - 1]);
    report.rule(
        "terminal_fraction",
        last <= hc.fraction * first,
        format!("E_{} = {last:.4e} <= {} x E_{} = {:.4e}", levels[levels.len() - 1], hc.fraction, levels[0], hc.fraction * first),
    );
    let det_decreasing = deterministic.windows(2).all(|w| w[1] < w[0]);
    report.rule("deterministic_decreasing", det_decreasing, format!("noise-off sup errors {}", list(&deterministic)));

    let cond_ii: Vec<f64> = budget.rows.iter().map(|r| r[6]).collect();
    report.rule(
        "condition_ii_decreasing",
        cond_ii.windows(2).all(|w| w[1] < w[0]),
        format!("sup_t ||sigma^m - sigma|| along the noise-off path: {}", list(&cond_ii)),
    );

    // moment boundedness of the continuum deviation
    let dev: Vec<f64> = replicas.iter().map(|r| r.deviation).collect();
    let m2 = Summary::of(&dev.iter().map(|d| d * d).collect::<Vec<_>>());
    let m4 = Summary::of(&dev.iter().map(|d| d.powi(4)).collect::<Vec<_>>());
    report.scalar("deviation_moment_2", m2.mean);
    report.scalar("deviation_moment_4", m4.mean);
    report.rule(
        "moments_finite",
        m2.mean.is_finite() && m4.mean.is_finite(),
        format!("E sup ||u - u^TW||^2 = {:.4e}, ^4 = {:.4e}", m2.mean, m4.mean),
    );

    budget_rules(&mut report, &budget, &e);
    report.table("continuum", table);
    report.table("budget", budget);
    Ok(ContinuumOutcome { report, profile, levels, samples, quiet })
}

fn budget_rules(report: &mut Report, budget: &Table, e: &[f64]) {
    let col = |c: usize| budget.rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let (ms, inv) = (col(0), col(2));
    let fit = loglog_fit(&ms, &inv);
    report.scalar("inverse_square_slope", fit.slope);
    report.rule("inverse_square_slope", (fit.slope + 2.0).abs() < 1e-9, format!("slope {:.12}", fit.slope));
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let (tv, tw) = (col(3), col(4));
    report.rule("tails_monotone", monotone(&tv) && monotone(&tw), format!("v tails {}, wave tails {}", list(&tv), list(&tw)));
    let dominant: Vec<f64> = budget.rows.iter().map(|r| r[2..].iter().fold(0.0f64, |a, b| a.max(*b))).collect();
    let linked = (1..e.len()).all(|j| e[j] / e[0] <= 10.0 * dominant[j] / dominant[0]);
    report.rule(
        "budget_linkage",
        linked,
        format!("E_m / E_first within 10x of dominant term ratio; dominant terms {}", list(&dominant)),
    );
}
