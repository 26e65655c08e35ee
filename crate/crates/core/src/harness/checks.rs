use crate::config::Config;
use crate::diffusion::{simulate_activity, simulate_voltage};
use crate::ensemble::{map_replicas, try_map_replicas, Execution};
use crate::error::Result;
use crate::harness::{list, ExperimentKind, Provenance, Report};
use crate::model::{GainFunction, Network};
use crate::noise::{condition_i_bound, condition_i_norm_sq, CorrelationKernel, NoiseGrid, ReferenceGrid, ReferenceNoise};
use crate::rng::{self, SimRng};
use crate::spde::{condition_ii_at, CoupledSystem, SpdeSettings};
use crate::stats::{loglog_fit, Summary};
use crate::table::Table;
use crate::wave::{solve_profile, WaveProfile};

const WAVE_SPEED_TOL: f64 = 1e-6;
const ANTISYMMETRY_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-8;
const FIXED_POINT_TOL: f64 = 1e-12;
const TAIL_CONSTANT_TOL: f64 = 1e-10;
const STDERR_BAND: f64 = 3.0;
const ITO_REPLICAS: usize = 20;
const LIPSCHITZ_PAIRS: usize = 100;
const DISPERSION_TIMES: [f64; 3] = [0.0, 0.5, 1.0];

fn sup_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

fn antisymmetry_defect(p: &WaveProfile) -> f64 {
    let v = p.values();
    let n = v.len();
    sup_abs((0..n).map(|i| v[i] + v[n - 1 - i] - (p.low() + p.high())))
}

/// Traveling-wave solver, fixed points and kernel tail constant.
pub fn run_wave(config: &Config, exec: Execution) -> Result<Report> {
    let mut report = Report::new(ExperimentKind::Wave, Provenance::of(config, exec));
    let kernel = config.kernel()?;
    let f = config.gain()?;

    let sym = solve_profile(&f, &kernel, &config.wave)?;
    let defect = antisymmetry_defect(&sym);
    report.rule(
        "symmetric_speed",
        sym.speed().abs() < WAVE_SPEED_TOL,
        format!("|c| = {:e} < {WAVE_SPEED_TOL:e} at kappa = {}", sym.speed().abs(), f.kappa()),
    );
    report.rule(
        "antisymmetry",
        defect < ANTISYMMETRY_TOL,
        format!("sup |u(x) + u(-x) - (a1 + a2)| = {defect:e} < {ANTISYMMETRY_TOL:e}"),
    );
    report.scalar("symmetric_speed", sym.speed());
    report.scalar("antisymmetry_defect", defect);

    let g = GainFunction::new(f.gamma(), config.harness.wave.asymmetric_kappa)?;
    let asym = solve_profile(&g, &kernel, &config.wave)?;
    let (l2, bound) = (asym.dx_l2_squared(), asym.dx_l2_bound(&kernel));
    report.rule(
        "asymmetric_residual",
        asym.residual_norm() < RESIDUAL_TOL,
        format!("residual {:e} < {RESIDUAL_TOL:e} at kappa = {}, c = {:.6}", asym.residual_norm(), g.kappa(), asym.speed()),
    );
    report.rule("dx_l2_bound", l2 <= bound, format!("int u_x^2 = {l2:.6} <= (a2/|c| + 1)(a2 - a1) = {bound:.6}"));
    report.scalar("asymmetric_speed", asym.speed());
    report.scalar("asymmetric_residual", asym.residual_norm());
    report.scalar("dx_l2_squared", l2);
    report.scalar("dx_l2_bound", bound);

    let fp = f.fixed_points();
    report.rule(
        "fixed_point_slopes",
        fp.slopes[1] > 1.0 && fp.slopes[0] < 1.0 && fp.slopes[2] < 1.0,
        format!("F'(a1) = {:.12}, F'(a) = {:.12}, F'(a2) = {:.12}", fp.slopes[0], fp.slopes[1], fp.slopes[2]),
    );
    if f.kappa() == 0.5 {
        report.rule(
            "middle_fixed_point",
            (fp.middle - 0.5).abs() <= FIXED_POINT_TOL,
            format!("a = {:.15}, |a - 0.5| = {:e}", fp.middle, (fp.middle - 0.5).abs()),
        );
        report.rule(
            "symmetric_slopes",
            (fp.slopes[1] - f.gamma() / 4.0).abs() <= FIXED_POINT_TOL
                && (fp.slopes[0] - fp.slopes[2]).abs() <= FIXED_POINT_TOL,
            format!("F'(a) = gamma/4 = {}, |F'(a1) - F'(a2)| = {:e}", f.gamma() / 4.0, (fp.slopes[0] - fp.slopes[2]).abs()),
        );
    }
    for (name, v) in [("a1", fp.low), ("a", fp.middle), ("a2", fp.high)] {
        report.scalar(name, v);
    }

    let (scan, exact) = (kernel.tail_constant(), kernel.tail_constant_analytic());
    report.rule(
        "tail_constant",
        (scan - exact).abs() <= TAIL_CONSTANT_TOL,
        format!("scanned C_w = {scan:.14}, closed form {exact:.14}"),
    );
    report.scalar("tail_constant", scan);

    report.table("symmetric_profile", sym.to_table());
    report.table("asymmetric_profile", asym.to_table());
    Ok(report)
}

/// Per-draw products `z_k z_{k+d} / dt` averaged over `k`, for every offset `d <= max_offset`.
fn lag_products(z: &[f64], dt: f64, max_offset: usize) -> Vec<f64> {
    (0..=max_offset)
        .map(|d| {
            let n = z.len() - d;
            (0..n).map(|k| z[k] * z[k + d]).sum::<f64>() / (n as f64 * dt)
        })
        .collect()
}

/// Empirical lag covariances of a sampler against `target(d)` within a stderr band.
fn covariance_match(
    draws: usize,
    max_offset: usize,
    target: impl Fn(usize) -> f64,
    exec: Execution,
    sample: impl Fn(&mut SimRng) -> Result<Vec<f64>> + Sync + Send,
    seed: u64,
    dt: f64,
) -> Result<(bool, f64)> {
    let products = try_map_replicas(exec, draws, |r| {
        let z = sample(&mut rng::stream(seed, r as u64))?;
        Ok(lag_products(&z, dt, max_offset))
    })?;
    let mut worst: f64 = 0.0;
    for d in 0..=max_offset {
        let s = Summary::of(&products.iter().map(|p| p[d]).collect::<Vec<_>>());
        worst = worst.max((s.mean - target(d)).abs() / s.stderr);
    }
    Ok((worst <= STDERR_BAND, worst))
}

/// Covariance, independence and sampler consistency of the level noise, and condition (i).
pub fn noise_checks(config: &Config, exec: Execution) -> Result<Report> {
    let nc = &config.harness.noise;
    let eps = config.noise.epsilon;
    let kernel = CorrelationKernel::boxcar(eps)?;
    let seed = config.harness.seed;
    let mut report = Report::new(ExperimentKind::NoiseChecks, Provenance::of(config, exec));
    report.inconclusive = nc.draws < config.harness.min_replicas;

    let mut table = Table::new(["m", "bandwidth", "covariance_z", "consistency_z", "condition_i", "bound"])
        .with_meta("epsilon", eps)
        .with_meta("draws", nc.draws);
    let reference = ReferenceGrid::new(config.noise.cells_per_unit, nc.half_length + 1)?;
    let reference_noise = ReferenceNoise::build(kernel, reference)?;
    let consistency_draws = (nc.draws / 10).max(config.harness.min_replicas);
    let (mut cond, mut bounds) = (vec![], vec![]);
    let (mut cov_ok, mut cons_ok) = (true, true);
    for (j, &m) in nc.levels.iter().enumerate() {
        let grid = NoiseGrid::build(kernel, m, nc.half_length)?;
        let max_offset = (grid.bandwidth() + 1).min(grid.size() - 1);
        let level_seed = seed.wrapping_add(j as u64);
        let (ok, z) = covariance_match(
            nc.draws,
            max_offset,
            |d| grid.covariance(0, d),
            exec,
            |rng| {
                let mut out = vec![0.0; grid.size()];
                grid.sample_increments(nc.dt, rng, &mut out);
                Ok(out)
            },
            level_seed,
            nc.dt,
        )?;
        cov_ok &= ok;
        reference.check_level(m, nc.half_length)?;
        let (ok2, z2) = covariance_match(
            consistency_draws,
            max_offset,
            |d| grid.covariance(0, d),
            exec,
            |rng| {
                let mut cells = vec![0.0; reference.len()];
                reference_noise.sample(nc.dt, rng, &mut cells);
                let mut out = vec![0.0; grid.size()];
                reference.project_increments(&cells, m, nc.half_length, &mut out)?;
                Ok(out)
            },
            level_seed ^ 0x5a5a,
            nc.dt,
        )?;
        cons_ok &= ok2;
        let (c, b) = (condition_i_norm_sq(&kernel, m), condition_i_bound(&kernel, m));
        cond.push(c);
        bounds.push(b);
        table.push(vec![m as f64, grid.bandwidth() as f64, z, z2, c, b]);
    }
    report.rule(
        "covariance",
        cov_ok,
        format!("lag covariances of sampled increments within {STDERR_BAND} stderr of 4m^2 int int q*q ({} draws)", nc.draws),
    );
    report.rule(
        "sampler_consistency",
        cons_ok,
        format!("Phi^m of reference-cell noise within {STDERR_BAND} stderr of the level covariance ({consistency_draws} draws)"),
    );

    let independent: Vec<usize> = (1..).take_while(|&m| (m as f64) < 1.0 / (4.0 * eps)).collect();
    let mut indep_ok = true;
    for &m in &independent {
        let grid = NoiseGrid::build(kernel, m, nc.half_length)?;
        indep_ok &= grid.bandwidth() == 0 && grid.covariance(0, 1) == 0.0;
    }
    let detail = if independent.is_empty() {
        format!("no m < 1/(4 eps) = {}; vacuous", 1.0 / (4.0 * eps))
    } else {
        format!("covariance exactly diagonal for m in {independent:?}")
    };
    report.rule("independence", indep_ok, detail);

    report.rule(
        "condition_i_bound",
        cond.iter().zip(&bounds).all(|(c, b)| c <= b),
        format!("squared norms {} vs 1/(4 eps^2 m) = {}", list(&cond), list(&bounds)),
    );
    report.rule("condition_i_decreasing", cond.windows(2).all(|w| w[1] < w[0]), format!("squared norms {}", list(&cond)));
    // m -> infinity: doublings beyond the largest tested level
    let top = nc.levels.iter().copied().max().unwrap_or(1);
    let ladder: Vec<usize> = (0..4).map(|i| top << i).collect();
    let tail: Vec<f64> = ladder.iter().map(|&m| condition_i_norm_sq(&kernel, m)).collect();
    let ms: Vec<f64> = ladder.iter().map(|&m| m as f64).collect();
    let fit = loglog_fit(&ms, &tail);
    report.rule(
        "condition_i_rate",
        (fit.slope + 1.0).abs() <= 0.1,
        format!("log-log slope {:.4} over m = {ladder:?} (1/m decay)", fit.slope),
    );
    report.scalar("condition_i_slope", fit.slope);
    report.table("noise", table);
    Ok(report)
}

/// Random smooth perturbation `Σ a_i exp(-(x - x_i)² / 2)` with `|a_i| <= scale`.
fn perturbation(rng: &mut SimRng, scale: f64) -> impl Fn(f64) -> f64 {
    let bumps: Vec<(f64, f64)> = (0..4)
        .map(|_| (scale * (2.0 * rng::uniform(rng) - 1.0), 8.0 * rng::uniform(rng) - 4.0))
        .collect();
    move |x| bumps.iter().map(|(a, c)| a * (-0.5 * (x - c).powi(2)).exp()).sum()
}

fn l2(a: &[f64], b: &[f64], h: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * h).sqrt()
}

/// Dispersion identities, Lipschitz certificates and condition (ii).
pub fn dispersion_checks(config: &Config, exec: Execution) -> Result<Report> {
    let f = GainFunction::new(config.model.gain.gamma, config.harness.continuum.kappa)?;
    let kernel = config.kernel()?;
    let profile = solve_profile(&f, &kernel, &config.wave)?;
    let settings = config.spde.clone();
    let system = CoupledSystem::build(settings.clone(), &config.noise, &profile, &f, &kernel)?;
    let mut report = Report::new(ExperimentKind::Dispersion, Provenance::of(config, exec));
    let c = profile.speed();
    let grid = system.continuum.grid();
    let centres = grid.centres();
    report.scalar("speed", c);
    report.scalar("delta", system.delta());

    // α² F'(u^TW) = c ∂_x u^TW on the support
    let mut identity: f64 = 0.0;
    let mut network_identity: f64 = 0.0;
    let mut lip_continuum: f64 = 0.0;
    let mut lip_levels = vec![0.0f64; system.levels.len()];
    for &t in &DISPERSION_TIMES {
        let co = system.continuum.coefficients(t)?;
        for (i, &x) in centres.iter().enumerate() {
            if co.indicator[i] {
                let w = profile.wave_at(t, x);
                let target = c * profile.wave_dx(t, x);
                identity = identity.max((co.alpha[i].powi(2) * f.deriv1(w) - target).abs() / target);
            }
        }
        lip_continuum = lip_continuum.max(co.lipschitz(&f));
        for (j, level) in system.levels.iter().enumerate() {
            let cm = level.coefficients(t)?;
            let tw = level.wave(t);
            let r = level.drift_uncorrected(&tw, t);
            for k in 0..tw.len() {
                if cm.indicator[k] {
                    network_identity = network_identity.max((cm.alpha[k].powi(2) * f.deriv1(tw[k]) + r[k]).abs() / -r[k]);
                }
            }
            lip_levels[j] = lip_levels[j].max(cm.lipschitz(&f));
        }
    }
    report.rule(
        "alpha_identity",
        identity <= 1e-12 && network_identity <= 1e-12,
        format!("max relative defect: continuum {identity:e}, network {network_identity:e}"),
    );

    // empirical Lipschitz ratios on random near-wave pairs
    let seed = config.harness.seed;
    let ratios = map_replicas(exec, LIPSCHITZ_PAIRS, |r| {
        let mut rng = rng::stream(seed, r as u64);
        let t = rng::uniform(&mut rng) * settings.horizon;
        let (p1, p2) = (perturbation(&mut rng, 0.2), perturbation(&mut rng, 0.2));
        let base = system.continuum.wave(t);
        let u1: Vec<f64> = centres.iter().zip(&base).map(|(&x, b)| b + p1(x)).collect();
        let u2: Vec<f64> = centres.iter().zip(&base).map(|(&x, b)| b + p2(x)).collect();
        let co = system.continuum.coefficients(t).expect("positive speed checked above");
        let s1 = system.continuum.dispersion_with(&u1, t, &co);
        let s2 = system.continuum.dispersion_with(&u2, t, &co);
        let mut out = vec![l2(&s1, &s2, grid.h()) / l2(&u1, &u2, grid.h())];
        for level in &system.levels {
            let nodes = level.nodes();
            let tw = level.wave(t);
            let v1: Vec<f64> = nodes.iter().zip(&tw).map(|(&x, b)| b + p1(x)).collect();
            let v2: Vec<f64> = nodes.iter().zip(&tw).map(|(&x, b)| b + p2(x)).collect();
            let cm = level.coefficients(t).expect("positive speed checked above");
            let (a, b) = (level.dispersion_with(&v1, t, &cm), level.dispersion_with(&v2, t, &cm));
            let hm = 1.0 / level.density() as f64;
            out.push(l2(&a, &b, hm) / l2(&v1, &v2, hm));
        }
        out
    });
    let empirical: Vec<f64> = (0..=system.levels.len())
        .map(|j| ratios.iter().map(|r| r[j]).fold(0.0, f64::max))
        .collect();
    let certified: Vec<f64> = std::iter::once(lip_continuum).chain(lip_levels.iter().copied()).collect();
    let within = empirical.iter().zip(&certified).all(|(e, l)| e <= l);
    report.rule(
        "lipschitz_empirical",
        within,
        format!("max ratios {} <= certificates {}", list(&empirical), list(&certified)),
    );
    let (lo, hi) = certified.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    report.rule(
        "lipschitz_uniform",
        hi <= 2.0 * lo,
        format!("certificates over continuum and m = {:?} within a factor 2: {}", settings.levels, list(&certified)),
    );

    // condition (ii) along a stored noise-off path
    let quiet_system = CoupledSystem::build(
        SpdeSettings { population_size: f64::INFINITY, ..settings.clone() },
        &config.noise,
        &profile,
        &f,
        &kernel,
    )?;
    let path = quiet_system.simulate(&mut rng::stream(seed, 0), false, true)?;
    let cond_ii: Vec<f64> = system
        .levels
        .iter()
        .map(|level| {
            let mut worst: f64 = 0.0;
            for (i, u) in path.snapshots.iter().enumerate().step_by(10) {
                worst = worst.max(condition_ii_at(&system.continuum, level, u, path.times[i])?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    report.rule(
        "condition_ii_decreasing",
        cond_ii.windows(2).all(|w| w[1] < w[0]),
        format!("sup_t ||sigma^m - sigma|| = {}", list(&cond_ii)),
    );

    let mut table = Table::new(["m", "lipschitz", "empirical", "condition_ii"]).with_meta("delta", system.delta());
    table.push(vec![f64::INFINITY, certified[0], empirical[0], 0.0]);
    for (j, &m) in settings.levels.iter().enumerate() {
        table.push(vec![m as f64, certified[j + 1], empirical[j + 1], cond_ii[j]]);
    }
    report.table("dispersion", table);
    Ok(report)
}

/// The voltage SDE with its Ito correction tracks `F^{-1}` of the activity SDE
/// driven by the same increments.
pub fn ito_check(config: &Config, exec: Execution) -> Result<Report> {
    let s = &config.sde;
    let f = config.gain()?;
    let net = Network::from_rows(vec![vec![1.0]])?;
    let u0 = f.inverse(s.initial)?;
    let seed = config.harness.seed;
    let gaps = try_map_replicas(exec, ITO_REPLICAS, |r| {
        let a = simulate_activity(&[s.initial], &net, &f, s.population_size, s.horizon, s.dt, s.output_points, &mut rng::stream(seed, r as u64))?;
        let u = simulate_voltage(&[u0], &net, &f, s.population_size, s.horizon, s.dt, s.output_points, &mut rng::stream(seed, r as u64))?;
        let mut worst: f64 = 0.0;
        for (x, v) in a.states.iter().zip(&u.states) {
            worst = worst.max((f.inverse(x[0])? - v[0]).abs());
        }
        Ok(worst)
    })?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let tol = 5.0 / s.population_size;
    let mut report = Report::new(ExperimentKind::Ito, Provenance::of(config, exec));
    report.rule(
        "ito_consistency",
        worst < tol,
        format!("sup_t |F^-1(a_t) - u_t| = {worst:e} < 5/N = {tol:e} over {ITO_REPLICAS} paths"),
    );
    report.scalar("sup_gap", worst);
    report.scalar("gap_times_n", worst * s.population_size);
    Ok(report)
}
