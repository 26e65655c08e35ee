use proptest::prelude::*;

use neurofield::ensemble::{map_replicas, Execution};
use neurofield::jumpchain::{simulate, BoundaryPolicy, ChainSettings, ChainState};
use neurofield::model::{GainFunction, Network, SynapticKernel};
use neurofield::noise::{condition_i_norm_sq, CorrelationKernel, NoiseGrid};
use neurofield::rng;
use neurofield::stats::loglog_fit;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gain_inverse_round_trips(gamma in 6.0f64..20.0, kappa in 0.3f64..0.7, y in 0.001f64..0.999) {
        let f = GainFunction::new(gamma, kappa);
        prop_assume!(f.is_ok());
        let f = f.unwrap();
        let u = f.inverse(y).unwrap();
        prop_assert!((f.eval(u) - y).abs() < 1e-10);
        prop_assert!(f.deriv1(u) > 0.0);
    }

    #[test]
    fn kernel_mass_is_one_and_tail_decreasing(sigma in 0.2f64..5.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        for w in [SynapticKernel::exponential(sigma).unwrap(), SynapticKernel::gaussian(sigma).unwrap()] {
            prop_assert!((w.mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-12);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(w.tail(hi) <= w.tail(lo) + 1e-15);
            prop_assert!((w.eval(a) - w.eval(-a)).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_i_matches_closed_form(eps in 0.05f64..2.0, m in 1usize..64) {
        let q = CorrelationKernel::boxcar(eps).unwrap();
        prop_assume!(1.0 / (2.0 * m as f64) <= eps);
        let exact = 11.0 / (24.0 * eps * eps * m as f64);
        prop_assert!((condition_i_norm_sq(&q, m) - exact).abs() <= 1e-3 * exact);
    }

    #[test]
    fn noise_covariance_is_symmetric(eps in 0.1f64..1.0, m in 1usize..8, k in 0usize..20, l in 0usize..20) {
        let noise = NoiseGrid::build(CorrelationKernel::boxcar(eps).unwrap(), m, 2).unwrap();
        let (k, l) = (k % noise.size(), l % noise.size());
        prop_assert_eq!(noise.covariance(k, l), noise.covariance(l, k));
        prop_assert!(noise.covariance(k, k) > 0.0);
    }

    #[test]
    fn jump_chain_stays_on_lattice(seed in any::<u64>(), n in 10u32..200, x in prop::collection::vec(0.1f64..0.9, 1..5)) {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        let net = Network::ring(&SynapticKernel::exponential(1.0).unwrap(), x.len()).unwrap();
        let initial = ChainState::from_activities(&x, n).unwrap();
        let settings = ChainSettings { horizon: 0.5, output_points: 11, policy: BoundaryPolicy::Clamp, ..Default::default() };
        let path = simulate(&initial, &net, &f, &settings, &mut rng::stream(seed, 0)).unwrap();
        for (i, state) in path.states.iter().enumerate() {
            for (k, &v) in state.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!((v * n as f64 - (v * n as f64).round()).abs() < 1e-9);
                let rebuilt = path.states[0][k] + path.drift_integrals[i][k] + path.martingale[i][k];
                prop_assert!((v - rebuilt).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replica_order_is_schedule_independent(seed in any::<u64>(), count in 1usize..64) {
        let draw = |r: usize| rng::normal(&mut rng::stream(seed, r as u64));
        let seq = map_replicas(Execution::Sequential, count, draw);
        let par = map_replicas(Execution::Parallel, count, draw);
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn loglog_fit_recovers_power_laws(p in -3.0f64..3.0, c in 0.1f64..10.0) {
        let x: Vec<f64> = (1..8).map(|i| (1u32 << i) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
        let fit = loglog_fit(&x, &y);
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }
}
