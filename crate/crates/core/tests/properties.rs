use msde_core::models::{prox_abs, prox_power, AbsSubdifferential, MonotoneLinearDrift, SineMap};
use msde_core::{fit_rate, resolve_step, BrownianPath, DVector, Grid, RateRow, RateTable, StepSolverConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsening_composes_exactly(seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        let grid = Grid::new(1.0, a * b * 8).unwrap();
        let path = BrownianPath::sample(seed, 3, grid, 2).unwrap();
        let once = path.coarsen(a * b).unwrap();
        let twice = path.coarsen(a).unwrap().coarsen(b).unwrap();
        prop_assert_eq!(once.increments(), twice.increments());
        for n in 0..=once.grid().steps() {
            prop_assert_eq!(once.cumulative(n), path.cumulative(n * a * b));
        }
    }

    #[test]
    fn prox_maps_are_nonexpansive(w1 in -20.0f64..20.0, w2 in -20.0f64..20.0, k in 1e-3f64..5.0, p in 1.1f64..4.0) {
        prop_assert!((prox_abs(w1, k).0 - prox_abs(w2, k).0).abs() <= (w1 - w2).abs() + 1e-14);
        prop_assert!((prox_power(w1, k, p).0 - prox_power(w2, k, p).0).abs() <= (w1 - w2).abs() + 1e-10);
    }

    #[test]
    fn implicit_step_satisfies_the_scheme(w in -10.0f64..10.0, k in 1e-3f64..1.5, amp in 0.0f64..0.6) {
        let b = SineMap::new(1, amp);
        let cfg = StepSolverConfig::default();
        let wv = DVector::from_element(1, w);
        let (x, eta) = resolve_step(&wv, k, &AbsSubdifferential, &b, &cfg).unwrap();
        let residual = x[0] + k * eta[0] - k * amp * x[0].sin() - w;
        prop_assert!(residual.abs() <= 1e-9 * (1.0 + w.abs()));
        // η must be a selection of ∂|·|(x).
        if x[0] != 0.0 {
            prop_assert!((eta[0] - x[0].signum()).abs() <= 1e-9);
        } else {
            prop_assert!(eta[0].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn linear_step_is_stable(w1 in -10.0f64..10.0, w2 in -10.0f64..10.0, lb in 0.0f64..2.0) {
        let k = 0.1;
        let drift = MonotoneLinearDrift::scalar(1.0).unwrap();
        let b = msde_core::models::LinearMap::scalar(lb);
        let cfg = StepSolverConfig::default();
        let (x1, _) = resolve_step(&DVector::from_element(1, w1), k, &drift, &b, &cfg).unwrap();
        let (x2, _) = resolve_step(&DVector::from_element(1, w2), k, &drift, &b, &cfg).unwrap();
        prop_assert!((x1[0] - x2[0]).abs() <= (w1 - w2).abs() / (1.0 - k * lb) + 1e-8);
    }

    #[test]
    fn fit_recovers_power_laws(c in 1e-3f64..1e3, order in 0.0f64..2.0) {
        let rows = (4..9)
            .map(|j| {
                let k = 2f64.powi(-j);
                RateRow { k, rms_error: c * k.powf(order), mc_se: 0.0, paths: 1 }
            })
            .collect();
        let table = RateTable { rows, k_ref: 2f64.powi(-12), horizon: 1.0, fit: None, gates: Vec::new() };
        let fit = fit_rate(&table).unwrap();
        prop_assert!((fit.slope - order).abs() < 1e-9);
        prop_assert!((fit.intercept - c.log2()).abs() < 1e-8);
    }
}
