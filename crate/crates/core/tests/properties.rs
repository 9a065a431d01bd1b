use conelab::analysis::{fit_tail_values, FitMode};
use conelab::cramer::solve_cramer_point;
use conelab::dp::{check_tilt_identity, dp_evolve, DpOptions};
use conelab::model::{ConeSpec, StepLaw};
use conelab::simulate::{is_survival, mc_survival, McConfig};
use proptest::prelude::*;

/// Nearest-neighbour laws with drift into the third quadrant.
fn drifted_nn() -> impl Strategy<Value = StepLaw> {
    (0.05f64..1.0, 1.05f64..3.0, 0.05f64..1.0, 1.05f64..3.0).prop_map(|(a, ra, b, rb)| {
        let w = [a, a * ra, b, b * rb];
        let total: f64 = w.iter().sum();
        StepLaw::from_pairs([
            (vec![1, 0], w[0] / total),
            (vec![-1, 0], w[1] / total),
            (vec![0, 1], w[2] / total),
            (vec![0, -1], 1.0 - (w[0] + w[1] + w[2]) / total),
        ])
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cramer_point_centres_the_tilted_law(law in drifted_nn()) {
        let cd = solve_cramer_point(&law).unwrap();
        prop_assert!(cd.c > 0.0 && cd.c < 1.0);
        prop_assert!(cd.h.iter().all(|&v| v > 0.0));
        for m in cd.tilted.mean() {
            prop_assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn survival_is_a_decreasing_probability(law in drifted_nn(), x in 1i64..5, y in 1i64..5) {
        let s = dp_evolve(&law, &ConeSpec::orthant(2), &[x, y], 30, 1.0, &DpOptions::new(40)).unwrap();
        prop_assert_eq!(s.survival[0], 1.0);
        for n in 1..=30 {
            prop_assert!(s.survival[n] <= s.survival[n - 1] + 1e-15);
            prop_assert!(s.survival[n] >= 0.0);
            let drop = s.survival[n - 1] - s.survival[n];
            prop_assert!((drop - s.exit[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn tilt_identity_is_exact(law in drifted_nn(), x in 1i64..4, y in 1i64..4) {
        let cd = solve_cramer_point(&law).unwrap();
        let err = check_tilt_identity(&law, &cd, &ConeSpec::orthant(2), &[x, y], 12, 20).unwrap();
        prop_assert!(err < 1e-12, "error {}", err);
    }

    #[test]
    fn importance_weights_are_bounded(seed in any::<u64>(), x in 1i64..4) {
        // inside the quadrant h·y > 0, so each weight is below cⁿ e^{h·x0}
        let law = conelab::model::nn4();
        let cd = solve_cramer_point(&law).unwrap();
        let n = 15;
        let cfg = McConfig::new(2000, seed, 2);
        let est = is_survival(&cd, &ConeSpec::orthant(2), &[x, x], n, &cfg).unwrap();
        let bound = cd.c.powi(n as i32) * (cd.h[0] * x as f64 + cd.h[1] * x as f64).exp();
        prop_assert!(est.value >= 0.0 && est.value <= bound);
    }

    #[test]
    fn estimators_reproduce_for_a_seed(seed in any::<u64>(), workers in 1usize..5) {
        let law = conelab::model::nn4();
        let cone = ConeSpec::orthant(2);
        let cfg = McConfig::new(3000, seed, workers);
        let a = mc_survival(&law, &cone, &[2, 2], 10, &cfg).unwrap();
        let b = mc_survival(&law, &cone, &[2, 2], 10, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fit_recovers_synthetic_power_laws(s in 1.0f64..4.0, a in 0.1f64..10.0, c in 0.5f64..0.99) {
        let b: Vec<f64> = (0..=400).map(|n| a * (n.max(1) as f64).powf(-s)).collect();
        let f = fit_tail_values(&b, c, FitMode::Drifted, 50, 400, 1).unwrap();
        prop_assert!((f.exponent_hat - s).abs() < 1e-6);
        prop_assert!((f.constant_hat - a).abs() < 1e-6 * a);
        prop_assert!((f.c_hat - c).abs() < 1e-9);
        prop_assert!(f.monotone);
    }
}
