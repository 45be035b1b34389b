use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

use uqmon_core::eval::{
    auc_roc, confusion, f_beta, mann_whitney_u, DetectionWindowSet, PositiveWindow, Window,
};
use uqmon_core::monitor::{fit_gamma, threshold_for, window_scores, GammaModel, MonitorState};
use uqmon_core::nnet::{init_regressor, Activation, Layer, Regressor};
use uqmon_core::rng_from_seed;
use uqmon_core::uq::{de_estimate, mcd_estimate, Ensemble, McdConfig};

fn window_set(pos: &[f64], neg: &[f64]) -> DetectionWindowSet {
    let w = |s| Window {
        start: 0,
        end: 1,
        max_score: s,
    };
    DetectionWindowSet {
        positives: pos
            .iter()
            .map(|&s| PositiveWindow {
                failure_frame: 0,
                ttf: 1,
                window: w(s),
            })
            .collect(),
        negatives: neg.iter().map(|&s| w(s)).collect(),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn online_monitor_matches_offline(
        scores in prop::collection::vec(0.0f64..5.0, 1..200),
        w in 1usize..12,
        tau in 0.0f64..5.0,
    ) {
        // Exponential model with the threshold moved to `tau`.
        let mut model = GammaModel::new(1.0, 1.0, 0.9).unwrap();
        model.threshold = tau;
        let offline: Vec<bool> = window_scores(&scores, w).unwrap().iter().map(|&m| m > tau).collect();
        let mut state = MonitorState::new(w, model).unwrap();
        let online: Vec<bool> = scores.iter().filter_map(|&s| state.step(s).unwrap()).collect();
        prop_assert_eq!(offline, online);
    }

    #[test]
    fn threshold_monotone_and_scale_equivariant(
        shape in 0.2f64..40.0,
        scale in 1e-3f64..10.0,
        c in 0.01f64..100.0,
        g1 in 0.5f64..0.99999,
        g2 in 0.5f64..0.99999,
    ) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let t_lo = threshold_for(shape, scale, lo).unwrap();
        let t_hi = threshold_for(shape, scale, hi).unwrap();
        prop_assert!(t_lo <= t_hi);
        let scaled = threshold_for(shape, c * scale, hi).unwrap();
        prop_assert!((scaled - c * t_hi).abs() <= 1e-10 * scaled.abs().max(1e-300));
    }

    #[test]
    fn threshold_matches_independent_quantile(shape in 0.3f64..30.0, scale in 0.01f64..5.0, gamma in 0.5f64..0.9999) {
        let oracle = Gamma::new(shape, 1.0 / scale).unwrap().inverse_cdf(gamma);
        let ours = threshold_for(shape, scale, gamma).unwrap();
        prop_assert!((ours - oracle).abs() <= 1e-6 * oracle, "ours {ours} oracle {oracle}");
    }

    #[test]
    fn gamma_fit_is_scale_equivariant(
        samples in prop::collection::vec(0.01f64..10.0, 30..120),
        c in 0.01f64..100.0,
    ) {
        let base = match fit_gamma(&samples) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let scaled: Vec<f64> = samples.iter().map(|x| x * c).collect();
        let fit = fit_gamma(&scaled).unwrap();
        prop_assert!((fit.shape - base.shape).abs() <= 1e-7 * base.shape);
        prop_assert!((fit.scale - c * base.scale).abs() <= 1e-7 * c * base.scale);
    }

    #[test]
    fn f_beta_is_monotone(pr in 0.0f64..1.0, re in 0.0f64..1.0, dp in 0.0f64..1.0, dr in 0.0f64..1.0, beta in 0.1f64..5.0) {
        let base = f_beta(pr, re, beta).unwrap();
        prop_assert!(f_beta((pr + dp).min(1.0), re, beta).unwrap() >= base - 1e-15);
        prop_assert!(f_beta(pr, (re + dr).min(1.0), beta).unwrap() >= base - 1e-15);
    }

    #[test]
    fn alarms_decrease_with_threshold(
        pos in prop::collection::vec(0.0f64..1.0, 0..30),
        neg in prop::collection::vec(0.0f64..1.0, 0..30),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let set = window_set(&pos, &neg);
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let a = confusion(&set, lo, 1);
        let b = confusion(&set, hi, 1);
        prop_assert!(b.tp + b.fp <= a.tp + a.fp);
        prop_assert_eq!(a.tp + a.fn_, pos.len());
        prop_assert_eq!(a.fp + a.tn, neg.len());
    }

    #[test]
    fn auc_equals_normalised_u(
        pos in prop::collection::vec(0u8..20, 2..25),
        neg in prop::collection::vec(0u8..20, 2..25),
    ) {
        // Small integer values force ties.
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let auc = auc_roc(&pos, &neg).unwrap();
        let u = mann_whitney_u(&pos, &neg).unwrap().u;
        prop_assert!((auc - u / (pos.len() * neg.len()) as f64).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_p_is_symmetric(
        a in prop::collection::vec(-5.0f64..5.0, 2..25),
        b in prop::collection::vec(-5.0f64..5.0, 2..25),
    ) {
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
    }

    #[test]
    fn ensemble_is_permutation_invariant(seeds in prop::collection::btree_set(0u64..1000, 2..6), shift in 0usize..5) {
        let members: Vec<Regressor> = seeds.iter().map(|&s| init_regressor(&[9, 8, 1], 0.1, s).unwrap()).collect();
        let mut rotated = members.clone();
        let k = shift % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let input = [0.1, -0.2, 0.3, 0.0, 0.5, -0.4, 0.2, 0.1, -0.05];
        let a = de_estimate(&Ensemble::new(members).unwrap(), &input).unwrap();
        let b = de_estimate(&Ensemble::new(rotated).unwrap(), &input).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }
}

#[test]
fn inverted_dropout_preserves_the_mean_of_linear_nets() {
    let mut rng = rng_from_seed(3);
    let dims = vec![3, 6, 4, 1];
    let layers: Vec<Layer> = dims
        .windows(2)
        .map(|io| {
            let mut l = Layer::zeros(io[0], io[1]);
            l.weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-1.0..1.0));
            l.bias
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
            l
        })
        .collect();
    let model = Regressor::from_parts(dims, layers, Activation::Identity, 0.3, 0).unwrap();
    let input = [0.4, -0.7, 1.1];
    let exact = model.predict(&input).unwrap();
    let est = mcd_estimate(&model, &input, &McdConfig::new(200_000), &mut rng).unwrap();
    let se = (est.variance / 200_000.0).sqrt();
    assert!(
        (est.mean - exact).abs() < 5.0 * se,
        "mean {} vs {exact} (se {se})",
        est.mean
    );
}

#[test]
fn mcd_mean_spread_shrinks_with_samples() {
    let model = init_regressor(&[9, 32, 16, 1], 0.3, 11).unwrap();
    let input = [0.3, 0.2, 0.1, 0.0, -0.1, -0.2, -0.3, -0.4, 0.05];
    let spread = |s: usize| {
        let mut rng = rng_from_seed(s as u64);
        let means: Vec<f64> = (0..400)
            .map(|_| {
                mcd_estimate(&model, &input, &McdConfig::new(s), &mut rng)
                    .unwrap()
                    .mean
            })
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / means.len() as f64
    };
    let (v2, v32, v128) = (spread(2), spread(32), spread(128));
    assert!(v2 > v32 && v32 > v128, "{v2} {v32} {v128}");
}
