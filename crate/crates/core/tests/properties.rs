use std::sync::Arc;

use condwalk::accuracy::{ci_bar, HermiteExpansion};
use condwalk::density::{evaluate_path, normalize, path_log_density, step_log_density, step_params, RunSpec};
use condwalk::model::{CenteredExponential, ModelRef, NormalSquare, SourceModel, StandardNormal};
use condwalk::quad::{integrate, log_integrate};
use condwalk::sampler::{sample_path, SamplerConfig};
use condwalk::tilted::{cumulants_at, invert_m, tilt_log_density};
use proptest::prelude::*;

fn models() -> [ModelRef; 3] {
    [
        Arc::new(StandardNormal),
        Arc::new(CenteredExponential),
        Arc::new(NormalSquare),
    ]
}

/// Maps a unit draw onto a target strictly inside the range of `m`.
fn target_for(model: &dyn SourceModel, u: f64) -> f64 {
    match model.name() {
        "normal" => -5.0 + 10.0 * u,
        "centered_exponential" => -0.95 + 10.0 * u,
        _ => 0.05 + 10.0 * u,
    }
}

fn integration_range(model: &dyn SourceModel, t: f64) -> (f64, f64) {
    match model.name() {
        "normal" => (t - 14.0, t + 14.0),
        "centered_exponential" => (-1.0, -1.0 + 60.0 / (1.0 - t)),
        _ => {
            let sd = (1.0 / (1.0 - 2.0 * t)).sqrt();
            (-14.0 * sd, 14.0 * sd)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inversion_recovers_target(u in 0.0f64..1.0, which in 0usize..3) {
        let model = &models()[which];
        let target = target_for(model.as_ref(), u);
        let t = invert_m(model.as_ref(), target).unwrap();
        let m = cumulants_at(model.as_ref(), t).unwrap().m;
        prop_assert!((m - target).abs() <= 1e-10 * target.abs().max(1.0), "m = {m}, target = {target}");
    }

    #[test]
    fn inversion_is_monotone(u in 0.0f64..0.99, du in 1e-3f64..0.01, which in 0usize..3) {
        let model = &models()[which];
        let lo = invert_m(model.as_ref(), target_for(model.as_ref(), u)).unwrap();
        let hi = invert_m(model.as_ref(), target_for(model.as_ref(), u + du)).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn hermite_polynomials_have_parity(s2 in 0.1f64..5.0, mu3 in -3.0f64..3.0, z in 0.0f64..4.0) {
        let h = HermiteExpansion::from_moments(s2, mu3, 3.0 * s2 * s2 + 1.0, 4);
        prop_assert!(h.p3(0.0).abs() < 1e-15);
        prop_assert!((h.p3(z) + h.p3(-z)).abs() <= 1e-12 * h.p3(z).abs().max(1.0));
        prop_assert!((h.p4(z) - h.p4(-z)).abs() <= 1e-12 * h.p4(z).abs().max(1.0));
        let slope = (h.p4(1e-5) - h.p4(-1e-5)) / 2e-5;
        prop_assert!(slope.abs() < 1e-8);
    }

    #[test]
    fn ci_bar_variance_identity(a_hat in 0.5f64..3.0, b_hat in 0.5f64..1.5) {
        let ci = ci_bar(a_hat, b_hat);
        prop_assert_eq!(ci.vre_bar, a_hat - b_hat * b_hat);
        prop_assert!(ci.ci_lo <= ci.ere_bar && ci.ere_bar <= ci.ci_hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tilted_laws_are_normalized(u in 0.0f64..1.0, which in 0usize..3) {
        let model = &models()[which];
        let t = invert_m(model.as_ref(), target_for(model.as_ref(), u * 0.3)).unwrap();
        let (lo, hi) = integration_range(model.as_ref(), t);
        let mass = integrate(|x| tilt_log_density(model.as_ref(), t, x).map(f64::exp).unwrap_or(0.0), lo, hi, 1e-10).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {mass} at t = {t}");
    }

    #[test]
    fn steps_integrate_to_one(i in 0usize..40, drift in -1.0f64..1.0, which in 0usize..3) {
        let model = models()[which].clone();
        let spec = RunSpec::new(model.clone(), 50, 45, 0.3).unwrap();
        let partial_sum = i as f64 * spec.mu() + drift * (i as f64).sqrt();
        let mut step = step_params(&spec, i, partial_sum).unwrap();
        normalize(&spec, &mut step).unwrap();
        let (lo, hi) = integration_range(model.as_ref(), step.t_i);
        let log_mass = log_integrate(|y| step_log_density(&step, model.as_ref(), y), lo, hi, 0.0, 1e-10, 64).unwrap();
        prop_assert!(log_mass.abs() < 1e-4_f64.max(3.0 * step.log_c_stderr), "log mass {log_mass}");
    }

    #[test]
    fn sampled_paths_are_self_consistent(seed in any::<u64>(), index in 0u64..1000, which in 0usize..3) {
        let spec = RunSpec::new(models()[which].clone(), 40, 30, 0.4).unwrap().with_seed(seed);
        let config = SamplerConfig::default();
        let path = sample_path(&spec, &config, index).unwrap();
        let again = sample_path(&spec, &config, index).unwrap();
        prop_assert_eq!(&path, &again);
        prop_assert!(path.log_density.is_finite());
        let recomputed = path_log_density(&spec, &path.values).unwrap();
        prop_assert!((recomputed - path.log_density).abs() <= 1e-10 * path.log_density.abs().max(1.0));
        let mut sum = 0.0;
        for (y, s) in path.values.iter().zip(&path.partial_sums) {
            sum += spec.model.f(*y);
            prop_assert_eq!(sum, *s);
        }
    }

    #[test]
    fn gaussian_path_density_is_bit_stable(seed in any::<u64>()) {
        let spec = RunSpec::new(Arc::new(StandardNormal), 30, 20, 0.5).unwrap().with_seed(seed);
        let path = sample_path(&spec, &SamplerConfig::default(), 0).unwrap();
        let first = evaluate_path(&spec, &path.values).unwrap().log_density();
        let second = evaluate_path(&spec, &path.values).unwrap().log_density();
        prop_assert_eq!(first.to_bits(), second.to_bits());
    }
}
