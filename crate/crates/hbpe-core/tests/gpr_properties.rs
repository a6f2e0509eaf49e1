//! Property tests of the interpolators.

use hbpe_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spaced_times(seed: u64, n: usize, min_gap: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = rng.random_range(0.0..5.0);
    (0..n)
        .map(|_| {
            t += rng.random_range(min_gap..3.0 * min_gap);
            t
        })
        .collect()
}

fn random_targets(seed: u64, classes: usize, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(classes, n, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The RBF kernel is stationary, so shifting every time by the same
    /// amount leaves the posterior mean unchanged.
    #[test]
    fn gpr_is_shift_invariant(seed in 0u64..500, shift in -1e3f64..1e3, n in 2usize..20) {
        let times = spaced_times(seed, n, 2.0);
        let targets = random_targets(seed.wrapping_add(1), 3, n);
        let params = RbfKernelParams::new(3.0, 1.0, 1e-4).unwrap();
        let query: Vec<f64> = (0..30).map(|i| times[0] + i as f64).collect();

        let base = GprModel::fit(&times, &targets, &params).unwrap().posterior_mean(&query);
        let shifted_times: Vec<f64> = times.iter().map(|t| t + shift).collect();
        let shifted_query: Vec<f64> = query.iter().map(|q| q + shift).collect();
        let shifted = GprModel::fit(&shifted_times, &targets, &params)
            .unwrap()
            .posterior_mean(&shifted_query);

        prop_assert!((base - shifted).norm() <= 1e-8);
    }

    /// The posterior mean is linear in the targets.
    #[test]
    fn gpr_posterior_mean_scales_with_targets(seed in 0u64..500, alpha in -4.0f64..4.0, n in 2usize..16) {
        let times = spaced_times(seed, n, 2.0);
        let targets = random_targets(seed.wrapping_add(2), 2, n);
        let params = RbfKernelParams::new(4.0, 1.0, 1e-3).unwrap();
        let query: Vec<f64> = (0..25).map(|i| times[0] + 1.3 * i as f64).collect();

        let base = GprModel::fit(&times, &targets, &params).unwrap().posterior_mean(&query);
        let scaled_targets = &targets * alpha;
        let scaled = GprModel::fit(&times, &scaled_targets, &params).unwrap().posterior_mean(&query);

        prop_assert!((&scaled - &base * alpha).norm() <= 1e-8 * (1.0 + alpha.abs()));
    }

    /// Laplacian smoothing solves its normal equations: residual against an
    /// independently assembled dense system stays at solver precision.
    #[test]
    fn laplacian_satisfies_normal_equations(seed in 0u64..500, t in 2usize..40, weight in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..t).map(|_| rng.random_range(0..4)).collect();
        let n_obs = rng.random_range(1..=t);
        let mut observed: Vec<usize> = rand::seq::index::sample(&mut rng, t, n_obs).into_vec();
        observed.sort_unstable();
        let mask = ObservationMask::from_indices(observed, t).unwrap();
        let labels = LabelMatrix::from_masked_classes(&truth, 4, &mask).unwrap();

        let out = laplacian_smooth(&labels, weight).unwrap();

        let mut system = DMatrix::zeros(t, t);
        for i in 0..t {
            let degree = if t == 1 { 0.0 } else if i == 0 || i == t - 1 { 1.0 } else { 2.0 };
            system[(i, i)] = weight * degree + if labels.observed()[i] { 1.0 } else { 0.0 };
            if i + 1 < t {
                system[(i, i + 1)] = -weight;
                system[(i + 1, i)] = -weight;
            }
        }
        for r in 0..4 {
            let mut rhs = nalgebra::DVector::zeros(t);
            for i in 0..t {
                if labels.observed()[i] {
                    rhs[i] = labels.values()[(r, i)];
                }
            }
            let x = out.values.row(r).transpose();
            let residual = (&system * x - rhs).norm();
            prop_assert!(residual <= 1e-10, "row {r} residual {residual:.3e}");
        }
    }

    /// Piecewise-linear interpolation reproduces observed columns exactly and
    /// stays inside the convex hull of the observations per row.
    #[test]
    fn linear_interpolation_brackets_observations(seed in 0u64..500, t in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..t).map(|_| rng.random_range(0..3)).collect();
        let n_obs = rng.random_range(1..=t);
        let mut observed: Vec<usize> = rand::seq::index::sample(&mut rng, t, n_obs).into_vec();
        observed.sort_unstable();
        let mask = ObservationMask::from_indices(observed, t).unwrap();
        let labels = LabelMatrix::from_masked_classes(&truth, 3, &mask).unwrap();
        let out = linear_interpolate(&labels).unwrap();

        for &i in mask.indices() {
            for r in 0..3 {
                prop_assert_eq!(out.values[(r, i)], labels.values()[(r, i)]);
            }
        }
        for v in out.values.iter() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
        }
    }
}

/// Flagged (not asserted): posterior-mean magnitudes on the synthetic suite
/// should stay within twice the target magnitude. Violations indicate an
/// ill-conditioned kernel rather than a bug, so they are reported only.
#[test]
fn gpr_prediction_bound_flag() {
    let kernel = hbpe_core::experiment::default_pipeline_kernel();
    let mut violations = 0usize;
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let person = generate_synthetic(&SyntheticSpec::default().with_seed(seed)).unwrap();
        let t = person.samples();
        let mask = generate_mask(t, 0.05, &person.head_truth, 0.75, 600 + seed, 100).unwrap();
        let labels = LabelMatrix::from_masked_classes(&person.head_truth, 8, &mask).unwrap();
        let pred = interpolate_labels(&labels, Method::GprOnly, &kernel, 10.0).unwrap();
        checked += 1;
        let max_abs = pred.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max_abs > 2.0 {
            violations += 1;
            eprintln!("note: seed {seed} posterior magnitude {max_abs:.3} exceeds 2x target scale");
        }
    }
    println!("gpr prediction bound: {violations}/{checked} flagged (informational)");
}
