mod common;

use common::*;
use ldgan::lda::{fit_lda, LabeledFeatureBatch, DEFAULT_EPSILON};
use ldgan::linalg::Matrix;
use ldgan::objectives::{
    clip_weights, disc_eigen_objective, disc_eigen_objective_streaming, gen_conditional_objective,
    gen_unsupervised_objective, wgan_critic_objective,
};
use ldgan::rng::{gaussian_matrix, stream_rng, RunRng, Stream};
use ldgan::stream::StreamStats;
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;

fn seeded(seed: u64) -> RunRng {
    stream_rng(seed, Stream::Evaluation)
}

/// At most 16 rows and 4 classes.
fn small_batch(r: &mut RunRng, classes: usize, dim: usize) -> LabeledFeatureBatch {
    random_batch(r, classes, dim, 16 / classes)
}

fn with_features(batch: &LabeledFeatureBatch, flat: &[f64]) -> LabeledFeatureBatch {
    LabeledFeatureBatch::new(
        Matrix::from_vec(batch.len(), batch.dim(), flat.to_vec()).unwrap(),
        batch.labels().to_vec(),
        batch.class_count(),
    )
    .unwrap()
}

fn shaped(rows: usize, cols: usize, flat: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, flat.to_vec()).unwrap()
}

fn step(u: &Matrix, g: &Matrix, t: f64) -> Matrix {
    Matrix::from_fn(u.rows(), u.cols(), |i, j| u[(i, j)] - t * g[(i, j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn disc_gradient_matches_differences(seed in any::<u64>(), classes in 2usize..=4, dim in 1usize..=8) {
        let mut r = seeded(seed);
        let batch = small_batch(&mut r, classes, dim);
        let g = disc_eigen_objective(&batch, DEFAULT_EPSILON).unwrap();
        let num = numeric_gradient(batch.features().as_slice(), H, |u| {
            disc_eigen_objective(&with_features(&batch, u), DEFAULT_EPSILON).unwrap().objective_value
        });
        let err = max_relative_error(g.grads.as_slice(), &num);
        prop_assert!(err <= 1e-5, "relative error {}", err);
        prop_assert!(g.objective_value >= 0.0);
    }

    #[test]
    fn streaming_disc_gradient_matches_differences(seed in any::<u64>(), classes in 2usize..=4, dim in 1usize..=6, eta in 0.1f64..1.0) {
        let mut r = seeded(seed);
        let mut hist = StreamStats::new(classes, dim, eta).unwrap();
        for _ in 0..3 {
            hist.accumulate(&small_batch(&mut r, classes, dim)).unwrap();
            hist.decay();
        }
        let batch = small_batch(&mut r, classes, dim);
        let g = disc_eigen_objective_streaming(&hist, &batch, DEFAULT_EPSILON).unwrap();
        let num = numeric_gradient(batch.features().as_slice(), H, |u| {
            disc_eigen_objective_streaming(&hist, &with_features(&batch, u), DEFAULT_EPSILON)
                .unwrap()
                .gradient
                .objective_value
        });
        let err = max_relative_error(g.gradient.grads.as_slice(), &num);
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn gen_gradients_match_differences(seed in any::<u64>(), classes in 2usize..=4, dim in 1usize..=8, n in 1usize..=16) {
        let mut r = seeded(seed);
        let binary = fit_lda(&small_batch(&mut r, 2, dim), DEFAULT_EPSILON).unwrap();
        let multi = fit_lda(&small_batch(&mut r, classes, dim), DEFAULT_EPSILON).unwrap();
        let u = gaussian_matrix(&mut r, n, dim);
        let targets: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();

        let g = gen_unsupervised_objective(&binary, &u).unwrap();
        let num = numeric_gradient(u.as_slice(), H, |v| {
            gen_unsupervised_objective(&binary, &shaped(n, dim, v)).unwrap().objective_value
        });
        prop_assert!(max_relative_error(g.grads.as_slice(), &num) <= 1e-5);

        let g = gen_conditional_objective(&multi, &u, &targets).unwrap();
        let num = numeric_gradient(u.as_slice(), H, |v| {
            gen_conditional_objective(&multi, &shaped(n, dim, v), &targets).unwrap().objective_value
        });
        prop_assert!(max_relative_error(g.grads.as_slice(), &num) <= 1e-5);
    }

    #[test]
    fn unsupervised_gradient_is_metric_mean_gap(seed in any::<u64>(), dim in 1usize..=8, n0 in 2usize..12, n1 in 2usize..12) {
        let mut r = seeded(seed);
        let batch = batch_with_counts(&mut r, &[n0, n1], dim, 1.0);
        let model = fit_lda(&batch, DEFAULT_EPSILON).unwrap();
        let rows: Vec<Vec<f64>> = batch.features().row_iter().map(<[f64]>::to_vec).collect();
        let (mu_r, mu_g) = (column_means(&rows[..n0]), column_means(&rows[n0..]));
        let diff: Vec<f64> = mu_g.iter().zip(&mu_r).map(|(g, r)| g - r).collect();
        // s = W^T W applied to μ̂_g − μ_r, divided over the generated rows
        let expected: Vec<f64> = (0..dim)
            .map(|j| model.projection.row_iter().map(|w| dot(w, &diff) * w[j]).sum::<f64>() / n1 as f64)
            .collect();
        let got = gen_unsupervised_objective(&model, &Matrix::from_rows(&rows[n0..]).unwrap()).unwrap();
        for row in got.grads.row_iter() {
            for (a, b) in row.iter().zip(&expected) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn conditional_with_two_classes_is_unsupervised(seed in any::<u64>(), dim in 1usize..=6, n in 1usize..10) {
        let mut r = seeded(seed);
        let model = fit_lda(&small_batch(&mut r, 2, dim), DEFAULT_EPSILON).unwrap();
        let u = gaussian_matrix(&mut r, n, dim);
        let a = gen_unsupervised_objective(&model, &u).unwrap();
        let b = gen_conditional_objective(&model, &u, &vec![0; n]).unwrap();
        prop_assert!((a.objective_value - b.objective_value).abs() <= 1e-12 * (1.0 + a.objective_value.abs()));
        for (x, y) in a.grads.as_slice().iter().zip(b.grads.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn small_steps_improve_objectives(seed in any::<u64>(), classes in 2usize..=4, dim in 1usize..=6) {
        let mut r = seeded(seed);
        let batch = small_batch(&mut r, classes, dim);
        let model = fit_lda(&batch, DEFAULT_EPSILON).unwrap();
        let u = gaussian_matrix(&mut r, 6, dim);
        let targets: Vec<usize> = (0..6).map(|k| k % classes).collect();

        let g = gen_conditional_objective(&model, &u, &targets).unwrap();
        prop_assume!(g.grads.max_abs() > 1e-12);
        let after = gen_conditional_objective(&model, &step(&u, &g.grads, 1e-3), &targets).unwrap();
        prop_assert!(after.objective_value < g.objective_value);

        if classes == 2 {
            let g = gen_unsupervised_objective(&model, &u).unwrap();
            let after = gen_unsupervised_objective(&model, &step(&u, &g.grads, 1e-3)).unwrap();
            prop_assert!(after.objective_value < g.objective_value);
        }

        // the discriminator ascends
        let d = disc_eigen_objective(&batch, DEFAULT_EPSILON).unwrap();
        prop_assume!(d.grads.max_abs() > 1e-9);
        // backtrack: near-singular S_w makes the curvature sharp
        let mut t = 1e-4 * batch.features().max_abs().max(1.0) / d.grads.max_abs();
        let mut rose = false;
        for _ in 0..40 {
            let moved = with_features(&batch, step(batch.features(), &d.grads, -t).as_slice());
            if disc_eigen_objective(&moved, DEFAULT_EPSILON).unwrap().objective_value > d.objective_value {
                rose = true;
                break;
            }
            t *= 0.5;
        }
        prop_assert!(rose);
    }
}

#[test]
fn identical_means_give_zero_generator_gradient() {
    let rows = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]];
    let batch = LabeledFeatureBatch::new(Matrix::from_rows(&rows).unwrap(), vec![0, 0, 1, 1, 2, 2], 3).unwrap();
    let model = fit_lda(&batch, DEFAULT_EPSILON).unwrap();
    let u = Matrix::from_rows(&[[0.3, 2.0], [-1.0, 0.5]]).unwrap();
    let g = gen_conditional_objective(&model, &u, &[0, 2]).unwrap();
    assert!(g.grads.max_abs() < 1e-12);
}

#[test]
fn conditional_rejects_bad_targets() {
    let mut r = seeded(1);
    let model = fit_lda(&small_batch(&mut r, 3, 2), DEFAULT_EPSILON).unwrap();
    let u = gaussian_matrix(&mut r, 2, 2);
    assert!(gen_conditional_objective(&model, &u, &[0, 3]).is_err());
    assert!(gen_conditional_objective(&model, &u, &[0]).is_err());
    assert!(gen_unsupervised_objective(&model, &u).is_err());
}

#[test]
fn critic_objective_and_clipping() {
    assert_eq!(wgan_critic_objective(&[1.0, 2.0], &[0.0, 1.0]).unwrap(), 1.0);
    assert_eq!(wgan_critic_objective(&[0.5, -0.5], &[0.5, -0.5]).unwrap(), 0.0);
    assert!(wgan_critic_objective(&[], &[1.0]).is_err());
    let mut p = [0.3, -0.004, -2.0];
    clip_weights(&mut p, 0.01).unwrap();
    assert_eq!(p, [0.01, -0.004, -0.01]);
    assert!(clip_weights(&mut p, 0.0).is_err());
}
