//! Differentiable objectives with respect to hidden features.
//!
//! The discriminator objective is the mean of the `C - 1` leading generalized
//! eigenvalues of `(S_b, S_w + reg)`. For `w^T (S_w + reg) w = 1`,
//! `dλ = w^T dS_b w − λ w^T d(S_w + reg) w`, and both scatters are quadratic in the
//! features, which gives a closed-form per-sample gradient.
//!
//! Generator objectives treat the fitted hyperplanes as constants, so their gradients
//! are the same row for every sample.

use crate::error::{LdganError, Result};
use crate::lda::{
    hyperplane_scores, model_from_eigen, solve_scatter, LabeledFeatureBatch, LdaModel,
};
use crate::linalg::{EigenPairs, Matrix, SymMatrix};
use crate::stream::StreamStats;

/// Eigenvalues closer than this make the per-eigenvalue derivative ill-posed.
const DEGENERATE_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGradient {
    /// `∂ objective / ∂ u_i`, one row per sample.
    pub grads: Matrix,
    pub objective_value: f64,
}

/// Discriminator objective with the model it was evaluated on.
#[derive(Debug, Clone)]
pub struct DiscObjective {
    pub gradient: FeatureGradient,
    pub model: LdaModel,
}

/// Mean-eigenvalue objective on a single batch. The caller ascends it.
pub fn disc_eigen_objective(batch: &LabeledFeatureBatch, epsilon: f64) -> Result<FeatureGradient> {
    let empty = StreamStats::new(batch.class_count(), batch.dim(), 1.0)?;
    disc_eigen_objective_streaming(&empty, batch, epsilon).map(|d| d.gradient)
}

/// Mean-eigenvalue objective of `history` merged with `batch`. Only the batch rows are
/// differentiated; the history is a constant offset. `history` itself is untouched.
pub fn disc_eigen_objective_streaming(
    history: &StreamStats,
    batch: &LabeledFeatureBatch,
    epsilon: f64,
) -> Result<DiscObjective> {
    let mut merged = history.clone();
    merged.accumulate(batch)?;
    let sp = merged.scatter();
    let populated = sp.populated_classes();
    if populated < 2 {
        return Err(LdganError::InsufficientClasses { populated });
    }

    let keep = sp.class_counts.len() - 1;
    let (mut eig, mut eps) = solve_scatter(&sp, epsilon)?;
    if has_close_pair(&eig.values[..keep.min(eig.len())]) {
        let (e, used) = solve_scatter(&sp, eps * (1.0 + 1e-7))?;
        eig = e;
        eps = used;
    }
    let model = model_from_eigen(&sp, &eig, eps);

    let m = sp.dim();
    let (g_b, g_w) = eigen_sensitivities(&eig, keep, eps);

    let mut grads = Matrix::zeros(batch.len(), m);
    let mut to_class = vec![0.0; m];
    let mut to_total = vec![0.0; m];
    for (i, (u, &c)) in batch.features().row_iter().zip(batch.labels()).enumerate() {
        let mu_c = sp.class_means.row(c);
        for j in 0..m {
            to_class[j] = u[j] - mu_c[j];
            to_total[j] = mu_c[j] - sp.total_mean[j];
        }
        let a = g_b.mul_vec(&to_total);
        let b = g_w.mul_vec(&to_class);
        for ((g, x), y) in grads.row_mut(i).iter_mut().zip(&a).zip(&b) {
            *g = 2.0 * (x + y);
        }
    }

    let gradient = FeatureGradient {
        grads,
        objective_value: model.mean_eigenvalue(),
    };
    if !gradient.grads.is_finite() || !gradient.objective_value.is_finite() {
        return Err(LdganError::invalid("eigenvalue objective is not finite"));
    }
    Ok(DiscObjective { gradient, model })
}

fn has_close_pair(values: &[f64]) -> bool {
    values.windows(2).any(|w| (w[0] - w[1]).abs() < DEGENERATE_GAP)
}

// Returns (∂J/∂S_b, ∂J/∂S_w) for J = mean of the first `keep` eigenvalues, with the
// regularizer's trace dependence folded into the S_w term.
fn eigen_sensitivities(eig: &EigenPairs, keep: usize, epsilon: f64) -> (SymMatrix, SymMatrix) {
    let m = eig.vectors.cols();
    let mut g_b = SymMatrix::zeros(m);
    let mut g_w = SymMatrix::zeros(m);
    if keep == 0 {
        return (g_b, g_w);
    }
    let scale = 1.0 / keep as f64;
    for k in 0..keep.min(eig.len()) {
        let w = eig.vector(k);
        g_b.add_outer(scale, w);
        g_w.add_outer(-scale * eig.values[k], w);
    }
    let tr = g_w.trace();
    g_w.add_to_diag(epsilon * tr / m as f64);
    (g_b, g_w)
}

fn check_width(model: &LdaModel, features: &Matrix) -> Result<()> {
    if features.cols() != model.dim() {
        return Err(LdganError::invalid(format!(
            "feature width {} does not match model width {}",
            features.cols(),
            model.dim()
        )));
    }
    if features.rows() == 0 {
        return Err(LdganError::invalid("generator objective on an empty batch"));
    }
    Ok(())
}

/// Unsupervised generator objective `mean_i [H_g(u_i) − H_r(u_i)]` with real = class 0
/// and generated = class 1. Descending it moves generated features toward the real
/// hyperplane.
pub fn gen_unsupervised_objective(model: &LdaModel, gen_features: &Matrix) -> Result<FeatureGradient> {
    if model.class_count() != 2 {
        return Err(LdganError::invalid(format!(
            "unsupervised generator objective needs a binary model, got {} classes",
            model.class_count()
        )));
    }
    check_width(model, gen_features)?;
    let n = gen_features.rows();
    let scores = hyperplane_scores(model, gen_features)?;
    let objective_value = scores.row_iter().map(|h| h[1] - h[0]).sum::<f64>() / n as f64;
    let row: Vec<f64> = model
        .normals
        .row(1)
        .iter()
        .zip(model.normals.row(0))
        .map(|(g, r)| (g - r) / n as f64)
        .collect();
    Ok(FeatureGradient {
        grads: broadcast_row(&row, n),
        objective_value,
    })
}

/// Conditional generator objective `mean_i Σ_{c ≠ t_i} [H_c(u_i) − H_{t_i}(u_i)]`.
pub fn gen_conditional_objective(
    model: &LdaModel,
    gen_features: &Matrix,
    target_class: &[usize],
) -> Result<FeatureGradient> {
    check_width(model, gen_features)?;
    let n = gen_features.rows();
    if target_class.len() != n {
        return Err(LdganError::invalid(format!(
            "{} targets for {} generated rows",
            target_class.len(),
            n
        )));
    }
    let c = model.class_count();
    if let Some(&bad) = target_class.iter().find(|&&t| t >= c) {
        return Err(LdganError::invalid(format!(
            "target class {bad} out of range for {c} classes"
        )));
    }
    let m = model.dim();
    let scores = hyperplane_scores(model, gen_features)?;
    // Σ_{c≠t}(A_c − A_t) per target, summed term by term so that two classes give
    // exactly A_1 − A_0
    let directions: Vec<Vec<f64>> = (0..c)
        .map(|t| {
            let a_t = model.normals.row(t);
            let mut d = vec![0.0; m];
            for (k, a) in model.normals.row_iter().enumerate() {
                if k != t {
                    for ((x, v), w) in d.iter_mut().zip(a).zip(a_t) {
                        *x += v - w;
                    }
                }
            }
            d
        })
        .collect();

    let mut total = 0.0;
    let mut grads = Matrix::zeros(n, m);
    for (i, (h, &t)) in scores.row_iter().zip(target_class).enumerate() {
        total += h
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != t)
            .map(|(_, v)| v - h[t])
            .sum::<f64>();
        for (g, d) in grads.row_mut(i).iter_mut().zip(&directions[t]) {
            *g = d / n as f64;
        }
    }
    Ok(FeatureGradient {
        grads,
        objective_value: total / n as f64,
    })
}

fn broadcast_row(row: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, row.len());
    for i in 0..n {
        m.row_mut(i).copy_from_slice(row);
    }
    m
}

/// `mean(real) − mean(fake)`, the quantity the critic ascends.
pub fn wgan_critic_objective(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(LdganError::invalid("critic objective needs nonempty score lists"));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(mean(real_scores) - mean(fake_scores))
}

/// Clamps every parameter into `[-c, c]`.
pub fn clip_weights(params: &mut [f64], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(LdganError::invalid(format!("clip bound must be positive, got {c}")));
    }
    params.iter_mut().for_each(|p| *p = p.clamp(-c, c));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::{fit_lda, DEFAULT_EPSILON};

    fn binary_model() -> LdaModel {
        let f = Matrix::from_rows(&[[1.0, 0.3], [1.4, -0.2], [-1.0, 0.5], [-0.6, -0.4]]).unwrap();
        let b = LabeledFeatureBatch::new(f, vec![0, 0, 1, 1], 2).unwrap();
        fit_lda(&b, DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn critic_arithmetic() {
        assert_eq!(wgan_critic_objective(&[1.0, 2.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wgan_critic_objective(&[0.5, -2.0], &[0.5, -2.0]).unwrap(), 0.0);
        assert!(wgan_critic_objective(&[], &[1.0]).is_err());
    }

    #[test]
    fn clipping() {
        let mut p = [0.3, -0.004, -7.0];
        clip_weights(&mut p, 0.01).unwrap();
        assert_eq!(p, [0.01, -0.004, -0.01]);
        assert!(clip_weights(&mut p, 0.0).is_err());
    }

    #[test]
    fn coincident_means_zero_generator_gradient() {
        let mut model = binary_model();
        let mu = model.class_means.row(0).to_vec();
        model.class_means.row_mut(1).copy_from_slice(&mu);
        let a = model.normals.row(0).to_vec();
        model.normals.row_mut(1).copy_from_slice(&a);
        let u = Matrix::from_rows(&[[0.2, 0.1], [3.0, -1.0]]).unwrap();
        let g = gen_unsupervised_objective(&model, &u).unwrap();
        assert!(g.grads.as_slice().iter().all(|&v| v == 0.0));
        let g = gen_conditional_objective(&model, &u, &[0, 0]).unwrap();
        assert!(g.grads.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conditional_binary_reduces_to_unsupervised() {
        let model = binary_model();
        let u = Matrix::from_rows(&[[0.2, 0.1], [3.0, -1.0], [-0.5, 0.0]]).unwrap();
        let a = gen_unsupervised_objective(&model, &u).unwrap();
        let b = gen_conditional_objective(&model, &u, &[0, 0, 0]).unwrap();
        assert!((a.objective_value - b.objective_value).abs() <= 1e-12);
        for (x, y) in a.grads.as_slice().iter().zip(b.grads.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn generator_objective_errors() {
        let model = binary_model();
        assert!(gen_unsupervised_objective(&model, &Matrix::zeros(2, 3)).is_err());
        assert!(gen_conditional_objective(&model, &Matrix::zeros(2, 2), &[0, 2]).is_err());
        assert!(gen_conditional_objective(&model, &Matrix::zeros(2, 2), &[0]).is_err());
    }

    #[test]
    fn disc_objective_label_swap_and_scale() {
        let f = Matrix::from_rows(&[
            [1.0, 0.3, 0.2],
            [1.4, -0.2, 0.0],
            [0.7, 0.1, -0.3],
            [-1.0, 0.5, 0.4],
            [-0.6, -0.4, 0.1],
            [-0.2, 0.0, -0.5],
        ])
        .unwrap();
        let labels = vec![0, 0, 0, 1, 1, 1];
        let base =
            disc_eigen_objective(&LabeledFeatureBatch::new(f.clone(), labels.clone(), 2).unwrap(), DEFAULT_EPSILON)
                .unwrap();
        let swapped: Vec<usize> = labels.iter().map(|&c| 1 - c).collect();
        let sw = disc_eigen_objective(&LabeledFeatureBatch::new(f.clone(), swapped, 2).unwrap(), DEFAULT_EPSILON)
            .unwrap();
        assert!((base.objective_value - sw.objective_value).abs() <= 1e-12 * base.objective_value);
        assert!(base.objective_value >= 0.0);

        // the "+1" in the regularizer is not scale-free, so compare with a tiny ε
        let eps = 1e-12;
        let base = disc_eigen_objective(&LabeledFeatureBatch::new(f.clone(), labels.clone(), 2).unwrap(), eps)
            .unwrap();
        let scaled =
            disc_eigen_objective(&LabeledFeatureBatch::new(f.scale(2.0), labels, 2).unwrap(), eps).unwrap();
        let rel = (base.objective_value - scaled.objective_value).abs() / base.objective_value;
        assert!(rel <= 1e-8, "rel {rel}");
        for (g1, g2) in base.grads.as_slice().iter().zip(scaled.grads.as_slice()) {
            assert!((g1 - 2.0 * g2).abs() <= 1e-6 * (1.0 + g1.abs()));
        }
    }
}
