//! Batch linear discriminant analysis over hidden features.

use crate::error::{LdganError, Result};
use crate::linalg::{
    cholesky, dot, generalized_eig, solve_lower, solve_lower_transpose, EigenPairs, Matrix,
    SymMatrix,
};

/// Default relative regularization added to the within-class scatter diagonal.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Features (one sample per row) with a class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureBatch {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledFeatureBatch {
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(LdganError::invalid("feature batch is empty"));
        }
        if features.cols() == 0 {
            return Err(LdganError::invalid("feature width must be at least 1"));
        }
        if labels.len() != features.rows() {
            return Err(LdganError::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_count) {
            return Err(LdganError::invalid(format!(
                "class id {bad} out of range for {class_count} classes"
            )));
        }
        if !features.is_finite() {
            return Err(LdganError::invalid("feature batch has non-finite entries"));
        }
        Ok(LabeledFeatureBatch {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Per-class sample counts and feature sums.
    pub(crate) fn class_totals(&self) -> (Vec<f64>, Matrix) {
        let mut counts = vec![0.0; self.class_count];
        let mut sums = Matrix::zeros(self.class_count, self.dim());
        for (row, &c) in self.features.row_iter().zip(&self.labels) {
            counts[c] += 1.0;
            for (s, v) in sums.row_mut(c).iter_mut().zip(row) {
                *s += v;
            }
        }
        (counts, sums)
    }
}

/// Within/between-class scatter with the moments they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub sw: SymMatrix,
    pub sb: SymMatrix,
    pub total_mean: Vec<f64>,
    pub class_means: Matrix,
    pub class_counts: Vec<f64>,
}

impl ScatterPair {
    /// Assembles `S_b` from per-class counts and means; `sw` is taken as given.
    /// Classes with zero count contribute nothing and keep a zero mean row.
    pub(crate) fn from_moments(counts: Vec<f64>, class_means: Matrix, sw: SymMatrix) -> Self {
        let m = class_means.cols();
        let total: f64 = counts.iter().sum();
        let mut total_mean = vec![0.0; m];
        if total > 0.0 {
            for (c, &n) in counts.iter().enumerate() {
                for (t, v) in total_mean.iter_mut().zip(class_means.row(c)) {
                    *t += n * v;
                }
            }
            total_mean.iter_mut().for_each(|t| *t /= total);
        }
        let mut sb = SymMatrix::zeros(m);
        let mut diff = vec![0.0; m];
        for (c, &n) in counts.iter().enumerate() {
            if n <= 0.0 {
                continue;
            }
            for ((d, a), b) in diff.iter_mut().zip(class_means.row(c)).zip(&total_mean) {
                *d = a - b;
            }
            sb.add_outer(n, &diff);
        }
        ScatterPair {
            sw,
            sb,
            total_mean,
            class_means,
            class_counts: counts,
        }
    }

    pub fn populated_classes(&self) -> usize {
        self.class_counts.iter().filter(|&&n| n > 0.0).count()
    }

    pub fn dim(&self) -> usize {
        self.sw.dim()
    }
}

/// Within- and between-class scatter as raw (unnormalized) sums.
pub fn compute_scatter(batch: &LabeledFeatureBatch) -> Result<ScatterPair> {
    if batch.is_empty() {
        return Err(LdganError::invalid("compute_scatter on an empty batch"));
    }
    let (counts, sums) = batch.class_totals();
    let m = batch.dim();
    let means = Matrix::from_fn(batch.class_count(), m, |c, j| {
        if counts[c] > 0.0 {
            sums[(c, j)] / counts[c]
        } else {
            0.0
        }
    });
    let mut sw = SymMatrix::zeros(m);
    let mut diff = vec![0.0; m];
    for (row, &c) in batch.features().row_iter().zip(batch.labels()) {
        for ((d, x), mu) in diff.iter_mut().zip(row).zip(means.row(c)) {
            *d = x - mu;
        }
        sw.add_outer(1.0, &diff);
    }
    Ok(ScatterPair::from_moments(counts, means, sw))
}

/// Fitted discriminant: projection rows `w_l`, class means, and hyperplane normals.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `C - 1` values, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `(C - 1) x M`, one discriminant direction per row, normalized so that
    /// `w^T (S_w + reg) w = 1`.
    pub projection: Matrix,
    pub class_means: Matrix,
    /// Row `c` is `class_means[c] · W^T W`.
    pub normals: Matrix,
    /// Regularization actually used (after any escalation).
    pub epsilon: f64,
}

impl LdaModel {
    pub fn class_count(&self) -> usize {
        self.class_means.rows()
    }

    pub fn dim(&self) -> usize {
        self.class_means.cols()
    }

    pub fn mean_eigenvalue(&self) -> f64 {
        if self.eigenvalues.is_empty() {
            0.0
        } else {
            self.eigenvalues.iter().sum::<f64>() / self.eigenvalues.len() as f64
        }
    }

    /// `W^T W`, the metric the hyperplanes are measured in.
    pub fn metric(&self) -> SymMatrix {
        let m = self.dim();
        let mut p = SymMatrix::zeros(m);
        for w in self.projection.row_iter() {
            p.add_outer(1.0, w);
        }
        p
    }
}

/// `S_w + ε (trace(S_w)/M + 1) I`
pub fn regularize(sw: &SymMatrix, epsilon: f64) -> SymMatrix {
    let m = sw.dim() as f64;
    let mut out = sw.clone();
    out.add_to_diag(epsilon * (sw.trace() / m + 1.0));
    out
}

/// Full generalized eigensolution of a scatter pair, escalating `ε` ten-fold once if
/// the regularized within-class scatter still is not positive definite.
pub(crate) fn solve_scatter(sp: &ScatterPair, epsilon: f64) -> Result<(EigenPairs, f64)> {
    if !(epsilon > 0.0) {
        return Err(LdganError::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    match generalized_eig(&sp.sb, &regularize(&sp.sw, epsilon)) {
        Ok(e) => Ok((e, epsilon)),
        Err(LdganError::NotPositiveDefinite { .. }) => {
            let eps = epsilon * 10.0;
            generalized_eig(&sp.sb, &regularize(&sp.sw, eps)).map(|e| (e, eps))
        }
        Err(e) => Err(e),
    }
}

/// Builds the model from solved eigenpairs, keeping `C - 1` of them.
pub(crate) fn model_from_eigen(sp: &ScatterPair, eig: &EigenPairs, epsilon: f64) -> LdaModel {
    let c = sp.class_counts.len();
    let m = sp.dim();
    let keep = c.saturating_sub(1);
    let mut eigenvalues = vec![0.0; keep];
    let mut projection = Matrix::zeros(keep, m);
    for k in 0..keep.min(eig.len()) {
        eigenvalues[k] = eig.values[k].max(0.0);
        projection.row_mut(k).copy_from_slice(eig.vector(k));
    }
    let mut normals = Matrix::zeros(c, m);
    for cls in 0..c {
        let mu = sp.class_means.row(cls);
        let out = normals.row_mut(cls);
        for w in projection.row_iter() {
            let coef = dot(mu, w);
            for (o, wj) in out.iter_mut().zip(w) {
                *o += coef * wj;
            }
        }
    }
    LdaModel {
        eigenvalues,
        projection,
        class_means: sp.class_means.clone(),
        normals,
        epsilon,
    }
}

pub fn fit_scatter(sp: &ScatterPair, epsilon: f64) -> Result<LdaModel> {
    let (eig, eps) = solve_scatter(sp, epsilon)?;
    Ok(model_from_eigen(sp, &eig, eps))
}

/// Fits LDA on a labelled batch.
pub fn fit_lda(batch: &LabeledFeatureBatch, epsilon: f64) -> Result<LdaModel> {
    fit_scatter(&compute_scatter(batch)?, epsilon)
}

/// Linear discriminant score of every row against every class:
/// `H[i][c] = u_i · A_c - ½ M_c · A_c`.
pub fn hyperplane_scores(model: &LdaModel, features: &Matrix) -> Result<Matrix> {
    if features.cols() != model.dim() {
        return Err(LdganError::invalid(format!(
            "feature width {} does not match model width {}",
            features.cols(),
            model.dim()
        )));
    }
    let c = model.class_count();
    let offsets: Vec<f64> = (0..c)
        .map(|k| 0.5 * dot(model.class_means.row(k), model.normals.row(k)))
        .collect();
    let mut out = Matrix::zeros(features.rows(), c);
    for (i, u) in features.row_iter().enumerate() {
        for k in 0..c {
            out[(i, k)] = dot(u, model.normals.row(k)) - offsets[k];
        }
    }
    Ok(out)
}

/// Index of the highest score in each row.
pub fn predict(model: &LdaModel, features: &Matrix) -> Result<Vec<usize>> {
    let scores = hyperplane_scores(model, features)?;
    Ok(scores
        .row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect())
}

/// Binary LDA direction next to the coded least-squares regression direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LsEquivalence {
    pub lda_direction: Vec<f64>,
    pub ls_direction: Vec<f64>,
    /// `|cos|` of the angle between the two directions.
    pub cosine: f64,
}

/// Fits ridge least squares of the targets `N/N_0` (class 0) and `-N/N_1` (class 1)
/// on centered features, next to the binary LDA direction. Both use the same ridge
/// `ε (trace(S_w)/M + 1)`, under which the two directions coincide.
pub fn ls_equivalence_oracle(batch: &LabeledFeatureBatch, epsilon: f64) -> Result<LsEquivalence> {
    if batch.class_count() != 2 {
        return Err(LdganError::invalid(format!(
            "least-squares equivalence needs exactly 2 classes, got {}",
            batch.class_count()
        )));
    }
    let sp = compute_scatter(batch)?;
    let (n0, n1) = (sp.class_counts[0], sp.class_counts[1]);
    if n0 == 0.0 || n1 == 0.0 {
        return Err(LdganError::invalid(
            "least-squares equivalence needs both classes populated",
        ));
    }
    let model = fit_scatter(&sp, epsilon)?;
    let lda_direction = model.projection.row(0).to_vec();

    let n = n0 + n1;
    let m = batch.dim();
    let ridge = model.epsilon * (sp.sw.trace() / m as f64 + 1.0);
    let mean = batch.features().column_means();
    let mut gram = SymMatrix::zeros(m);
    let mut rhs = vec![0.0; m];
    let mut centered = vec![0.0; m];
    for (row, &c) in batch.features().row_iter().zip(batch.labels()) {
        for ((x, v), mu) in centered.iter_mut().zip(row).zip(&mean) {
            *x = v - mu;
        }
        gram.add_outer(1.0, &centered);
        let target = if c == 0 { n / n0 } else { -n / n1 };
        for (r, x) in rhs.iter_mut().zip(&centered) {
            *r += target * x;
        }
    }
    gram.add_to_diag(ridge);
    let l = cholesky(&gram)?;
    let ls_direction = solve_lower_transpose(&l, &solve_lower(&l, &rhs));

    let cosine = dot(&lda_direction, &ls_direction).abs()
        / (dot(&lda_direction, &lda_direction).sqrt() * dot(&ls_direction, &ls_direction).sqrt());
    Ok(LsEquivalence {
        lda_direction,
        ls_direction,
        cosine,
    })
}
