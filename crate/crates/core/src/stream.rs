//! Decayed sufficient statistics for incremental LDA.
//!
//! Per-class counts, feature sums and pooled within-class scatter are accumulated one
//! minibatch at a time and multiplied by `eta` after every discriminator update. The
//! within-class scatter of a new minibatch is merged about the running class means with
//! the two-set correction `n_a n_b / (n_a + n_b) (μ_a − μ_b)(μ_a − μ_b)^T`, so with
//! `eta = 1` the stream reproduces the batch scatter of everything it has seen.

use crate::error::{LdganError, Result};
use crate::lda::{compute_scatter, fit_scatter, LabeledFeatureBatch, LdaModel, ScatterPair};
use crate::linalg::{Matrix, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamStats {
    class_counts: Vec<f64>,
    class_sums: Matrix,
    sw_hat: SymMatrix,
    eta: f64,
}

impl StreamStats {
    pub fn new(class_count: usize, dim: usize, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(LdganError::invalid(format!("eta must lie in [0, 1], got {eta}")));
        }
        if class_count == 0 || dim == 0 {
            return Err(LdganError::invalid("stream needs at least one class and one feature"));
        }
        Ok(StreamStats {
            class_counts: vec![0.0; class_count],
            class_sums: Matrix::zeros(class_count, dim),
            sw_hat: SymMatrix::zeros(dim),
            eta,
        })
    }

    pub fn class_counts(&self) -> &[f64] {
        &self.class_counts
    }

    pub fn class_sums(&self) -> &Matrix {
        &self.class_sums
    }

    pub fn sw_hat(&self) -> &SymMatrix {
        &self.sw_hat
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn class_count(&self) -> usize {
        self.class_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.class_sums.cols()
    }

    /// Running mean of class `c`, or `None` while the class has no weight.
    pub fn class_mean(&self, c: usize) -> Option<Vec<f64>> {
        let n = self.class_counts[c];
        (n > 0.0).then(|| self.class_sums.row(c).iter().map(|s| s / n).collect())
    }

    pub fn accumulate(&mut self, batch: &LabeledFeatureBatch) -> Result<()> {
        if batch.dim() != self.dim() || batch.class_count() != self.class_count() {
            return Err(LdganError::invalid(format!(
                "batch ({} classes, width {}) does not match stream ({} classes, width {})",
                batch.class_count(),
                batch.dim(),
                self.class_count(),
                self.dim()
            )));
        }
        let sp = compute_scatter(batch)?;
        let mut merged = sp.sw;
        let mut diff = vec![0.0; self.dim()];
        for c in 0..self.class_count() {
            let (h, n) = (self.class_counts[c], sp.class_counts[c]);
            if h > 0.0 && n > 0.0 {
                for ((d, s), m) in diff
                    .iter_mut()
                    .zip(self.class_sums.row(c))
                    .zip(sp.class_means.row(c))
                {
                    *d = s / h - m;
                }
                merged.add_outer(h * n / (h + n), &diff);
            }
        }
        self.sw_hat.add_scaled(1.0, &merged);
        let (counts, sums) = batch.class_totals();
        for (c, n) in counts.into_iter().enumerate() {
            self.class_counts[c] += n;
            for (s, v) in self.class_sums.row_mut(c).iter_mut().zip(sums.row(c)) {
                *s += v;
            }
        }
        Ok(())
    }

    /// Multiplies counts, sums and within-class scatter by `eta`.
    pub fn decay(&mut self) {
        let eta = self.eta;
        self.class_counts.iter_mut().for_each(|n| *n *= eta);
        self.class_sums
            .as_mut_slice()
            .iter_mut()
            .for_each(|s| *s *= eta);
        self.sw_hat.scale_in_place(eta);
    }

    /// Scatter pair implied by the current statistics; `S_b` is rebuilt from the
    /// decayed means and counts.
    pub fn scatter(&self) -> ScatterPair {
        let means = Matrix::from_fn(self.class_count(), self.dim(), |c, j| {
            let n = self.class_counts[c];
            if n > 0.0 {
                self.class_sums[(c, j)] / n
            } else {
                0.0
            }
        });
        ScatterPair::from_moments(self.class_counts.clone(), means, self.sw_hat.clone())
    }

    pub fn snapshot(&self, epsilon: f64) -> Result<LdaModel> {
        let sp = self.scatter();
        let populated = sp.populated_classes();
        if populated < 2 {
            return Err(LdganError::InsufficientClasses { populated });
        }
        fit_scatter(&sp, epsilon)
    }
}
