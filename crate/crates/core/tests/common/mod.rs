//! Independent reference computations shared by the integration tests. Nothing here
//! calls into the library's numerical code.

#![allow(dead_code, clippy::needless_range_loop)]

use ldgan::lda::LabeledFeatureBatch;
use ldgan::linalg::Matrix;
use ldgan::rng::{gaussian_matrix, RunRng};
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(n: usize) -> Dense {
    vec![vec![0.0; n]; n]
}

/// Class-shifted Gaussian features; class `c` gets `counts[c]` rows.
pub fn batch_with_counts(rng: &mut RunRng, counts: &[usize], dim: usize, spread: f64) -> LabeledFeatureBatch {
    let n: usize = counts.iter().sum();
    let centers = gaussian_matrix(rng, counts.len(), dim).scale(spread);
    let noise = gaussian_matrix(rng, n, dim);
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    let features = Matrix::from_fn(n, dim, |i, j| centers[(labels[i], j)] + noise[(i, j)]);
    LabeledFeatureBatch::new(features, labels, counts.len()).unwrap()
}

pub fn random_batch(rng: &mut RunRng, classes: usize, dim: usize, max_per_class: usize) -> LabeledFeatureBatch {
    let counts: Vec<usize> = (0..classes).map(|_| rng.gen_range(2..=max_per_class)).collect();
    batch_with_counts(rng, &counts, dim, 1.5)
}

/// Weighted within/between scatter, two-pass, straight from the definitions.
pub fn weighted_scatter(points: &[(Vec<f64>, usize, f64)], classes: usize) -> (Dense, Dense) {
    let m = points[0].0.len();
    let mut count = vec![0.0; classes];
    let mut mean = vec![vec![0.0; m]; classes];
    for (x, c, w) in points {
        count[*c] += w;
        for j in 0..m {
            mean[*c][j] += w * x[j];
        }
    }
    for c in 0..classes {
        if count[c] > 0.0 {
            for j in 0..m {
                mean[c][j] /= count[c];
            }
        }
    }
    let total: f64 = count.iter().sum();
    let mut grand = vec![0.0; m];
    for c in 0..classes {
        for j in 0..m {
            grand[j] += count[c] * mean[c][j] / total;
        }
    }
    let mut sw = zeros(m);
    for (x, c, w) in points {
        for a in 0..m {
            for b in 0..m {
                sw[a][b] += w * (x[a] - mean[*c][a]) * (x[b] - mean[*c][b]);
            }
        }
    }
    let mut sb = zeros(m);
    for c in 0..classes {
        for a in 0..m {
            for b in 0..m {
                sb[a][b] += count[c] * (mean[c][a] - grand[a]) * (mean[c][b] - grand[b]);
            }
        }
    }
    (sw, sb)
}

pub fn scatter(batch: &LabeledFeatureBatch) -> (Dense, Dense) {
    let points: Vec<_> = batch
        .features()
        .row_iter()
        .zip(batch.labels())
        .map(|(r, &c)| (r.to_vec(), c, 1.0))
        .collect();
    weighted_scatter(&points, batch.class_count())
}

pub fn trace(a: &Dense) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// `S_w + ε (trace(S_w)/M + 1) I`.
pub fn regularized(sw: &Dense, eps: f64) -> Dense {
    let m = sw.len();
    let r = eps * (trace(sw) / m as f64 + 1.0);
    let mut out = sw.clone();
    for i in 0..m {
        out[i][i] += r;
    }
    out
}

pub fn mat_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Dense = a.iter().zip(b).map(|(r, &v)| {
        let mut row = r.clone();
        row.push(v);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for k in col..=n {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs() / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + h;
            let up = f(&p);
            p[k] = orig - h;
            let down = f(&p);
            p[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise gap over the larger infinity norm.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1e-12_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows[0].len();
    let mut out = vec![0.0; m];
    for r in rows {
        for j in 0..m {
            out[j] += r[j];
        }
    }
    out.iter().map(|v| v / rows.len() as f64).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
