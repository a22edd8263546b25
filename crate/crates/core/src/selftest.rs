//! Built-in consistency checks: analytic gradients against central finite
//! differences, and streaming statistics against one-shot batch fits.

use rand::Rng;

use crate::error::Result;
use crate::lda::{fit_lda, LabeledFeatureBatch, DEFAULT_EPSILON};
use crate::linalg::Matrix;
use crate::net::{Activation, MlpNetwork};
use crate::objectives::{
    disc_eigen_objective, disc_eigen_objective_streaming, gen_conditional_objective,
    gen_unsupervised_objective,
};
use crate::rng::{gaussian_matrix, stream_rng, RunRng, Stream};
use crate::stream::StreamStats;

pub const FD_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const SNAPSHOT_TOLERANCE: f64 = 1e-10;
pub const SPLIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "check {} instances={} max_error={:.3e} tolerance={:.0e} {}",
            self.name,
            self.instances,
            self.max_error,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Central differences of a scalar function of a matrix.
pub fn central_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> Result<f64>) -> Result<Matrix> {
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = f(&probe)?;
        probe.as_mut_slice()[k] = orig - h;
        let down = f(&probe)?;
        probe.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Largest elementwise gap, relative to the larger infinity norm of the two.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Runs every check with `instances` random cases each.
pub fn run_all(seed: u64, instances: usize) -> Result<Vec<CheckResult>> {
    let mut rng = stream_rng(seed, Stream::Evaluation);
    Ok(vec![
        check_disc_gradient(&mut rng, instances)?,
        check_disc_streaming_gradient(&mut rng, instances)?,
        check_gen_unsupervised_gradient(&mut rng, instances)?,
        check_gen_conditional_gradient(&mut rng, instances)?,
        check_net_backward(&mut rng, instances)?,
        check_stream_snapshot(&mut rng, instances)?,
        check_stream_split(&mut rng, instances)?,
    ])
}

/// Class-shifted Gaussian features with every class holding at least two rows.
pub fn random_batch(rng: &mut RunRng, classes: usize, dim: usize, per_class_max: usize) -> Result<LabeledFeatureBatch> {
    let counts: Vec<usize> = (0..classes).map(|_| rng.gen_range(2..=per_class_max.max(2))).collect();
    let n: usize = counts.iter().sum();
    let centers = gaussian_matrix(rng, classes, dim).scale(1.5);
    let noise = gaussian_matrix(rng, n, dim);
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    let features = Matrix::from_fn(n, dim, |i, j| centers[(labels[i], j)] + noise[(i, j)]);
    LabeledFeatureBatch::new(features, labels, classes)
}

fn relabel(batch: &LabeledFeatureBatch, features: &Matrix) -> Result<LabeledFeatureBatch> {
    LabeledFeatureBatch::new(features.clone(), batch.labels().to_vec(), batch.class_count())
}

fn check_disc_gradient(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let batch = random_batch(rng, 2 + k % 3, 2 + k % 4, 6)?;
        let analytic = disc_eigen_objective(&batch, DEFAULT_EPSILON)?;
        let numeric = central_difference(batch.features(), FD_STEP, |u| {
            Ok(disc_eigen_objective(&relabel(&batch, u)?, DEFAULT_EPSILON)?.objective_value)
        })?;
        worst = worst.max(relative_error(analytic.grads.as_slice(), numeric.as_slice()));
    }
    Ok(CheckResult {
        name: "disc_eigen_gradient",
        instances,
        max_error: worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

fn check_disc_streaming_gradient(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let (c, m) = (2 + k % 3, 2 + k % 3);
        let mut history = StreamStats::new(c, m, 0.8)?;
        history.accumulate(&random_batch(rng, c, m, 5)?)?;
        history.decay();
        let batch = random_batch(rng, c, m, 4)?;
        let analytic = disc_eigen_objective_streaming(&history, &batch, DEFAULT_EPSILON)?;
        let numeric = central_difference(batch.features(), FD_STEP, |u| {
            Ok(disc_eigen_objective_streaming(&history, &relabel(&batch, u)?, DEFAULT_EPSILON)?
                .gradient
                .objective_value)
        })?;
        worst = worst.max(relative_error(analytic.gradient.grads.as_slice(), numeric.as_slice()));
    }
    Ok(CheckResult {
        name: "disc_eigen_streaming_gradient",
        instances,
        max_error: worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

fn check_gen_unsupervised_gradient(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let m = 2 + k % 4;
        let model = fit_lda(&random_batch(rng, 2, m, 8)?, DEFAULT_EPSILON)?;
        let u = gaussian_matrix(rng, 3 + k % 5, m);
        let analytic = gen_unsupervised_objective(&model, &u)?;
        let numeric = central_difference(&u, FD_STEP, |v| Ok(gen_unsupervised_objective(&model, v)?.objective_value))?;
        worst = worst.max(relative_error(analytic.grads.as_slice(), numeric.as_slice()));
    }
    Ok(CheckResult {
        name: "gen_unsupervised_gradient",
        instances,
        max_error: worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

fn check_gen_conditional_gradient(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let (c, m) = (2 + k % 4, 2 + k % 3);
        let model = fit_lda(&random_batch(rng, c, m, 6)?, DEFAULT_EPSILON)?;
        let n = 3 + k % 5;
        let u = gaussian_matrix(rng, n, m);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let analytic = gen_conditional_objective(&model, &u, &targets)?;
        let numeric = central_difference(&u, FD_STEP, |v| {
            Ok(gen_conditional_objective(&model, v, &targets)?.objective_value)
        })?;
        worst = worst.max(relative_error(analytic.grads.as_slice(), numeric.as_slice()));
    }
    Ok(CheckResult {
        name: "gen_conditional_gradient",
        instances,
        max_error: worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

const ACTIVATIONS: [Activation; 4] = [
    Activation::LeakyRelu,
    Activation::Relu,
    Activation::Tanh,
    Activation::Identity,
];

/// Network with unit-scale weights so every layer contributes to the check.
pub fn random_network(rng: &mut RunRng, dims: &[usize], activations: &[Activation]) -> Result<MlpNetwork> {
    let mut net = MlpNetwork::new(dims, activations, rng)?;
    for t in net.params_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    Ok(net)
}

// Loss Σ R ⊙ net(x): its output gradient is R.
fn weighted_output(net: &MlpNetwork, x: &Matrix, r: &Matrix) -> Result<f64> {
    let out = net.predict(x)?;
    Ok(out.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum())
}

fn check_net_backward(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let depth = 1 + k % 3;
        let dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..5)).collect();
        let acts: Vec<Activation> = (0..depth).map(|l| ACTIVATIONS[(k + l) % 4]).collect();
        let net = random_network(rng, &dims, &acts)?;
        let x = gaussian_matrix(rng, 3, dims[0]);
        let r = gaussian_matrix(rng, 3, dims[depth]);
        let (_, tape) = net.forward(&x)?;
        let (grads, grad_x) = net.backward(&tape, &r)?;

        let numeric_x = central_difference(&x, FD_STEP, |v| weighted_output(&net, v, &r))?;
        worst = worst.max(relative_error(grad_x.as_slice(), numeric_x.as_slice()));

        let analytic: Vec<f64> = grads.tensors.iter().flatten().copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut probe = net.clone();
        let tensors = grads.tensors.len();
        for t in 0..tensors {
            for i in 0..grads.tensors[t].len() {
                let orig = probe.params_mut()[t][i];
                probe.params_mut()[t][i] = orig + FD_STEP;
                let up = weighted_output(&probe, &x, &r)?;
                probe.params_mut()[t][i] = orig - FD_STEP;
                let down = weighted_output(&probe, &x, &r)?;
                probe.params_mut()[t][i] = orig;
                numeric.push((up - down) / (2.0 * FD_STEP));
            }
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(CheckResult {
        name: "net_backward",
        instances,
        max_error: worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

fn check_stream_snapshot(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let (c, m) = (2 + k % 3, 2 + k % 4);
        let batch = random_batch(rng, c, m, 8)?;
        let mut stats = StreamStats::new(c, m, 1.0)?;
        stats.accumulate(&batch)?;
        let a = stats.snapshot(DEFAULT_EPSILON)?.eigenvalues;
        let b = fit_lda(&batch, DEFAULT_EPSILON)?.eigenvalues;
        worst = a.iter().zip(&b).fold(worst, |w, (x, y)| w.max((x - y).abs()));
    }
    Ok(CheckResult {
        name: "stream_single_batch",
        instances,
        max_error: worst,
        tolerance: SNAPSHOT_TOLERANCE,
    })
}

fn check_stream_split(rng: &mut RunRng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let (c, m) = (2 + k % 3, 2 + k % 4);
        let batch = random_batch(rng, c, m, 8)?;
        let n = batch.len();
        let cut = rng.gen_range(1..n);
        let part = |idx: Vec<usize>| {
            let labels = idx.iter().map(|&i| batch.labels()[i]).collect();
            LabeledFeatureBatch::new(batch.features().select_rows(&idx), labels, c)
        };
        let mut stats = StreamStats::new(c, m, 1.0)?;
        stats.accumulate(&part((0..cut).collect())?)?;
        stats.accumulate(&part((cut..n).collect())?)?;
        let a = stats.snapshot(DEFAULT_EPSILON)?.eigenvalues;
        let b = fit_lda(&batch, DEFAULT_EPSILON)?.eigenvalues;
        worst = a.iter().zip(&b).fold(worst, |w, (x, y)| w.max((x - y).abs()));
    }
    Ok(CheckResult {
        name: "stream_split_batch",
        instances,
        max_error: worst,
        tolerance: SPLIT_TOLERANCE,
    })
}
