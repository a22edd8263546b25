//! Training loops: LD-GAN (unsupervised with dynamic balancing, and class
//! conditional), the clipped-critic WGAN baseline, and the mixed-class probe.

mod ldgan;
mod probe;
mod wgan;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ldgan::{train_conditional, train_unsupervised, LdGanOutcome};
pub use probe::{generalization_probe, InitialFits, ProbeArm, ProbeResult};
pub use wgan::{train_wgan_baseline, WganOutcome};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LdganError, Result};
use crate::linalg::Matrix;
use crate::metrics::MetricsRecord;
use crate::net::{Activation, MlpNetwork};
use crate::rng::{gaussian_matrix, stream_rng, RunRng, Stream};

/// Called once per outer iteration with the new record and the two networks
/// (generator first).
pub type Observer<'a> = dyn FnMut(&MetricsRecord, &MlpNetwork, &MlpNetwork) -> Result<()> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    Dynamic,
    Fixed,
}

/// How many discriminator and generator updates to run per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancingScheme {
    pub mode: BalanceMode,
    pub fixed_id: usize,
    pub fixed_ig: usize,
    pub lambda_floor: f64,
}

impl Default for BalancingScheme {
    fn default() -> Self {
        BalancingScheme {
            mode: BalanceMode::Dynamic,
            fixed_id: 2,
            fixed_ig: 2,
            lambda_floor: 1e-6,
        }
    }
}

impl BalancingScheme {
    pub fn fixed(i_d: usize, i_g: usize) -> Self {
        BalancingScheme {
            mode: BalanceMode::Fixed,
            fixed_id: i_d,
            fixed_ig: i_g,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed_id == 0 || self.fixed_ig == 0 {
            return Err(LdganError::invalid("fixed update counts must be at least 1"));
        }
        if !(self.lambda_floor > 0.0) {
            return Err(LdganError::invalid("lambda_floor must be positive"));
        }
        Ok(())
    }
}

/// `(i_d, i_g)` for the current mean eigenvalue. Dynamic mode runs
/// `floor(ln λ)` generator and `floor(ln 1/λ)` discriminator updates, each at least 1,
/// with λ floored at `lambda_floor`.
pub fn balance_schedule(scheme: &BalancingScheme, lambda_mean: f64) -> (usize, usize) {
    match scheme.mode {
        BalanceMode::Fixed => (scheme.fixed_id, scheme.fixed_ig),
        BalanceMode::Dynamic => {
            let ln = lambda_mean.max(scheme.lambda_floor).ln();
            let count = |x: f64| {
                // absorb the ulp lost in ln(exp(k)) so integer logs land on k
                let f = (x + 1e-12).floor();
                if f >= 1.0 {
                    f as usize
                } else {
                    1
                }
            };
            (count(-ln), count(ln))
        }
    }
}

/// The run's training data, drawn from the dataset stream of `cfg.seed`.
pub fn build_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    cfg.dataset.build(cfg.dataset_size, &mut stream_rng(cfg.seed, Stream::Dataset))
}

/// Generated classes of a conditional run on `data`.
pub fn conditional_classes(cfg: &TrainConfig, data: &Dataset) -> usize {
    let cr = cfg.real_classes.unwrap_or(data.class_count);
    cfg.generated_classes.unwrap_or(cr)
}

/// Unsupervised run with networks initialized from the config's seed.
pub fn run_unsupervised(cfg: &TrainConfig, data: &Dataset, observer: Option<&mut Observer<'_>>) -> Result<LdGanOutcome> {
    let generator = build_generator(cfg, cfg.z_dim, data.dim(), &mut stream_rng(cfg.seed, Stream::GeneratorInit))?;
    let extractor = build_extractor(cfg, data.dim(), &mut stream_rng(cfg.seed, Stream::ExtractorInit))?;
    train_unsupervised(cfg, generator, extractor, data, observer)
}

/// Conditional run with networks initialized from the config's seed.
pub fn run_conditional(cfg: &TrainConfig, data: &Dataset, observer: Option<&mut Observer<'_>>) -> Result<LdGanOutcome> {
    let input = generator_input_dim(cfg.z_dim, conditional_classes(cfg, data));
    let generator = build_generator(cfg, input, data.dim(), &mut stream_rng(cfg.seed, Stream::GeneratorInit))?;
    let extractor = build_extractor(cfg, data.dim(), &mut stream_rng(cfg.seed, Stream::ExtractorInit))?;
    train_conditional(cfg, generator, extractor, data, observer)
}

/// WGAN baseline run; the critic takes the extractor's init stream.
pub fn run_wgan(cfg: &TrainConfig, data: &Dataset, observer: Option<&mut Observer<'_>>) -> Result<WganOutcome> {
    let generator = build_generator(cfg, cfg.z_dim, data.dim(), &mut stream_rng(cfg.seed, Stream::GeneratorInit))?;
    let critic = build_critic(cfg, data.dim(), &mut stream_rng(cfg.seed, Stream::ExtractorInit))?;
    train_wgan_baseline(cfg, generator, critic, data, observer)
}

/// Generator `z (+ one-hot) -> hidden -> hidden -> data`.
pub fn build_generator(cfg: &TrainConfig, input_dim: usize, data_dim: usize, rng: &mut RunRng) -> Result<MlpNetwork> {
    MlpNetwork::new(
        &[input_dim, cfg.hidden, cfg.hidden, data_dim],
        &[Activation::LeakyRelu, Activation::LeakyRelu, cfg.generator_head],
        rng,
    )
}

/// Feature extractor `data -> hidden -> hidden -> feature_dim`.
pub fn build_extractor(cfg: &TrainConfig, data_dim: usize, rng: &mut RunRng) -> Result<MlpNetwork> {
    MlpNetwork::new(
        &[data_dim, cfg.hidden, cfg.hidden, cfg.feature_dim],
        &[Activation::LeakyRelu, Activation::LeakyRelu, Activation::Identity],
        rng,
    )
}

/// Critic `data -> hidden -> hidden -> 1`.
pub fn build_critic(cfg: &TrainConfig, data_dim: usize, rng: &mut RunRng) -> Result<MlpNetwork> {
    MlpNetwork::new(
        &[data_dim, cfg.hidden, cfg.hidden, 1],
        &[Activation::LeakyRelu, Activation::LeakyRelu, Activation::Identity],
        rng,
    )
}

/// Generator input for `per_class` rows of each of `classes` classes, class-major.
/// A one-hot code is appended only when there is more than one class.
pub fn conditional_noise(rng: &mut RunRng, z_dim: usize, classes: usize, per_class: usize) -> Matrix {
    let z = gaussian_matrix(rng, classes * per_class, z_dim);
    if classes <= 1 {
        return z;
    }
    Matrix::from_fn(classes * per_class, z_dim + classes, |i, j| {
        if j < z_dim {
            z[(i, j)]
        } else if j - z_dim == i / per_class {
            1.0
        } else {
            0.0
        }
    })
}

pub fn generator_input_dim(z_dim: usize, gen_classes: usize) -> usize {
    if gen_classes > 1 {
        z_dim + gen_classes
    } else {
        z_dim
    }
}

/// `per_class` rows drawn with replacement from each index pool, pool-major.
pub(crate) fn sample_rows(data: &Matrix, pools: &[Vec<usize>], per_class: usize, rng: &mut RunRng) -> Result<Matrix> {
    let mut idx = Vec::with_capacity(pools.len() * per_class);
    for (c, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            return Err(LdganError::invalid(format!("class {c} has no samples")));
        }
        for _ in 0..per_class {
            idx.push(pool[rng.gen_range(0..pool.len())]);
        }
    }
    Ok(data.select_rows(&idx))
}

/// Mean over columns of the per-column population variance.
pub(crate) fn mean_feature_variance(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let mean = m.column_means();
    let mut acc = 0.0;
    for r in m.row_iter() {
        for (v, mu) in r.iter().zip(&mean) {
            acc += (v - mu) * (v - mu);
        }
    }
    acc / (m.rows() * m.cols()) as f64
}

pub(crate) fn mean_distance(a: &Matrix, b: &Matrix) -> f64 {
    let (ma, mb) = (a.column_means(), b.column_means());
    ma.iter()
        .zip(&mb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Draws `n` samples per generated class (or `n` total when unconditional).
pub fn sample_generator(
    generator: &MlpNetwork,
    z_dim: usize,
    gen_classes: usize,
    n: usize,
    rng: &mut RunRng,
) -> Result<Matrix> {
    generator.predict(&conditional_noise(rng, z_dim, gen_classes, n))
}

/// Generated samples per class as a labelled dataset.
pub fn generated_dataset(
    generator: &MlpNetwork,
    z_dim: usize,
    gen_classes: usize,
    per_class: usize,
    rng: &mut RunRng,
) -> Result<Dataset> {
    let samples = sample_generator(generator, z_dim, gen_classes, per_class, rng)?;
    let labels = (0..gen_classes)
        .flat_map(|c| std::iter::repeat_n(c, per_class))
        .collect();
    Dataset::new(samples, labels, gen_classes)
}
