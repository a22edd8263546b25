use super::sample_rows;
use crate::config::ProbeConfig;
use crate::data::Dataset;
use crate::error::{LdganError, Result};
use crate::lda::{fit_lda, LabeledFeatureBatch};
use crate::linalg::Matrix;
use crate::net::{Activation, Direction, MlpNetwork, RmsPropConfig, RmsPropState};
use crate::objectives::disc_eigen_objective;
use crate::rng::{stream_rng, Stream};

/// One trained LDA classifier.
#[derive(Debug, Clone)]
pub struct ProbeArm {
    /// Mean eigenvalue of each training minibatch.
    pub curve: Vec<f64>,
    /// Eigenvalues of a fit on the arm's full training set after training.
    pub final_eigenvalues: Vec<f64>,
    pub extractor: MlpNetwork,
}

impl ProbeArm {
    pub fn final_mean(&self) -> f64 {
        self.final_eigenvalues.iter().sum::<f64>() / self.final_eigenvalues.len().max(1) as f64
    }
}

#[derive(Debug)]
pub struct ProbeResult {
    /// Classifier over the `C` real classes.
    pub real_only: Result<ProbeArm>,
    /// Classifier over `2C` classes: real `c` and generated `C + c`.
    pub mixed: ProbeArm,
    /// Full-data fits through the arms' common initial extractor.
    pub initial: InitialFits,
}

/// Eigenvalues of both constructions under one feature map: the initialization the
/// two arms share before training pulls them apart.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialFits {
    /// `C`-class fit of the real samples; `None` when `C < 2`.
    pub real: Option<Vec<f64>>,
    /// `2C`-class fit of real and generated samples.
    pub mixed: Vec<f64>,
}

/// Trains a real-only and a mixed real/generated deep LDA classifier from the same
/// initialization and reports their eigenvalue trajectories.
pub fn generalization_probe(
    real: &Dataset,
    generated: &Dataset,
    config: &ProbeConfig,
    seed: u64,
) -> Result<ProbeResult> {
    if real.class_count != generated.class_count {
        return Err(LdganError::invalid(format!(
            "real data has {} classes, generated has {}",
            real.class_count, generated.class_count
        )));
    }
    if real.dim() != generated.dim() {
        return Err(LdganError::invalid("real and generated samples differ in width"));
    }
    let c = real.class_count;

    let real_pools = real.class_indices();
    let real_only = train_arm(&real.samples, &real_pools, config, seed);

    let mixed_samples = real.samples.vstack(&generated.samples)?;
    let offset = real.len();
    let mut mixed_pools = real_pools;
    mixed_pools.extend(
        generated
            .class_indices()
            .into_iter()
            .map(|p| p.into_iter().map(|i| i + offset).collect::<Vec<_>>()),
    );
    let mixed = train_arm(&mixed_samples, &mixed_pools, config, seed)?;

    let labels: Vec<usize> = real
        .labels
        .iter()
        .copied()
        .chain(generated.labels.iter().map(|&l| l + c))
        .collect();
    let init = init_extractor(real.dim(), config, seed)?;
    let u = init.predict(&mixed_samples)?;
    let mixed_fit = fit_lda(&LabeledFeatureBatch::new(u.clone(), labels, 2 * c)?, config.epsilon)?;
    let real_rows: Vec<usize> = (0..real.len()).collect();
    let real_fit = if c >= 2 {
        let batch = LabeledFeatureBatch::new(u.select_rows(&real_rows), real.labels.clone(), c)?;
        Some(fit_lda(&batch, config.epsilon)?.eigenvalues)
    } else {
        None
    };
    let initial = InitialFits {
        real: real_fit,
        mixed: mixed_fit.eigenvalues,
    };

    Ok(ProbeResult {
        real_only,
        mixed,
        initial,
    })
}

fn init_extractor(dim: usize, config: &ProbeConfig, seed: u64) -> Result<MlpNetwork> {
    MlpNetwork::new(
        &[dim, config.hidden, config.hidden, config.feature_dim],
        &[Activation::LeakyRelu, Activation::LeakyRelu, Activation::Identity],
        &mut stream_rng(seed, Stream::ProbeInit),
    )
}

fn train_arm(samples: &Matrix, pools: &[Vec<usize>], config: &ProbeConfig, seed: u64) -> Result<ProbeArm> {
    let classes = pools.len();
    let populated = pools.iter().filter(|p| !p.is_empty()).count();
    if populated < 2 {
        return Err(LdganError::InsufficientClasses { populated });
    }
    let mut batch_rng = stream_rng(seed, Stream::ProbeBatches);
    let mut extractor = init_extractor(samples.cols(), config, seed)?;
    let mut opt = RmsPropState::new(&extractor, RmsPropConfig::with_learning_rate(config.learning_rate));
    let labels: Vec<usize> = (0..classes)
        .flat_map(|c| std::iter::repeat_n(c, config.per_class))
        .collect();

    let mut curve = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let x = sample_rows(samples, pools, config.per_class, &mut batch_rng)?;
        let (u, tape) = extractor.forward(&x)?;
        let batch = LabeledFeatureBatch::new(u, labels.clone(), classes)?;
        let obj = disc_eigen_objective(&batch, config.epsilon)?;
        let (grads, _) = extractor.backward(&tape, &obj.grads)?;
        opt.step(&mut extractor, &grads, Direction::Ascend)?;
        curve.push(obj.objective_value);
    }

    let mut all_idx = Vec::new();
    let mut all_labels = Vec::new();
    for (c, pool) in pools.iter().enumerate() {
        all_idx.extend_from_slice(pool);
        all_labels.extend(std::iter::repeat_n(c, pool.len()));
    }
    let u = extractor.predict(&samples.select_rows(&all_idx))?;
    let final_eigenvalues = fit_lda(&LabeledFeatureBatch::new(u, all_labels, classes)?, config.epsilon)?.eigenvalues;
    Ok(ProbeArm {
        curve,
        final_eigenvalues,
        extractor,
    })
}
