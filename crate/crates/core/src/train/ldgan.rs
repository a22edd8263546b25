use std::time::Instant;

use super::{
    balance_schedule, conditional_noise, mean_distance, mean_feature_variance, sample_rows,
    BalanceMode, BalancingScheme, Observer,
};
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LdganError, Result};
use crate::lda::{LabeledFeatureBatch, LdaModel};
use crate::linalg::Matrix;
use crate::metrics::MetricsRecord;
use crate::net::{Direction, MlpNetwork, RmsPropState};
use crate::objectives::{
    disc_eigen_objective_streaming, gen_conditional_objective, gen_unsupervised_objective,
};
use crate::rng::{stream_rng, Stream};
use crate::stream::StreamStats;

#[derive(Debug, Clone)]
pub struct LdGanOutcome {
    pub generator: MlpNetwork,
    pub extractor: MlpNetwork,
    pub metrics: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GenObjective {
    Unsupervised,
    Conditional,
}

struct Plan {
    /// Index pools of the real classes, in class order.
    pools: Vec<Vec<usize>>,
    gen_classes: usize,
    per_class: usize,
    scheme: BalancingScheme,
    objective: GenObjective,
}

impl Plan {
    fn real_classes(&self) -> usize {
        self.pools.len()
    }

    fn total_classes(&self) -> usize {
        self.real_classes() + self.gen_classes
    }

    /// Real rows labelled 0..C_r, generated rows C_r..C_r+C_g, both class-major.
    fn labels(&self) -> Vec<usize> {
        let cr = self.real_classes();
        let real = (0..cr).flat_map(|c| std::iter::repeat_n(c, self.per_class));
        let gen = (0..self.gen_classes).flat_map(|c| std::iter::repeat_n(cr + c, self.per_class));
        real.chain(gen).collect()
    }

    fn targets(&self) -> Vec<usize> {
        (0..self.gen_classes)
            .flat_map(|c| std::iter::repeat_n(c, self.per_class))
            .collect()
    }
}

/// Unsupervised LD-GAN: real samples form one class and generated samples another.
/// The discriminator side keeps decayed LDA statistics across updates; update counts
/// come from `config.scheme` (dynamic balancing by default).
pub fn train_unsupervised(
    config: &TrainConfig,
    generator: MlpNetwork,
    extractor: MlpNetwork,
    data: &Dataset,
    observer: Option<&mut Observer<'_>>,
) -> Result<LdGanOutcome> {
    let plan = Plan {
        pools: vec![(0..data.len()).collect()],
        gen_classes: 1,
        per_class: config.batch_size,
        scheme: config.scheme.clone(),
        objective: GenObjective::Unsupervised,
    };
    run(config, &plan, generator, extractor, data, observer)
}

/// Class-conditional LD-GAN. The LDA separates `C_r` real classes from `C_g`
/// generated ones (generated class `c` is labelled `C_r + c`), and the generator pulls
/// class `c` toward the hyperplane of real class `c`. Update counts come from
/// `config.conditional_scheme`, which must be fixed.
pub fn train_conditional(
    config: &TrainConfig,
    generator: MlpNetwork,
    extractor: MlpNetwork,
    data: &Dataset,
    observer: Option<&mut Observer<'_>>,
) -> Result<LdGanOutcome> {
    if config.conditional_scheme.mode != BalanceMode::Fixed {
        return Err(LdganError::Config(
            "conditional training uses a fixed update scheme".into(),
        ));
    }
    let cr = config.real_classes.unwrap_or(data.class_count);
    let cg = config.generated_classes.unwrap_or(cr);
    if cr > data.class_count {
        return Err(LdganError::invalid(format!(
            "{cr} real classes requested, dataset has {}",
            data.class_count
        )));
    }
    if cg > cr {
        return Err(LdganError::invalid(format!(
            "{cg} generated classes but only {cr} real classes to target"
        )));
    }
    let mut pools = data.class_indices();
    pools.truncate(cr);
    let plan = Plan {
        pools,
        gen_classes: cg,
        per_class: (config.batch_size / cr).max(1),
        scheme: config.conditional_scheme.clone(),
        objective: GenObjective::Conditional,
    };
    run(config, &plan, generator, extractor, data, observer)
}

fn non_finite(stage: &'static str, iteration: usize, partial: &MetricsRecord) -> LdganError {
    LdganError::NonFinite {
        stage,
        iteration,
        record: Box::new(partial.clone()),
    }
}

fn run(
    config: &TrainConfig,
    plan: &Plan,
    mut generator: MlpNetwork,
    mut extractor: MlpNetwork,
    data: &Dataset,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<LdGanOutcome> {
    if generator.output_dim() != data.dim() || extractor.input_dim() != data.dim() {
        return Err(LdganError::invalid(format!(
            "generator output {} / extractor input {} must match data width {}",
            generator.output_dim(),
            extractor.input_dim(),
            data.dim()
        )));
    }
    let m = extractor.output_dim();
    let mut stats = StreamStats::new(plan.total_classes(), m, config.eta)?;
    let mut real_rng = stream_rng(config.seed, Stream::RealBatches);
    let mut noise_rng = stream_rng(config.seed, Stream::Noise);
    let mut opt_g = RmsPropState::new(&generator, config.optimizer.rmsprop(config.optimizer.generator_lr));
    let mut opt_e = RmsPropState::new(&extractor, config.optimizer.rmsprop(config.optimizer.extractor_lr));

    let labels = plan.labels();
    let targets = plan.targets();
    let n_real = plan.real_classes() * plan.per_class;
    let started = Instant::now();
    let mut lambda_hat: Option<f64> = None;
    let mut model: Option<LdaModel> = None;
    let mut metrics = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let z = conditional_noise(&mut noise_rng, config.z_dim, plan.gen_classes, plan.per_class);
        let x_g = generator.predict(&z)?;
        let x_r = sample_rows(&data.samples, &plan.pools, plan.per_class, &mut real_rng)?;
        let x = x_r.vstack(&x_g)?;

        let mut record = MetricsRecord {
            iteration: it,
            lambda_mean: lambda_hat.unwrap_or(f64::NAN),
            mean_discrepancy: class_mean_gap(&x_r, &x_g, plan),
            var_real: f64::NAN,
            var_gen: f64::NAN,
            i_d: 0,
            i_g: 0,
            wall_seconds: 0.0,
        };
        if !x_g.is_finite() {
            return Err(non_finite("generator output", it, &record));
        }

        let lam = match lambda_hat {
            Some(l) => l,
            None => {
                // no snapshot yet: score the untouched first minibatch
                let u = extractor.predict(&x)?;
                let batch = feature_batch(u, &labels, plan, it, &record)?;
                disc_eigen_objective_streaming(&stats, &batch, config.epsilon)?
                    .model
                    .mean_eigenvalue()
            }
        };
        let (i_d, i_g) = balance_schedule(&plan.scheme, lam);
        record.i_d = i_d;
        record.i_g = i_g;

        for k in 0..i_d {
            let (u, tape) = extractor.forward(&x)?;
            if k == 0 {
                record.var_real = mean_feature_variance(&u.select_rows(&(0..n_real).collect::<Vec<_>>()));
                record.var_gen =
                    mean_feature_variance(&u.select_rows(&(n_real..u.rows()).collect::<Vec<_>>()));
            }
            let batch = feature_batch(u, &labels, plan, it, &record)?;
            let disc = disc_eigen_objective_streaming(&stats, &batch, config.epsilon)?;
            let value = disc.gradient.objective_value;
            if !value.is_finite() {
                return Err(non_finite("discriminator objective", it, &record));
            }
            let (grads, _) = extractor.backward(&tape, &disc.gradient.grads)?;
            if !grads.is_finite() {
                return Err(non_finite("discriminator gradient", it, &record));
            }
            opt_e.step(&mut extractor, &grads, Direction::Ascend)?;
            stats.accumulate(&batch)?;
            stats.decay();
            lambda_hat = Some(value);
            record.lambda_mean = value;
            model = Some(disc.model);
        }

        let hyperplanes = model.as_ref().expect("at least one discriminator update ran");
        for _ in 0..i_g {
            let z = conditional_noise(&mut noise_rng, config.z_dim, plan.gen_classes, plan.per_class);
            let (x_g, tape_g) = generator.forward(&z)?;
            let (u, tape_e) = extractor.forward(&x_g)?;
            if !u.is_finite() {
                return Err(non_finite("generated features", it, &record));
            }
            let obj = match plan.objective {
                GenObjective::Unsupervised => gen_unsupervised_objective(hyperplanes, &u)?,
                GenObjective::Conditional => gen_conditional_objective(hyperplanes, &u, &targets)?,
            };
            if !obj.objective_value.is_finite() {
                return Err(non_finite("generator objective", it, &record));
            }
            let (_, grad_x) = extractor.backward(&tape_e, &obj.grads)?;
            let (grads, _) = generator.backward(&tape_g, &grad_x)?;
            if !grads.is_finite() {
                return Err(non_finite("generator gradient", it, &record));
            }
            opt_g.step(&mut generator, &grads, Direction::Descend)?;
        }

        if config.record_wall_time {
            record.wall_seconds = started.elapsed().as_secs_f64();
        }
        if !record.is_finite() {
            return Err(non_finite("metrics", it, &record));
        }
        if let Some(obs) = observer.as_mut() {
            obs(&record, &generator, &extractor)?;
        }
        metrics.push(record);
    }

    Ok(LdGanOutcome {
        generator,
        extractor,
        metrics,
    })
}

fn feature_batch(
    u: Matrix,
    labels: &[usize],
    plan: &Plan,
    it: usize,
    record: &MetricsRecord,
) -> Result<LabeledFeatureBatch> {
    if !u.is_finite() {
        return Err(non_finite("features", it, record));
    }
    LabeledFeatureBatch::new(u, labels.to_vec(), plan.total_classes())
}

/// Mean over generated classes of the distance between the generated and target real
/// class means of this minibatch.
fn class_mean_gap(x_r: &Matrix, x_g: &Matrix, plan: &Plan) -> f64 {
    let p = plan.per_class;
    let gaps: f64 = (0..plan.gen_classes)
        .map(|c| {
            let r: Vec<usize> = (c * p..(c + 1) * p).collect();
            mean_distance(&x_r.select_rows(&r), &x_g.select_rows(&r))
        })
        .sum();
    gaps / plan.gen_classes as f64
}
