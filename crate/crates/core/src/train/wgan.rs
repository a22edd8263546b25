use std::time::Instant;

use super::{conditional_noise, mean_distance, mean_feature_variance, sample_rows, Observer};
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LdganError, Result};
use crate::lda::{fit_lda, LabeledFeatureBatch};
use crate::linalg::Matrix;
use crate::metrics::MetricsRecord;
use crate::net::{Direction, MlpNetwork, RmsPropState};
use crate::objectives::wgan_critic_objective;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone)]
pub struct WganOutcome {
    pub generator: MlpNetwork,
    pub critic: MlpNetwork,
    pub metrics: Vec<MetricsRecord>,
    /// Largest `|parameter|` seen right after any critic step's clipping.
    pub max_clipped_param: f64,
    pub critic_steps_run: usize,
}

/// Weight-clipped WGAN: `critic_steps` clipped critic ascents per generator step.
/// `lambda_mean` in the metrics comes from an LDA fit on the critic's last hidden
/// layer; it does not feed back into training.
pub fn train_wgan_baseline(
    config: &TrainConfig,
    mut generator: MlpNetwork,
    mut critic: MlpNetwork,
    data: &Dataset,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<WganOutcome> {
    if critic.output_dim() != 1 || critic.input_dim() != data.dim() || generator.output_dim() != data.dim() {
        return Err(LdganError::invalid("critic must map data to a scalar score"));
    }
    let clip = config.wgan.clip;
    let n = config.batch_size;
    let pools = vec![(0..data.len()).collect::<Vec<_>>()];
    let mut real_rng = stream_rng(config.seed, Stream::RealBatches);
    let mut noise_rng = stream_rng(config.seed, Stream::Noise);
    let mut opt_c = RmsPropState::new(&critic, config.optimizer.rmsprop(config.optimizer.critic_lr));
    let mut opt_g = RmsPropState::new(&generator, config.optimizer.rmsprop(config.optimizer.wgan_generator_lr));
    let probe_layer = critic.layers().len().checked_sub(2);
    let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();

    critic.clip_weights(clip)?;
    let started = Instant::now();
    let mut max_clipped = critic.max_abs_param();
    let mut steps = 0;
    let mut metrics = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let mut record = MetricsRecord {
            iteration: it,
            lambda_mean: f64::NAN,
            mean_discrepancy: f64::NAN,
            var_real: f64::NAN,
            var_gen: f64::NAN,
            i_d: config.wgan.critic_steps,
            i_g: config.wgan.generator_steps,
            wall_seconds: 0.0,
        };

        for k in 0..config.wgan.critic_steps {
            let x_r = sample_rows(&data.samples, &pools, n, &mut real_rng)?;
            let x_g = generator.predict(&conditional_noise(&mut noise_rng, config.z_dim, 1, n))?;
            let (scores, tape) = critic.forward(&x_r.vstack(&x_g)?)?;
            let s = scores.as_slice();
            let value = wgan_critic_objective(&s[..n], &s[n..])?;
            if !value.is_finite() {
                return Err(non_finite("critic objective", it, &record));
            }
            let grad_out = Matrix::from_fn(2 * n, 1, |i, _| if i < n { 1.0 / n as f64 } else { -1.0 / n as f64 });
            let (grads, _) = critic.backward(&tape, &grad_out)?;
            opt_c.step(&mut critic, &grads, Direction::Ascend)?;
            critic.clip_weights(clip)?;
            max_clipped = max_clipped.max(critic.max_abs_param());
            steps += 1;

            if k + 1 == config.wgan.critic_steps {
                record.mean_discrepancy = mean_distance(&x_r, &x_g);
                let hidden = match probe_layer.and_then(|l| tape.layer_output(l)) {
                    Some(h) => h.clone(),
                    None => scores.clone(),
                };
                let idx_r: Vec<usize> = (0..n).collect();
                let idx_g: Vec<usize> = (n..2 * n).collect();
                record.var_real = mean_feature_variance(&hidden.select_rows(&idx_r));
                record.var_gen = mean_feature_variance(&hidden.select_rows(&idx_g));
                if !hidden.is_finite() {
                    return Err(non_finite("critic features", it, &record));
                }
                let batch = LabeledFeatureBatch::new(hidden, labels.clone(), 2)?;
                record.lambda_mean = fit_lda(&batch, config.epsilon)?.mean_eigenvalue();
            }
        }

        for _ in 0..config.wgan.generator_steps {
            let z = conditional_noise(&mut noise_rng, config.z_dim, 1, n);
            let (x_g, tape_g) = generator.forward(&z)?;
            let (scores, tape_c) = critic.forward(&x_g)?;
            if !scores.is_finite() {
                return Err(non_finite("generator scores", it, &record));
            }
            // minimize −mean D(G(z))
            let grad_out = Matrix::from_fn(n, 1, |_, _| -1.0 / n as f64);
            let (_, grad_x) = critic.backward(&tape_c, &grad_out)?;
            let (grads, _) = generator.backward(&tape_g, &grad_x)?;
            opt_g.step(&mut generator, &grads, Direction::Descend)?;
        }

        if config.record_wall_time {
            record.wall_seconds = started.elapsed().as_secs_f64();
        }
        if !record.is_finite() {
            return Err(non_finite("metrics", it, &record));
        }
        if let Some(obs) = observer.as_mut() {
            obs(&record, &generator, &critic)?;
        }
        metrics.push(record);
    }

    Ok(WganOutcome {
        generator,
        critic,
        metrics,
        max_clipped_param: max_clipped,
        critic_steps_run: steps,
    })
}

fn non_finite(stage: &'static str, iteration: usize, partial: &MetricsRecord) -> LdganError {
    LdganError::NonFinite {
        stage,
        iteration,
        record: Box::new(partial.clone()),
    }
}
