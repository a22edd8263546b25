use std::path::Path;

use ldgan::config::TrainConfig;
use ldgan::data::{Dataset, DatasetSpec};
use ldgan::linalg::Matrix;
use ldgan::metrics::{write_metrics, MetricsRecord};
use ldgan::train::{
    balance_schedule, build_dataset, build_extractor, build_generator, generalization_probe, run_conditional,
    run_unsupervised, run_wgan, train_unsupervised, BalancingScheme,
};
use ldgan::rng::{stream_rng, Stream};
use ldgan::LdganError;

fn small(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        dataset_size: 2000,
        ..TrainConfig::default()
    }
}

fn three_class(iterations: usize) -> TrainConfig {
    TrainConfig {
        dataset: DatasetSpec::equal_mixture(vec![vec![3.0, 0.0], vec![-1.5, 2.6], vec![-1.5, -2.6]], 0.2),
        ..small(iterations)
    }
}

fn metrics_bytes(records: &[MetricsRecord], dir: &Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    write_metrics(records, &path).unwrap();
    std::fs::read(path).unwrap()
}

#[test]
fn zero_iterations_leave_networks_untouched() {
    let cfg = small(0);
    let data = build_dataset(&cfg).unwrap();
    let g = build_generator(&cfg, cfg.z_dim, data.dim(), &mut stream_rng(cfg.seed, Stream::GeneratorInit)).unwrap();
    let e = build_extractor(&cfg, data.dim(), &mut stream_rng(cfg.seed, Stream::ExtractorInit)).unwrap();
    let out = train_unsupervised(&cfg, g.clone(), e.clone(), &data, None).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.generator.layers(), g.layers());
    assert_eq!(out.extractor.layers(), e.layers());
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(60);
    let data = build_dataset(&cfg).unwrap();
    let a = run_unsupervised(&cfg, &data, None).unwrap();
    let b = run_unsupervised(&cfg, &build_dataset(&cfg).unwrap(), None).unwrap();
    assert_eq!(metrics_bytes(&a.metrics, dir.path(), "a"), metrics_bytes(&b.metrics, dir.path(), "b"));
    assert_eq!(a.generator.layers(), b.generator.layers());

    let other = run_unsupervised(&TrainConfig { seed: 1, ..cfg }, &data, None).unwrap();
    assert_ne!(other.metrics, a.metrics);
}

#[test]
fn dynamic_schedule_follows_previous_eigenvalue() {
    let cfg = small(200);
    let out = run_unsupervised(&cfg, &build_dataset(&cfg).unwrap(), None).unwrap();
    assert_eq!(out.metrics.len(), 200);
    for t in 1..out.metrics.len() {
        let r = &out.metrics[t];
        assert!(r.i_d >= 1 && r.i_g >= 1);
        assert_eq!((r.i_d, r.i_g), balance_schedule(&cfg.scheme, out.metrics[t - 1].lambda_mean), "iteration {t}");
    }
}

#[test]
fn single_class_conditional_is_unsupervised() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        scheme: BalancingScheme::fixed(2, 2),
        ..small(80)
    };
    let data = build_dataset(&cfg).unwrap();
    assert_eq!(data.class_count, 1);
    let a = run_unsupervised(&cfg, &data, None).unwrap();
    let b = run_conditional(&cfg, &data, None).unwrap();
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(x, y);
    }
    assert_eq!(metrics_bytes(&a.metrics, dir.path(), "u"), metrics_bytes(&b.metrics, dir.path(), "c"));
    assert_eq!(a.generator.layers(), b.generator.layers());
}

#[test]
fn fewer_generated_than_real_classes() {
    let cfg = TrainConfig {
        generated_classes: Some(2),
        ..three_class(30)
    };
    let data = build_dataset(&cfg).unwrap();
    let out = run_conditional(&cfg, &data, None).unwrap();
    assert_eq!(out.metrics.len(), 30);
    assert!(out.metrics.iter().all(MetricsRecord::is_finite));
    assert_eq!(out.generator.input_dim(), cfg.z_dim + 2);
}

#[test]
fn conditional_rejects_dynamic_scheme() {
    let cfg = TrainConfig {
        conditional_scheme: BalancingScheme::default(),
        ..three_class(5)
    };
    let data = build_dataset(&cfg).unwrap();
    assert!(matches!(run_conditional(&cfg, &data, None), Err(LdganError::Config(_))));
}

#[test]
fn generated_variance_tracks_real_variance() {
    let cfg = TrainConfig::default();
    let out = run_unsupervised(&cfg, &build_dataset(&cfg).unwrap(), None).unwrap();
    let tail = &out.metrics[out.metrics.len() - 100..];
    let (vr, vg) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), r| (a + r.var_real / 100.0, b + r.var_gen / 100.0));
    let rel = (vg - vr).abs() / vr;
    assert!(rel <= 1.0, "var_real {vr} var_gen {vg}");
}

#[test]
fn wgan_respects_clip() {
    let cfg = small(40);
    let out = run_wgan(&cfg, &build_dataset(&cfg).unwrap(), None).unwrap();
    assert!(out.max_clipped_param <= cfg.wgan.clip);
    assert!(out.critic.max_abs_param() <= cfg.wgan.clip);
    assert_eq!(out.critic_steps_run, 40 * cfg.wgan.critic_steps);
}

fn dataset(rows: &[[f64; 2]], labels: &[usize], classes: usize) -> Dataset {
    Dataset::new(Matrix::from_rows(rows).unwrap(), labels.to_vec(), classes).unwrap()
}

#[test]
fn probe_with_one_class_reports_real_arm_failure() {
    let rows = [[0.0, 1.0], [1.0, 0.5], [0.3, -0.2], [-0.4, 0.9]];
    let real = dataset(&rows, &[0; 4], 1);
    let generated = dataset(&rows.map(|r| [r[0] + 2.0, r[1]]), &[0; 4], 1);
    let cfg = ldgan::config::ProbeConfig {
        iterations: 3,
        ..Default::default()
    };
    let result = generalization_probe(&real, &generated, &cfg, 0).unwrap();
    assert!(matches!(result.real_only, Err(LdganError::InsufficientClasses { .. })));
    assert_eq!(result.mixed.curve.len(), 3);
    assert!(result.initial.real.is_none());

    let two = dataset(&rows, &[0, 1, 0, 1], 2);
    assert!(matches!(
        generalization_probe(&two, &generated, &cfg, 0),
        Err(LdganError::InvalidInput(_))
    ));
}
