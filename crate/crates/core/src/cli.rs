//! Command-line front end.
//!
//! Exit status is 0 on success, 1 on usage errors (bad flags, missing or invalid
//! config) and 2 on runtime failures. Every nonzero exit writes one line
//! `error kind=<tag> reason="<text>"` to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LdganError, Result};
use crate::metrics::{export_plot_tables, read_metrics, MetricsRecord, MetricsWriter};
use crate::net::MlpNetwork;
use crate::rng::{stream_rng, Stream};
use crate::selftest;
use crate::train::{
    build_dataset, conditional_classes, generalization_probe, generated_dataset, run_conditional,
    run_unsupervised, run_wgan, Observer,
};

pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const ABORT_FILE: &str = "abort.txt";
pub const PROBE_CURVES_FILE: &str = "probe_curves.csv";
pub const PROBE_SUMMARY_FILE: &str = "probe_summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    TrainUnsup,
    TrainCond,
    TrainWgan,
    Probe,
    ExportPlots,
    Selftest,
}

#[derive(Debug, Parser)]
#[command(name = "ldgan", version, about = "Linear-discriminant GAN training")]
pub struct Command {
    #[arg(value_enum)]
    pub verb: Verb,
    /// TOML run configuration (required except for `selftest`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory all outputs are written to.
    #[arg(long, default_value = "ldgan-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training iterations; for `selftest`, random instances per check.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(LdganError),
}

impl From<LdganError> for Failure {
    fn from(e: LdganError) -> Self {
        Failure::Runtime(e)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = match Command::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let reason = e.to_string();
            let first = reason.lines().next().unwrap_or("bad arguments");
            eprintln!("error kind=usage reason={:?}", first.trim_start_matches("error: "));
            return 1;
        }
    };
    match run(&cmd) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error kind=usage reason={msg:?}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error kind={} reason={:?}", e.kind(), e.to_string());
            2
        }
    }
}

fn run(cmd: &Command) -> std::result::Result<(), Failure> {
    if cmd.verb == Verb::Selftest {
        return run_selftest(cmd);
    }
    let cfg = load_config(cmd)?;
    fs::create_dir_all(&cmd.out).map_err(LdganError::from)?;
    let echo = cmd.out.join(CONFIG_ECHO_FILE);
    fs::write(&echo, cfg.to_toml()?).map_err(LdganError::from)?;
    println!("{}", echo.display());

    match cmd.verb {
        Verb::TrainUnsup | Verb::TrainCond | Verb::TrainWgan => train(cmd.verb, &cfg, &cmd.out)?,
        Verb::Probe => probe(&cfg, &cmd.out)?,
        Verb::ExportPlots => {
            let records = read_metrics(&cmd.out.join(METRICS_FILE))?;
            for p in export_plot_tables(&records, &cmd.out)? {
                println!("{}", p.display());
            }
        }
        Verb::Selftest => unreachable!(),
    }
    Ok(())
}

fn load_config(cmd: &Command) -> std::result::Result<TrainConfig, Failure> {
    let path = cmd
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required for this command".into()))?;
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", path.display())));
    }
    let mut cfg = TrainConfig::load(path)
        .map_err(|e| Failure::Usage(format!("cannot load config {}: {e}", path.display())))?;
    if let Some(seed) = cmd.seed {
        cfg.seed = seed;
    }
    if let Some(iters) = cmd.iters {
        cfg.iterations = iters;
    }
    Ok(cfg)
}

fn run_selftest(cmd: &Command) -> std::result::Result<(), Failure> {
    let results = selftest::run_all(cmd.seed.unwrap_or(0), cmd.iters.unwrap_or(20))?;
    let mut failed = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(LdganError::InvalidInput(format!(
            "self-test checks failed: {}",
            failed.join(",")
        ))))
    }
}

fn train(verb: Verb, cfg: &TrainConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    let ck_dir = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck_dir)?;
    let second = if verb == Verb::TrainWgan { "critic" } else { "extractor" };

    let mut writer = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let every = cfg.checkpoint_every;
    let result = {
        let mut observe = |r: &MetricsRecord, g: &MlpNetwork, d: &MlpNetwork| -> Result<()> {
            writer.write(r)?;
            if every > 0 && (r.iteration + 1).is_multiple_of(every) {
                let it = r.iteration + 1;
                g.save(&ck_dir.join(format!("generator_{it}.json")))?;
                d.save(&ck_dir.join(format!("{second}_{it}.json")))?;
            }
            Ok(())
        };
        let observer: &mut Observer<'_> = &mut observe;
        match verb {
            Verb::TrainUnsup => run_unsupervised(cfg, &data, Some(observer)).map(|o| (o.generator, o.extractor)),
            Verb::TrainCond => run_conditional(cfg, &data, Some(observer)).map(|o| (o.generator, o.extractor)),
            _ => run_wgan(cfg, &data, Some(observer)).map(|o| (o.generator, o.critic)),
        }
    };
    writer.finish()?;

    let (generator, other) = match result {
        Ok(nets) => nets,
        Err(e) => {
            if let LdganError::NonFinite { record, .. } = &e {
                // NaN-bearing record; JSON has no NaN, so keep the Debug form
                fs::write(out.join(ABORT_FILE), format!("{e}\n{record:?}\n"))?;
            }
            return Err(e);
        }
    };
    generator.save(&ck_dir.join("generator.json"))?;
    other.save(&ck_dir.join(format!("{second}.json")))?;
    let records = read_metrics(&out.join(METRICS_FILE))?;
    export_plot_tables(&records, out)?;
    Ok(())
}

/// Trains a conditional generator, then runs the mixed real/generated probe on
/// `probe.samples_per_class` samples per class from each source.
fn probe(cfg: &TrainConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    let outcome = run_conditional(cfg, &data, None)?;
    let classes = conditional_classes(cfg, &data);
    let per_class = cfg.probe.samples_per_class;
    let generated = generated_dataset(
        &outcome.generator,
        cfg.z_dim,
        classes,
        per_class,
        &mut stream_rng(cfg.seed, Stream::Evaluation),
    )?;
    let real = real_subset(&data, classes, per_class)?;
    let result = generalization_probe(&real, &generated, &cfg.probe, cfg.seed)?;

    let mut csv = String::from("iteration,real_only,mixed\n");
    for (i, m) in result.mixed.curve.iter().enumerate() {
        let r = match &result.real_only {
            Ok(arm) => arm.curve[i].to_string(),
            Err(_) => String::new(),
        };
        csv.push_str(&format!("{i},{r},{m}\n"));
    }
    fs::write(out.join(PROBE_CURVES_FILE), csv)?;

    let summary = serde_json::json!({
        "real_only_eigenvalues": result.real_only.as_ref().ok().map(|a| a.final_eigenvalues.clone()),
        "real_only_error": result.real_only.as_ref().err().map(|e| e.to_string()),
        "mixed_eigenvalues": result.mixed.final_eigenvalues,
        "initial_real_eigenvalues": result.initial.real,
        "initial_mixed_eigenvalues": result.initial.mixed,
    });
    let mut f = fs::File::create(out.join(PROBE_SUMMARY_FILE))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&summary).map_err(|e| LdganError::Format(e.to_string()))?)?;
    Ok(())
}

/// The first `per_class` samples of each of the first `classes` classes.
fn real_subset(data: &Dataset, classes: usize, per_class: usize) -> Result<Dataset> {
    let mut idx = Vec::new();
    let mut labels = Vec::new();
    for (c, pool) in data.class_indices().into_iter().take(classes).enumerate() {
        let take = pool.len().min(per_class);
        idx.extend_from_slice(&pool[..take]);
        labels.extend(std::iter::repeat_n(c, take));
    }
    Dataset::new(data.samples.select_rows(&idx), labels, classes)
}
