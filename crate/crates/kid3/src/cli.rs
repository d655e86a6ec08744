//! The `kid3` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Failures also print one JSON object on stderr:
//! `{"error": "<kind>", "exit_code": n, "message": "..."}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kid3_core::annotation::Split;
use kid3_core::fusion::{Branch, MethodVariant};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fixture::Fixture;
use crate::harness;
use crate::ingest::{build_manifest, read_annotations, read_videos, write_manifest};
use crate::plot::emit_plot;

pub const CONFIG_ECHO: &str = "config_echo.toml";
pub const CHECKPOINT: &str = "model.kid3ckpt";
pub const TRAINING_LOG: &str = "training_log.json";
pub const REPORT: &str = "report.json";
pub const RUNS: &str = "runs.json";
pub const COMPARISON: &str = "comparison.md";
pub const PLOT: &str = "f1_per_class.svg";

#[derive(Parser, Debug)]
#[command(name = "kid3", version, about = "Distracted-driver activity classifier: data preparation, training and ablation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build train/test frame manifests from annotations and video metadata.
    Preprocess(Common),
    /// Train one method with one seed and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Method to train; defaults to the last configured method.
        #[arg(long)]
        methods: Option<MethodVariant>,
        /// Seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every method over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods, e.g. M1,M2,M3.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<MethodVariant>>,
        /// Number of seeds; runs seeds 1..=N.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Draw the per-class F1 chart of a report file.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the synthetic fixture dataset.
    Fixture(Common),
    /// Nearest-centroid accuracy of each branch's raw features.
    Probe(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML config file. Relative data paths resolve against its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `train.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for assignment in &self.set {
            config.apply_override(assignment)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(Error::unwritable(&self.out))?;
        Ok(&self.out)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            let _ = writeln!(err, "{}", error_line("usage", 2, &e.kind().to_string()));
            return 2;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(err, "{}", error_line(e.kind(), code, &e.to_string()));
            code
        }
    }
}

fn error_line(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": kind, "exit_code": code, "message": message }).to_string()
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Preprocess(common) => preprocess(&common, out),
        Command::Train { common, methods, seed } => train(&common, methods, seed, out),
        Command::Eval { common, checkpoint } => eval(&common, &checkpoint, out),
        Command::Ablate { common, methods, seeds } => ablate(&common, methods, seeds, out),
        Command::Plot { common, report } => plot(&common, &report, out),
        Command::Fixture(common) => fixture(&common, out),
        Command::Probe(common) => probe(&common, out),
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) {
    let _ = writeln!(out, "{}", line.as_ref());
}

fn write_echo(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    let path = dir.join(CONFIG_ECHO);
    fs::write(&path, config.to_toml()).map_err(Error::unwritable(&path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(Error::unwritable(path))
}

fn preprocess(common: &Common, out: &mut dyn Write) -> Result<()> {
    let config = common.resolve()?;
    let d = &config.data;
    if !d.frames_dir.is_dir() {
        return Err(Error::Io {
            path: d.frames_dir.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "frames directory not found"),
        });
    }
    let records = match read_annotations(&d.annotations) {
        Ok(r) => r,
        Err(Error::Annotations(rows)) => {
            for row in &rows {
                say(out, format!("rejected {}: {row}", d.annotations.display()));
            }
            return Err(Error::Annotations(rows));
        }
        Err(e) => return Err(e),
    };
    let videos = read_videos(&d.videos)?;
    let dir = common.out_dir()?;
    for (split, target) in [(Split::Train, &d.train_manifest), (Split::Test, &d.test_manifest)] {
        let manifest = build_manifest(split, &videos, &records, d.sampling_interval_frames)?;
        let path = dir.join(target.file_name().unwrap_or(target.as_os_str()));
        write_manifest(&path, &manifest)?;
        say(out, format!("{}: {} frames -> {}", split.as_str(), manifest.len(), path.display()));
    }
    say(out, format!("{} annotation rows accepted, 0 rejected", records.len()));
    write_echo(dir, &config)
}

fn train(common: &Common, method: Option<MethodVariant>, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let mut config = common.resolve()?;
    let variant = method.unwrap_or_else(|| *config.experiment.methods.iter().max().expect("validated"));
    let seed = seed.unwrap_or(config.experiment.seeds[0]);
    config.experiment.methods = vec![variant];
    config.experiment.seeds = vec![seed];
    let dataset = Dataset::load(&config, &[variant])?;
    let run = harness::train(&dataset, &config, variant, seed)?;
    let dir = common.out_dir()?;
    write_echo(dir, &config)?;
    Checkpoint::new(&run.model, config.to_toml()).write(&dir.join(CHECKPOINT))?;
    write_json(&dir.join(TRAINING_LOG), &run.log)?;
    let last = run.log.epoch_losses.last().copied().unwrap_or(run.log.initial_loss);
    say(out, format!("{variant} seed {seed}: loss {:.4} -> {last:.4} over {} epochs", run.log.initial_loss, run.log.epoch_losses.len()));
    say(out, format!("checkpoint: {}", dir.join(CHECKPOINT).display()));
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path, out: &mut dyn Write) -> Result<()> {
    let mut config = common.resolve()?;
    let ckpt = Checkpoint::read(checkpoint)?;
    let model = ckpt.model;
    config.experiment.methods = vec![model.variant];
    config.experiment.seeds = vec![model.seed];
    let dataset = Dataset::load(&config, &[model.variant])?;
    let report = harness::evaluate(&model, &dataset)?;
    let dir = common.out_dir()?;
    write_echo(dir, &config)?;
    harness::emit_report(std::slice::from_ref(&report), &dir.join(REPORT))?;
    say(out, format!("{} seed {}: accuracy {:.2}%, macro F1 {:.4}", model.variant, model.seed, report.accuracy_mean_pct, report.macro_f1));
    Ok(())
}

fn ablate(common: &Common, methods: Option<Vec<MethodVariant>>, seeds: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let mut config = common.resolve()?;
    if let Some(m) = methods {
        config.experiment.methods = m;
    }
    if let Some(n) = seeds {
        config.experiment.seeds = (1..=n).collect();
    }
    config.validate()?;
    let dataset = Dataset::load(&config, &config.experiment.methods)?;
    let ablation = harness::run_ablation(&dataset, &config)?;
    let dir = common.out_dir()?;
    write_echo(dir, &config)?;
    harness::emit_report(&ablation.reports, &dir.join(REPORT))?;
    write_json(&dir.join(RUNS), &ablation.runs)?;
    let table = harness::comparison_table(&ablation.comparison);
    let path = dir.join(COMPARISON);
    fs::write(&path, &table).map_err(Error::unwritable(&path))?;
    let _ = write!(out, "{table}");
    Ok(())
}

fn plot(common: &Common, report: &Path, out: &mut dyn Write) -> Result<()> {
    let reports = harness::read_report(report)?;
    let path = common.out_dir()?.join(PLOT);
    emit_plot(&reports, &path)?;
    say(out, format!("plot: {}", path.display()));
    Ok(())
}

fn fixture(common: &Common, out: &mut dyn Write) -> Result<()> {
    let config = common.resolve()?;
    let fixture = Fixture::generate(&config.fixture)?;
    let config_path = fixture.write(common.out_dir()?)?;
    say(out, format!("fixture: {} train / {} test frames, config {}", fixture.train.len(), fixture.test.len(), config_path.display()));
    Ok(())
}

fn probe(common: &Common, out: &mut dyn Write) -> Result<()> {
    let config = common.resolve()?;
    let dataset = Dataset::load(&config, &[MethodVariant::M3])?;
    for branch in [Branch::Image, Branch::Graph, Branch::Pose] {
        let accuracy = harness::centroid_probe(&dataset, branch)?;
        say(out, format!("{}: {:.2}%", branch.name(), accuracy * 100.0));
    }
    Ok(())
}
