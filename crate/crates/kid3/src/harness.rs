//! Training, evaluation, multi-seed ablation and report output.

use std::fs;
use std::path::Path;

use kid3_core::annotation::Split;
use kid3_core::fusion::{Branch, Kid3Model, MethodVariant};
use kid3_core::metrics::{aggregate_seeds, relative_improvement_pct, ClassificationMetrics, MetricsReport};
use kid3_core::taxonomy::{ActivityClass, NUM_CLASSES};
use kid3_core::train::{fit, predict_all, Example, TrainingLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub struct TrainedRun {
    pub model: Kid3Model,
    pub log: TrainingLog,
}

/// Trains `variant` from `seed` on the training split.
pub fn train(dataset: &Dataset, config: &ExperimentConfig, variant: MethodVariant, seed: u64) -> Result<TrainedRun> {
    config.validate()?;
    let vocab = dataset.vocabulary();
    let examples = dataset.examples(Split::Train, variant, &vocab)?;
    train_on(&examples, config, variant, vocab, seed)
}

fn train_on(
    examples: &[Example],
    config: &ExperimentConfig,
    variant: MethodVariant,
    vocab: kid3_core::graph::Vocabulary,
    seed: u64,
) -> Result<TrainedRun> {
    let mut model = Kid3Model::new(variant, config.model_config(), vocab, seed);
    let log = fit(&mut model, examples, &config.train_config())?;
    Ok(TrainedRun { model, log })
}

/// Test-split metrics of `model`. Graphs are indexed with the model's own
/// vocabulary.
pub fn evaluate(model: &Kid3Model, dataset: &Dataset) -> Result<MetricsReport> {
    let examples = dataset.examples(Split::Test, model.variant, &model.vocabulary)?;
    Ok(evaluate_on(model, &examples))
}

fn evaluate_on(model: &Kid3Model, examples: &[Example]) -> MetricsReport {
    let truth: Vec<ActivityClass> = examples.iter().map(|e| e.label).collect();
    let metrics = ClassificationMetrics::compute(&truth, &predict_all(model, examples));
    MetricsReport::single_run(model.variant, model.seed, &metrics)
}

/// One (variant, seed) cell of an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: MethodVariant,
    pub seed: u64,
    pub log: TrainingLog,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: MethodVariant,
    pub accuracy_mean_pct: f64,
    pub accuracy_std_pct: f64,
    pub macro_f1: f64,
    /// `(acc - acc_M1) / acc_M1 * 100`; absent without an M1 report.
    pub improvement_over_m1_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    /// Ordered by variant, then seed.
    pub runs: Vec<RunRecord>,
    /// One aggregate per variant, in variant order.
    pub reports: Vec<MetricsReport>,
    pub comparison: Vec<ComparisonRow>,
}

/// Trains and evaluates every configured (method, seed) pair.
///
/// Runs are independent and may execute on the rayon pool when
/// `experiment.parallel` is set. Results do not depend on scheduling.
pub fn run_ablation(dataset: &Dataset, config: &ExperimentConfig) -> Result<Ablation> {
    config.validate()?;
    let mut methods = config.experiment.methods.clone();
    methods.sort();
    methods.dedup();
    let mut seeds = config.experiment.seeds.clone();
    seeds.sort();
    seeds.dedup();

    let vocab = dataset.vocabulary();
    let mut data = Vec::new();
    for &v in &methods {
        data.push((dataset.examples(Split::Train, v, &vocab)?, dataset.examples(Split::Test, v, &vocab)?));
    }
    let jobs: Vec<(usize, u64)> = (0..methods.len()).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let run = |&(m, seed): &(usize, u64)| -> Result<RunRecord> {
        let (train, test) = &data[m];
        let trained = train_on(train, config, methods[m], vocab.clone(), seed)?;
        let report = evaluate_on(&trained.model, test);
        Ok(RunRecord { variant: methods[m], seed, log: trained.log, report })
    };
    let runs: Vec<RunRecord> = if config.experiment.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let mut reports = Vec::new();
    for &v in &methods {
        let per_seed: Vec<MetricsReport> = runs.iter().filter(|r| r.variant == v).map(|r| r.report.clone()).collect();
        reports.push(aggregate_seeds(&per_seed)?);
    }
    let comparison = comparison(&reports);
    Ok(Ablation { runs, reports, comparison })
}

pub fn comparison(reports: &[MetricsReport]) -> Vec<ComparisonRow> {
    let baseline = reports.iter().find(|r| r.variant == MethodVariant::M1).map(|r| r.accuracy_mean_pct);
    reports
        .iter()
        .map(|r| ComparisonRow {
            variant: r.variant,
            accuracy_mean_pct: r.accuracy_mean_pct,
            accuracy_std_pct: r.accuracy_std_pct,
            macro_f1: r.macro_f1,
            improvement_over_m1_pct: baseline.map(|b| relative_improvement_pct(b, r.accuracy_mean_pct)),
        })
        .collect()
}

/// Markdown table of the comparison rows.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("| Method | Description | Accuracy (%) | Macro F1 | vs M1 |\n|---|---|---|---|---|\n");
    for r in rows {
        let delta = match r.improvement_over_m1_pct {
            Some(d) if r.variant != MethodVariant::M1 => format!("{d:+.2}%"),
            _ => "-".into(),
        };
        out.push_str(&format!(
            "| {} | {} | {:.2} ± {:.2} | {:.3} | {} |\n",
            r.variant,
            r.variant.description(),
            r.accuracy_mean_pct,
            r.accuracy_std_pct,
            r.macro_f1,
            delta
        ));
    }
    out
}

/// Pretty JSON array of reports. Identical reports give identical bytes.
pub fn report_json(reports: &[MetricsReport]) -> String {
    let mut text = serde_json::to_string_pretty(reports).expect("reports serialize");
    text.push('\n');
    text
}

pub fn emit_report(reports: &[MetricsReport], path: &Path) -> Result<()> {
    fs::write(path, report_json(reports)).map_err(Error::unwritable(path))
}

/// Reads a report file: a JSON array of reports, or a single report.
pub fn read_report(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_report(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

pub fn parse_report(text: &str) -> serde_json::Result<Vec<MetricsReport>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<MetricsReport>),
        One(Box<MetricsReport>),
    }
    Ok(match serde_json::from_str(text)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![*r],
    })
}

/// Test accuracy of a nearest-class-mean classifier on one branch's raw
/// features. Used to check how much signal each branch of a dataset carries.
pub fn centroid_probe(dataset: &Dataset, branch: Branch) -> Result<f64> {
    let vocab = dataset.vocabulary();
    let train = dataset.branch_features(Split::Train, branch, &vocab)?;
    let test = dataset.branch_features(Split::Test, branch, &vocab)?;
    let dim = train.first().map_or(0, |(x, _)| x.len());
    let mut sums = vec![vec![0.0; dim]; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (x, c) in &train {
        counts[c.model_index()] += 1;
        for (s, v) in sums[c.model_index()].iter_mut().zip(x) {
            *s += v;
        }
    }
    let centroids: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let correct = test
        .iter()
        .filter(|(x, c)| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (k, centroid) in centroids.iter().enumerate() {
                if let Some(mu) = centroid {
                    let d: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, k);
                    }
                }
            }
            best.1 == c.model_index()
        })
        .count();
    Ok(if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 })
}
