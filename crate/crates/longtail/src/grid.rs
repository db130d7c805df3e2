//! Samplers × classifiers × seeds. Every (sampler, seed) pair trains one
//! stage-1 model; each classifier is then fitted on its frozen features.
//! Units run in parallel on a bounded thread pool and results are reported
//! in grid order, so output does not depend on scheduling.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use longtail_core::eval::{Bucket, BucketSpec};
use longtail_core::sampling::SamplerKind;
use longtail_core::train::{extract_features, Classifier};

use crate::data::PreparedData;
use crate::error::{CliError, CliResult};
use crate::experiment::{run_stage1, run_stage2_on_features, score, Decision, Scores, Stage2Settings, TrainSettings};
use crate::files;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub samplers: Vec<SamplerKind>,
    pub classifiers: Vec<Classifier>,
    pub seeds: Vec<u64>,
    /// Seeds override `train.seed` and `stage2.seed`.
    pub train: TrainSettings,
    pub stage2: Stage2Settings,
    pub jobs: usize,
}

/// One line of `grid_results.jsonl` (or `grid_baseline.jsonl`, where
/// `classifier` is `"baseline"`). Metrics are absent when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub sampler: SamplerKind,
    pub classifier: String,
    pub seed: u64,
    pub overall: Option<f64>,
    pub much: Option<f64>,
    pub medium: Option<f64>,
    pub less: Option<f64>,
    pub runtime_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridRecord {
    fn new(sampler: SamplerKind, classifier: &str, seed: u64, outcome: Result<Scores, String>, secs: f64) -> Self {
        let (scores, error) = match outcome {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e)),
        };
        let get = |b| scores.as_ref().and_then(|s: &Scores| s.bucket(b));
        Self {
            sampler,
            classifier: classifier.to_string(),
            seed,
            overall: scores.as_ref().map(|s| s.report.overall_accuracy),
            much: get(Bucket::Much),
            medium: get(Bucket::Medium),
            less: get(Bucket::Less),
            runtime_seconds: secs,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Grid order: sampler, then classifier, then seed.
    pub cells: Vec<GridRecord>,
    /// Single-stage models, sampler then seed.
    pub baselines: Vec<GridRecord>,
}

struct UnitOutput {
    baseline: GridRecord,
    cells: Vec<GridRecord>,
}

fn run_unit(data: &PreparedData, buckets: &BucketSpec, spec: &GridSpec, sampler: SamplerKind, seed: u64) -> UnitOutput {
    let labels = data.labels();
    let (train, eval) = data.encode();
    let settings = TrainSettings {
        sampler,
        seed,
        ..spec.train.clone()
    };
    let start = Instant::now();
    let stage1 = run_stage1(data, &train, &eval, &settings);
    let stage1_secs = start.elapsed().as_secs_f64();
    let stage1 = match stage1 {
        Ok(r) => r,
        Err(e) => {
            let msg = format!("stage 1: {e}");
            return UnitOutput {
                baseline: GridRecord::new(sampler, "baseline", seed, Err(msg.clone()), stage1_secs),
                cells: spec
                    .classifiers
                    .iter()
                    .map(|c| GridRecord::new(sampler, c.name(), seed, Err(msg.clone()), stage1_secs))
                    .collect(),
            };
        }
    };
    let model = &stage1.checkpoint.model;
    let train_features = extract_features(&model.extractor, &train);
    let eval_features = extract_features(&model.extractor, &eval);
    let baseline_decision = Decision::Head(model.head.clone());
    let baseline = score(&eval_features, &eval, &baseline_decision, labels, buckets).map_err(|e| e.to_string());
    let baseline = GridRecord::new(sampler, "baseline", seed, baseline, start.elapsed().as_secs_f64());

    let cells = spec
        .classifiers
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let s2 = Stage2Settings {
                method,
                seed,
                ..spec.stage2.clone()
            };
            let outcome = run_stage2_on_features(&train_features, &train, &s2)
                .and_then(|(decision, _)| score(&eval_features, &eval, &decision, labels, buckets))
                .map_err(|e| format!("stage 2: {e}"));
            GridRecord::new(sampler, method.name(), seed, outcome, stage1_secs + t.elapsed().as_secs_f64())
        })
        .collect();
    UnitOutput { baseline, cells }
}

pub fn run_grid(data: &PreparedData, buckets: &BucketSpec, spec: &GridSpec) -> CliResult<GridResult> {
    if spec.samplers.is_empty() || spec.classifiers.is_empty() || spec.seeds.is_empty() {
        return Err(CliError::usage("grid needs at least one sampler, classifier and seed"));
    }
    let units: Vec<(SamplerKind, u64)> = spec
        .samplers
        .iter()
        .flat_map(|&s| spec.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let outputs: Vec<UnitOutput> = pool.install(|| {
        units
            .par_iter()
            .map(|&(sampler, seed)| {
                let out = run_unit(data, buckets, spec, sampler, seed);
                eprintln!("grid: {sampler} seed {seed} done");
                out
            })
            .collect()
    });

    let mut cells = Vec::new();
    let mut baselines = Vec::new();
    for (si, _) in spec.samplers.iter().enumerate() {
        let unit_range = si * spec.seeds.len()..(si + 1) * spec.seeds.len();
        for ci in 0..spec.classifiers.len() {
            cells.extend(outputs[unit_range.clone()].iter().map(|u| u.cells[ci].clone()));
        }
        baselines.extend(outputs[unit_range].iter().map(|u| u.baseline.clone()));
    }
    Ok(GridResult { cells, baselines })
}

fn jsonl(records: &[GridRecord]) -> CliResult<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Write `grid_results.jsonl`, `grid_baseline.jsonl` and `grid_tables.txt`.
pub fn write_grid(dir: &Path, spec: &GridSpec, result: &GridResult) -> CliResult<String> {
    files::write(&dir.join("grid_results.jsonl"), jsonl(&result.cells)?)?;
    files::write(&dir.join("grid_baseline.jsonl"), jsonl(&result.baselines)?)?;
    let tables = render_tables(spec, result);
    files::write(&dir.join("grid_tables.txt"), &tables)?;
    Ok(tables)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

type Metric = fn(&GridRecord) -> Option<f64>;

/// Human-readable summary: overall accuracy per sampler and classifier,
/// bucket accuracies per method, then every individual run.
pub fn render_tables(spec: &GridSpec, result: &GridResult) -> String {
    let records_for = |sampler: SamplerKind, classifier: &str| -> Vec<&GridRecord> {
        result
            .cells
            .iter()
            .chain(&result.baselines)
            .filter(|r| r.sampler == sampler && r.classifier == classifier)
            .collect()
    };
    let mut columns = vec!["baseline".to_string()];
    columns.extend(spec.classifiers.iter().map(|c| c.name().to_string()));

    let mut out = String::new();
    let n = spec.seeds.len();
    let _ = writeln!(out, "Overall accuracy (mean over {n} seed{})", if n == 1 { "" } else { "s" });
    let mut rows = vec![std::iter::once("sampler".to_string()).chain(columns.iter().cloned()).collect::<Vec<_>>()];
    for &s in &spec.samplers {
        let mut row = vec![s.name().to_string()];
        row.extend(columns.iter().map(|c| fmt(mean(records_for(s, c).iter().map(|r| r.overall)))));
        rows.push(row);
    }
    out.push_str(&aligned(&rows));

    let metrics: [(&str, Metric); 4] = [
        ("much", |r| r.much),
        ("medium", |r| r.medium),
        ("less", |r| r.less),
        ("overall", |r| r.overall),
    ];
    let _ = writeln!(out, "\nBucket accuracy (mean over seeds)");
    let mut rows = vec![std::iter::once("method".to_string()).chain(metrics.iter().map(|m| m.0.to_string())).collect()];
    for &s in &spec.samplers {
        for c in &columns {
            let recs = records_for(s, c);
            let mut row = vec![format!("{s}+{c}")];
            row.extend(metrics.iter().map(|(_, f)| fmt(mean(recs.iter().map(|r| f(r))))));
            rows.push(row);
        }
    }
    out.push_str(&aligned(&rows));

    let _ = writeln!(out, "\nPer-seed results");
    let mut rows = vec![["method", "seed", "much", "medium", "less", "overall", "seconds"]
        .map(String::from)
        .to_vec()];
    for &s in &spec.samplers {
        for c in &columns {
            for r in records_for(s, c) {
                let mut row = vec![format!("{s}+{c}"), r.seed.to_string()];
                match &r.error {
                    Some(e) => row.push(format!("FAILED: {e}")),
                    None => {
                        row.extend(metrics.iter().map(|(_, f)| fmt(f(r))));
                        row.push(format!("{:.1}", r.runtime_seconds));
                    }
                }
                rows.push(row);
            }
        }
    }
    out.push_str(&aligned(&rows));
    out
}
