//! Command-line verbs. Every flag can also come from a JSON `--config`
//! file, keyed by the long flag name; flags given on the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use longtail_core::corpus::synth_longtail;
use longtail_core::eval::Bucket;
use longtail_core::ncm::{Distance, MeanMode};
use longtail_core::sampling::SamplerKind;
use longtail_core::text::Stopwords;
use longtail_core::train::Classifier;

use crate::data::{DroppedClass, PrepOptions, PreparedData, VectorSource};
use crate::error::{CliError, CliResult};
use crate::experiment::{bucket_spec, eval_features, run_stage1, run_stage2, score, Decision, Stage2Settings, TrainSettings};
use crate::files;
use crate::grid::{run_grid, write_grid, GridSpec};
use crate::run::{RunConfig, RunDir};

#[derive(Debug, Parser)]
#[command(name = "longtail", version, about = "Decoupled two-stage training for long-tailed text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic long-tailed corpus as TSV.
    GenCorpus(GenCorpusArgs),
    /// Split a TSV corpus, build the vocabulary and attach word vectors.
    Preprocess(PreprocessArgs),
    /// Stage 1: train extractor and head under a class sampler.
    Train(TrainArgs),
    /// Stage 2: CRT head or NCM statistics on the frozen extractor.
    Stage2(Stage2Args),
    /// Score a run on the eval split.
    Eval(EvalArgs),
    /// Run samplers × classifiers × seeds and tabulate.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Documents in the largest class.
    #[arg(long)]
    pub head: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub zipf: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output data directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop classes with fewer documents (default 1000).
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub eval_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Plain-text `token v1 … vE` word vectors.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub stopwords_zh: Option<PathBuf>,
    #[arg(long)]
    pub stopwords_en: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_stopwords: Option<bool>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Stage-1 hyperparameters (everything but the seed).
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainHyper {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate before the decay epoch.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decayed: Option<f64>,
    /// First (0-based) epoch at the decayed rate.
    #[arg(long)]
    pub decay_after: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub filter_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_embedding: Option<bool>,
}

impl TrainHyper {
    fn apply(&self, mut s: TrainSettings) -> TrainSettings {
        macro_rules! set {
            ($($f:ident),+) => { $(if let Some(v) = &self.$f { s.$f = v.clone(); })+ };
        }
        set!(epochs, batch_size, lr, lr_decayed, decay_after, filters, filter_widths, feature_dim, freeze_embedding);
        s
    }
}

/// Stage-2 hyperparameters (everything but method and seed).
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Stage2Hyper {
    #[arg(long)]
    pub stage2_epochs: Option<usize>,
    #[arg(long)]
    pub stage2_lr: Option<f64>,
    #[arg(long)]
    pub stage2_batch_size: Option<usize>,
    /// Half-width of the uniform CRT head re-initialization.
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// batch, running or decay.
    #[arg(long)]
    pub mean_mode: Option<MeanMode>,
    #[arg(long)]
    pub decay_alpha: Option<f64>,
    /// euclidean, mahalanobis or cosine.
    #[arg(long)]
    pub distance: Option<Distance>,
    #[arg(long)]
    pub metric_dim: Option<usize>,
    #[arg(long)]
    pub metric_epochs: Option<usize>,
    #[arg(long)]
    pub metric_step: Option<f64>,
}

impl Stage2Hyper {
    fn apply(&self, mut s: Stage2Settings) -> Stage2Settings {
        macro_rules! set {
            ($($f:ident),+) => { $(if let Some(v) = &self.$f { s.$f = v.clone(); })+ };
        }
        set!(
            stage2_epochs,
            stage2_lr,
            stage2_batch_size,
            init_scale,
            mean_mode,
            decay_alpha,
            distance,
            metric_dim,
            metric_epochs,
            metric_step
        );
        s
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Prepared data directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// ibs, cbs, srs or pbs.
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: TrainHyper,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Stage2Args {
    /// crt or ncm.
    pub method: Option<Classifier>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: Stage2Hyper,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// stage1 or stage2 (default: stage2 when present).
    #[arg(long)]
    pub stage: Option<String>,
    /// Explicit buckets, e.g. `much=A,B;medium=C;less=D,E`.
    #[arg(long)]
    pub bucket_labels: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for results and tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub samplers: Option<Vec<SamplerKind>>,
    #[arg(long, value_delimiter = ',')]
    pub classifiers: Option<Vec<Classifier>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Parallel (sampler, seed) units.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub bucket_labels: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainHyper,
    #[command(flatten)]
    #[serde(flatten)]
    pub stage2: Stage2Hyper,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Overlay command-line flags on a JSON config file. The file is either a
/// flat object of flag names or has an object under `section`, as in a run's
/// `config.json`.
pub fn resolve<T>(flags: &T, config: Option<&Path>, section: &str) -> CliResult<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let bad = |msg: String| CliError::usage(format!("{}: {msg}", path.display()));
    let text = files::read_text(path)?;
    let root: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let Value::Object(mut root) = root else {
        return Err(bad("expected a JSON object".into()));
    };
    let Value::Object(known) = serde_json::to_value(T::default())? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged: Map<String, Value> = match root.remove(section) {
        // Shared top-level keys such as `data` still apply beside a section.
        Some(Value::Object(mut sub)) => {
            for (k, v) in root.into_iter().filter(|(k, _)| known.contains_key(k)) {
                sub.entry(k).or_insert(v);
            }
            sub
        }
        Some(other) => {
            root.insert(section.to_string(), other);
            root
        }
        None => root,
    };
    if let Some(unknown) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(bad(format!("unknown key {unknown:?}")));
    }
    if let Value::Object(given) = serde_json::to_value(flags)? {
        for (k, v) in given.into_iter().filter(|(_, v)| !v.is_null()) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| bad(e.to_string()))
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value.clone().ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(resolve(&a, a.config.as_deref(), "gen-corpus")?),
        Command::Preprocess(a) => preprocess(resolve(&a, a.config.as_deref(), "preprocess")?),
        Command::Train(a) => train(resolve(&a, a.config.as_deref(), "train")?),
        Command::Stage2(a) => stage2(resolve(&a, a.config.as_deref(), "stage2")?),
        Command::Eval(a) => eval(resolve(&a, a.config.as_deref(), "eval")?),
        Command::Grid(a) => grid(resolve(&a, a.config.as_deref(), "grid")?),
    }
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult<()> {
    let out = required(&a.out, "out")?;
    let corpus = synth_longtail(a.classes.unwrap_or(20), a.head.unwrap_or(2000), a.zipf.unwrap_or(1.25), a.seed.unwrap_or(0))?;
    files::save_tsv(&out, &corpus)?;
    eprintln!(
        "wrote {} documents in {} classes to {} (counts {:?})",
        corpus.len(),
        corpus.num_classes(),
        out.display(),
        corpus.class_counts()
    );
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> CliResult<()> {
    let corpus_path = required(&a.corpus, "corpus")?;
    let out = required(&a.out, "out")?;
    let min_count = a.min_count.unwrap_or(1000);
    let (corpus, dropped) = files::load_tsv(&corpus_path, min_count)?;
    for (label, count) in &dropped {
        eprintln!("dropped class {label}: {count} documents < min-count {min_count}");
    }
    let mut stopwords = if a.no_stopwords.unwrap_or(false) {
        Stopwords::none()
    } else {
        Stopwords::builtin()
    };
    if let Some(p) = &a.stopwords_zh {
        stopwords.cjk = files::load_stopwords(p)?;
    }
    if let Some(p) = &a.stopwords_en {
        stopwords.latin = files::load_stopwords(p)?;
    }
    let defaults = PrepOptions::default();
    let opts = PrepOptions {
        eval_fraction: a.eval_fraction.unwrap_or(defaults.eval_fraction),
        seed: a.seed.unwrap_or(defaults.seed),
        max_len: a.max_len.unwrap_or(defaults.max_len),
        min_freq: a.min_freq.unwrap_or(defaults.min_freq),
        embed_dim: a.embed_dim.unwrap_or(defaults.embed_dim),
    };
    let vectors = match &a.vectors {
        Some(p) => VectorSource::File(p),
        None => VectorSource::Random,
    };
    let mut data = PreparedData::prepare(&corpus, stopwords, vectors, &opts)?;
    data.meta.min_count = min_count;
    data.meta.dropped = dropped
        .into_iter()
        .map(|(label, count)| DroppedClass { label, count })
        .collect();
    data.save(&out)?;
    eprintln!(
        "{} classes, {} train / {} eval documents, vocabulary {}{}",
        data.labels().len(),
        data.train.len(),
        data.eval.len(),
        data.vocab.len(),
        data.meta
            .vector_coverage
            .map(|c| format!(", vector coverage {c:.3}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let data_dir = required(&a.data, "data")?;
    let run = RunDir::new(required(&a.run, "run")?);
    let mut settings = a.hyper.apply(TrainSettings::default());
    settings.sampler = a.sampler.unwrap_or(settings.sampler);
    settings.seed = a.seed.unwrap_or(settings.seed);
    let data = PreparedData::load(&data_dir)?;
    let (train_set, eval_set) = data.encode();
    let result = run_stage1(&data, &train_set, &eval_set, &settings)?;
    for r in &result.log {
        eprintln!(
            "stage1 epoch {:>2}  lr {:.1e}  loss {:.4}  train {:.4}  eval {}",
            r.epoch,
            r.lr,
            r.mean_loss,
            r.train_accuracy,
            r.eval_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    let cfg = RunConfig {
        data: data_dir,
        train: settings,
        stage2: None,
    };
    run.write_stage1(&cfg, &result.checkpoint, &result.log)?;
    eprintln!("wrote {}", run.stage1_ckpt().display());
    Ok(())
}

fn stage2(a: Stage2Args) -> CliResult<()> {
    let run = RunDir::new(required(&a.run, "run")?);
    let mut cfg = run.read_config()?;
    let data_dir = a.data.clone().unwrap_or_else(|| cfg.data.clone());
    let data = PreparedData::load(&data_dir)?;
    let mut settings = a.hyper.apply(Stage2Settings::default());
    settings.method = required(&a.method, "method (crt or ncm)")?;
    settings.seed = a.seed.unwrap_or(settings.seed);
    let stage1 = run.load_stage1(&data, &cfg)?;
    let (train_set, _) = data.encode();
    let (decision, log) = run_stage2(&stage1, &train_set, &settings)?;
    for r in &log {
        eprintln!("{} epoch {:>2}  loss {:.4}", r.stage, r.epoch, r.mean_loss);
    }
    cfg.stage2 = Some(settings);
    run.write_stage2(&cfg, &stage1, &decision, &log)?;
    eprintln!("stage 2 written to {}", run.path.display());
    Ok(())
}

/// Machine-readable evaluation written next to the run.
#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    stage: &'a str,
    classifier: String,
    overall: f64,
    much: Option<f64>,
    medium: Option<f64>,
    less: Option<f64>,
    n_eval: usize,
    labels: &'a [String],
    buckets: Vec<&'a str>,
    per_class: &'a [Option<f64>],
    confusion: &'a [Vec<usize>],
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let run = RunDir::new(required(&a.run, "run")?);
    let cfg = run.read_config()?;
    let data = PreparedData::load(&a.data.clone().unwrap_or_else(|| cfg.data.clone()))?;
    let stage = match a.stage.as_deref() {
        Some(s @ ("stage1" | "stage2")) => s,
        Some(other) => return Err(CliError::usage(format!("--stage must be stage1 or stage2, got {other:?}"))),
        None if run.stage2_ckpt().exists() || run.ncm_stats().exists() => "stage2",
        None => "stage1",
    };
    let (ckpt, decision) = if stage == "stage1" {
        let ckpt = run.load_stage1(&data, &cfg)?;
        let head = ckpt.model.head.clone();
        (ckpt, Decision::Head(head))
    } else {
        run.load_stage2(&data, &cfg)?
    };
    let classifier = match (&decision, stage) {
        (_, "stage1") => "baseline".to_string(),
        (Decision::Head(_), _) => "crt".to_string(),
        (Decision::Ncm { distance, .. }, _) => format!("ncm-{distance}"),
    };
    let buckets = bucket_spec(&data, a.bucket_labels.as_deref())?;
    let (_, eval_set) = data.encode();
    let feats = eval_features(&ckpt.model.extractor, &eval_set);
    let scores = score(&feats, &eval_set, &decision, data.labels(), &buckets)?;
    let labels = data.labels();
    let output = EvalOutput {
        stage,
        classifier,
        overall: scores.report.overall_accuracy,
        much: scores.bucket(Bucket::Much),
        medium: scores.bucket(Bucket::Medium),
        less: scores.bucket(Bucket::Less),
        n_eval: scores.report.n_eval,
        labels,
        buckets: labels.iter().map(|l| buckets.bucket_of(l).map_or("-", Bucket::name)).collect(),
        per_class: &scores.report.per_class_accuracy,
        confusion: &scores.report.confusion,
    };
    let path = run.path.join(format!("eval_{stage}.json"));
    files::write(&path, serde_json::to_string_pretty(&output)? + "\n")?;
    let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
    println!(
        "{stage} {}: overall {:.4}  much {}  medium {}  less {}  (n = {})",
        output.classifier,
        output.overall,
        f(output.much),
        f(output.medium),
        f(output.less),
        output.n_eval
    );
    Ok(())
}

fn grid(a: GridArgs) -> CliResult<()> {
    let data = PreparedData::load(&required(&a.data, "data")?)?;
    let out = required(&a.out, "out")?;
    let spec = GridSpec {
        samplers: a.samplers.clone().unwrap_or_else(|| SamplerKind::ALL.to_vec()),
        classifiers: a.classifiers.clone().unwrap_or_else(|| Classifier::ALL.to_vec()),
        seeds: a.seeds.clone().unwrap_or_else(|| vec![0]),
        train: a.train.apply(TrainSettings::default()),
        stage2: a.stage2.apply(Stage2Settings::default()),
        jobs: a
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    let buckets = bucket_spec(&data, a.bucket_labels.as_deref())?;
    let result = run_grid(&data, &buckets, &spec)?;
    print!("{}", write_grid(&out, &spec, &result)?);
    let failed = result.cells.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} grid cells failed", result.cells.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn flags_win_over_file() {
        let (_d, path) = write_config(r#"{"sampler": "cbs", "epochs": 4, "filter-widths": [3, 5]}"#);
        let flags = TrainArgs {
            sampler: Some(SamplerKind::Srs),
            ..TrainArgs::default()
        };
        let got = resolve(&flags, Some(&path), "train").unwrap();
        assert_eq!(got.sampler, Some(SamplerKind::Srs));
        assert_eq!(got.hyper.epochs, Some(4));
        assert_eq!(got.hyper.filter_widths, Some(vec![3, 5]));
    }

    #[test]
    fn section_of_a_run_config() {
        let (_d, path) = write_config(r#"{"data": "x", "train": {"seed": 3}, "stage2": {"decay-alpha": 0.5, "method": "ncm"}}"#);
        let got = resolve(&Stage2Args::default(), Some(&path), "stage2").unwrap();
        assert_eq!(got.hyper.decay_alpha, Some(0.5));
        assert_eq!(got.method, Some(Classifier::Ncm));
        let train = resolve(&TrainArgs::default(), Some(&path), "train").unwrap();
        assert_eq!(train.seed, Some(3));
        assert_eq!(train.data, Some(PathBuf::from("x")));
    }

    #[test]
    fn bad_config_files_are_usage_errors() {
        for text in [r#"{"epoch": 3}"#, "[1, 2]", "{", r#"{"epochs": "many"}"#] {
            let (_d, path) = write_config(text);
            let err = resolve(&TrainArgs::default(), Some(&path), "train").unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn no_config_is_identity() {
        let flags = GridArgs {
            seeds: Some(vec![1, 2]),
            jobs: Some(3),
            ..GridArgs::default()
        };
        let got = resolve(&flags, None, "grid").unwrap();
        assert_eq!(got.seeds, Some(vec![1, 2]));
        assert_eq!(got.jobs, Some(3));
    }

    #[test]
    fn parses_every_verb() {
        let cases: [&[&str]; 6] = [
            &["longtail", "gen-corpus", "--out", "c.tsv", "--zipf", "-0.5"],
            &["longtail", "preprocess", "--corpus", "c.tsv", "--out", "d", "--no-stopwords"],
            &["longtail", "train", "--data", "d", "--run", "r", "--filter-widths", "2,3", "--freeze-embedding"],
            &["longtail", "stage2", "ncm", "--run", "r", "--distance", "cosine", "--mean-mode", "decay"],
            &["longtail", "eval", "--run", "r", "--bucket-labels", "much=A;medium=B;less=C"],
            &["longtail", "grid", "--data", "d", "--out", "g", "--samplers", "ibs,pbs", "--classifiers", "ncm", "--seeds", "1,2,3"],
        ];
        for args in cases {
            Cli::try_parse_from(args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        let Command::Train(t) = Cli::try_parse_from(cases[2]).unwrap().command else { panic!() };
        assert_eq!(t.hyper.filter_widths, Some(vec![2, 3]));
        assert_eq!(t.hyper.freeze_embedding, Some(true));
    }
}
