//! Command line interface: `synth`, `featurize`, `train`, `eval`, `sweep`,
//! and `report`.
//!
//! Every value flag may also come from a flat `key = value` config file
//! given with `--config`; explicit flags win over the file, and built-in
//! defaults fill whatever neither provides. Each output artifact carries
//! the fully resolved configuration and a content hash of its direct input
//! so results stay traceable to what produced them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::features::{apply_scaler, BinningParams, FeatureMatrix, SmoothingParams};
use crate::formation::{DrowsyLength, FormationParams};
use crate::ingest::{load_manifest, synthesize_corpus, SynthSpec};
use crate::metrics::{evaluate, EvalReport, RunMeta};
use crate::models::{load_model, predict, save_model, ClassifierConfig, ModelFile};
use crate::pipeline::{featurize_corpus, train_eval, PipelineParams};
use crate::split::{Paradigm, SplitSpec};
use crate::sweep::{emit_table, read_results, run_sweep, SweepGrid, SweepOptions, SweepResult};
use crate::util::sha256_hex;

#[derive(Parser, Debug)]
#[command(
    name = "mindstate",
    version,
    about = "EEG attention-state pipeline: synthesize corpora, extract \
             spectrogram features, train and evaluate classifiers, sweep \
             parameter grids"
)]
pub struct Cli {
    /// Flat `key = value` defaults file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Turn a corpus into a feature matrix file.
    Featurize(FeaturizeArgs),
    /// Split a feature file, train a classifier, and evaluate it.
    Train(TrainArgs),
    /// Evaluate a saved model on a whole feature file.
    Eval(EvalArgs),
    /// Run a parameter grid over a corpus.
    Sweep(SweepArgs),
    /// Summarize sweep results into a grouped table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Corpus output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Trials per subject.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trial length in minutes (at least 30).
    #[arg(long)]
    pub minutes: Option<f64>,
    /// Sample rate in Hz.
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scale of per-subject band shifts and gain jitter.
    #[arg(long)]
    pub variability: Option<f64>,
}

/// Flags shared by every command that builds features.
#[derive(Args, Debug, Clone)]
pub struct FeatureFlags {
    /// Drowsy segment length in minutes, or `max`.
    #[arg(long)]
    pub d_l: Option<String>,
    /// Comma-separated channel subset, or `all`.
    #[arg(long)]
    pub channels: Option<String>,
    /// Analysis window length, seconds.
    #[arg(long)]
    pub w_l: Option<f64>,
    /// Window shift, samples.
    #[arg(long)]
    pub w_s: Option<usize>,
    /// Frequency bin width, Hz.
    #[arg(long)]
    pub bin_hz: Option<f64>,
    /// Lower edge of the binned range, Hz (exclusive).
    #[arg(long)]
    pub f_lo: Option<f64>,
    /// Upper edge of the binned range, Hz (inclusive).
    #[arg(long)]
    pub f_hi: Option<f64>,
    /// Trailing average span, seconds.
    #[arg(long)]
    pub smooth_s: Option<f64>,
    /// Warm-up trials dropped per subject.
    #[arg(long)]
    pub drop_first: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    /// Corpus manifest CSV.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Feature file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureFlags,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Feature file produced by `featurize`.
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Classifier: rf, svm, dnn4, or dnn6.
    #[arg(long)]
    pub model: Option<String>,
    /// Split paradigm: common-subject, subject-specific, or leave-one-out.
    #[arg(long)]
    pub paradigm: Option<String>,
    /// Subject the paradigm applies to (required for subject-specific and
    /// leave-one-out).
    #[arg(long)]
    pub subject: Option<String>,
    /// Share of each class held out for testing (random paradigms only).
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the forest size.
    #[arg(long)]
    pub rf_trees: Option<usize>,
    /// Override the SVM epoch count.
    #[arg(long)]
    pub svm_epochs: Option<usize>,
    /// Override the MLP epoch count.
    #[arg(long)]
    pub mlp_epochs: Option<usize>,
    /// Where to save the trained model.
    #[arg(long, value_name = "PATH")]
    pub out_model: Option<PathBuf>,
    /// Where to write the evaluation report (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    pub out_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Saved model file.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Feature file to evaluate on; every row is treated as test data.
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Where to write the report (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    pub out_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Corpus manifest CSV.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Grid file (`key = comma-separated values` per line).
    #[arg(long, value_name = "PATH")]
    pub grid: PathBuf,
    /// Output directory for results, errors, timings, and the cache.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Worker threads; 0 picks a default.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Stop at the first error instead of recording it and continuing.
    #[arg(long)]
    pub fail_fast: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A results.csv produced by `sweep`.
    #[arg(long, value_name = "PATH")]
    pub results: PathBuf,
    /// Comma-separated axes to group by (d_l, w_l, w_s, channels,
    /// classifier, paradigm, subject, seed).
    #[arg(long)]
    pub group_by: Option<String>,
    /// Table file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Add a mean drowsy-recall column.
    #[arg(long)]
    pub drowsy: bool,
}

/// Parsed `--config` file: flat `key = value` lines, `#` comments.
#[derive(Debug, Default)]
struct ConfigFile {
    values: HashMap<String, String>,
}

const CONFIG_KEYS: [&str; 24] = [
    "group_by",
    "subjects",
    "trials",
    "minutes",
    "fs",
    "seed",
    "variability",
    "d_l",
    "channels",
    "w_l",
    "w_s",
    "bin_hz",
    "f_lo",
    "f_hi",
    "smooth_s",
    "drop_first",
    "model",
    "paradigm",
    "subject",
    "test_fraction",
    "rf_trees",
    "svm_epochs",
    "mlp_epochs",
    "workers",
];

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let at = |msg: String| {
                Error::InvalidConfig(format!("{} line {}: {msg}", path.display(), idx + 1))
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got {content:?}")))?;
            let key = key.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(at(format!("unknown config key {key:?}")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(at(format!("duplicate config key {key:?}")));
            }
        }
        Ok(ConfigFile { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("bad value {v:?} for config key {key:?}"))
            }),
        }
    }
}

/// Flag, then config file, then default.
fn resolve<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

/// Flag, then config file, then nothing.
fn resolve_opt<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn resolve_pipeline(f: &FeatureFlags, cfg: &ConfigFile) -> Result<PipelineParams> {
    let base = PipelineParams::default();
    let d_l_text = resolve(f.d_l.clone(), cfg, "d_l", base.formation.d_l.to_string())?;
    let d_l = DrowsyLength::parse(&d_l_text).map_err(|e| e.in_stage("config"))?;
    let channels = match resolve_opt(f.channels.clone(), cfg, "channels")? {
        None => None,
        Some(t) if t == "all" => None,
        Some(t) => Some(t.split(',').map(|c| c.trim().to_string()).collect()),
    };
    let params = PipelineParams {
        formation: FormationParams {
            d_l,
            channels,
            drop_first_trials: resolve(
                f.drop_first,
                cfg,
                "drop_first",
                base.formation.drop_first_trials,
            )?,
        },
        w_l_seconds: resolve(f.w_l, cfg, "w_l", base.w_l_seconds)?,
        w_s_samples: resolve(f.w_s, cfg, "w_s", base.w_s_samples)?,
        binning: BinningParams {
            bin_size_hz: resolve(f.bin_hz, cfg, "bin_hz", base.binning.bin_size_hz)?,
            f_lo_hz: resolve(f.f_lo, cfg, "f_lo", base.binning.f_lo_hz)?,
            f_hi_hz: resolve(f.f_hi, cfg, "f_hi", base.binning.f_hi_hz)?,
        },
        smoothing: SmoothingParams {
            span_seconds: resolve(f.smooth_s, cfg, "smooth_s", base.smoothing.span_seconds)?,
        },
        db_epsilon: base.db_epsilon,
    };
    params.validate().map_err(|e| e.in_stage("config"))?;
    Ok(params)
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json_text(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("provenance serializes")
}

/// Print the report, or write it with the provenance lines appended.
fn deliver_report(
    report: &EvalReport,
    extra: &[String],
    out: Option<&Path>,
) -> Result<()> {
    let mut text = report.to_text();
    for line in extra {
        text.push_str(line);
        text.push('\n');
    }
    match out {
        Some(path) => {
            write_text(path, &text)?;
            println!(
                "balanced_accuracy={} report={}",
                report.balanced_accuracy,
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    dispatch(cli)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, &cfg),
        Command::Featurize(a) => cmd_featurize(a, &cfg),
        Command::Train(a) => cmd_train(a, &cfg),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::Report(a) => cmd_report(a, &cfg),
    }
}

fn cmd_synth(a: SynthArgs, cfg: &ConfigFile) -> Result<()> {
    let stage = |e: Error| e.in_stage("synth");
    let mut spec = SynthSpec::default();
    spec.num_subjects = resolve(a.subjects, cfg, "subjects", spec.num_subjects)?;
    spec.trials_per_subject = resolve(a.trials, cfg, "trials", spec.trials_per_subject)?;
    spec.trial_minutes = resolve(a.minutes, cfg, "minutes", spec.trial_minutes)?;
    spec.sample_rate_hz = resolve(a.fs, cfg, "fs", spec.sample_rate_hz)?;
    spec.seed = resolve(a.seed, cfg, "seed", spec.seed)?;
    spec.subject_variability = resolve(a.variability, cfg, "variability", spec.subject_variability)?;
    spec.validate().map_err(stage)?;

    let manifest = synthesize_corpus(&spec, &a.out).map_err(stage)?;
    let echo = serde_json::json!({ "command": "synth", "config": spec });
    write_text(&a.out.join("synth.json"), &json_text(&echo))?;
    println!(
        "wrote {} recordings and manifest.csv under {}",
        manifest.entries.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_featurize(a: FeaturizeArgs, cfg: &ConfigFile) -> Result<()> {
    let params = resolve_pipeline(&a.features, cfg)?;
    let manifest_bytes = read_input(&a.manifest)?;
    let manifest = load_manifest(&a.manifest).map_err(|e| e.in_stage("ingest"))?;
    let fm = featurize_corpus(&manifest, &params)?;

    let echo = serde_json::json!({
        "command": "featurize",
        "config": { "pipeline": params, "standardize": true },
    });
    let comments = vec![
        format!("run-config {}", serde_json::to_string(&echo).expect("config serializes")),
        format!("input {}", a.manifest.display()),
        format!("input-sha256 {}", sha256_hex(&manifest_bytes)),
    ];
    fm.write(&a.out, &comments)?;
    println!(
        "wrote {} rows x {} features to {}",
        fm.num_rows(),
        fm.num_features(),
        a.out.display()
    );
    Ok(())
}

fn build_paradigm(name: &str, subject: Option<&str>) -> Result<Paradigm> {
    let need_subject = || {
        Error::InvalidConfig(format!("paradigm {name} needs --subject"))
    };
    match name {
        "common-subject" => Ok(Paradigm::CommonSubject),
        "subject-specific" => subject
            .map(|s| Paradigm::SubjectSpecific(s.to_string()))
            .ok_or_else(need_subject),
        "leave-one-out" => subject
            .map(|s| Paradigm::LeaveOneOut(s.to_string()))
            .ok_or_else(need_subject),
        other => Err(Error::InvalidConfig(format!(
            "unknown paradigm {other:?} (expected common-subject, subject-specific, \
             or leave-one-out)"
        ))),
    }
}

fn cmd_train(a: TrainArgs, cfg: &ConfigFile) -> Result<()> {
    // Resolve and validate the whole configuration before touching data.
    let model_name = resolve(a.model.clone(), cfg, "model", "svm".into())?;
    let mut config = ClassifierConfig::by_name(&model_name).map_err(|e| e.in_stage("config"))?;
    match &mut config {
        ClassifierConfig::Rf(c) => {
            if let Some(t) = resolve_opt(a.rf_trees, cfg, "rf_trees")? {
                c.num_trees = t;
            }
        }
        ClassifierConfig::Svm(c) => {
            if let Some(e) = resolve_opt(a.svm_epochs, cfg, "svm_epochs")? {
                c.epochs = e;
            }
        }
        ClassifierConfig::Mlp(c) => {
            if let Some(e) = resolve_opt(a.mlp_epochs, cfg, "mlp_epochs")? {
                c.epochs = e;
            }
        }
    }
    let seed = resolve(a.seed, cfg, "seed", 0)?;
    let config = config.with_seed(seed);
    config.validate().map_err(|e| e.in_stage("config"))?;

    let paradigm_name = resolve(a.paradigm.clone(), cfg, "paradigm", "common-subject".into())?;
    let subject = resolve_opt(a.subject.clone(), cfg, "subject")?;
    let paradigm = build_paradigm(&paradigm_name, subject.as_deref())?;
    let mut split = SplitSpec::new(paradigm, seed);
    split.test_fraction = resolve(a.test_fraction, cfg, "test_fraction", split.test_fraction)?;
    split.validate().map_err(|e| e.in_stage("config"))?;

    let features_bytes = read_input(&a.features)?;
    let fm = FeatureMatrix::read(&a.features).map_err(|e| e.in_stage("features"))?;
    let out = train_eval(&fm, &split, &config, &a.features.display().to_string())?;

    let mut test_subjects: Vec<String> = Vec::new();
    for &i in &out.split.test_indices {
        let s = &fm.provenance[i].subject_id;
        if !test_subjects.contains(s) {
            test_subjects.push(s.clone());
        }
    }
    test_subjects.sort();

    let provenance = serde_json::json!({
        "command": "train",
        "config": {
            "model": config,
            "paradigm": split.paradigm.describe(),
            "test_fraction": split.test_fraction,
            "seed": seed,
            "standardize": true,
        },
        "input": a.features.display().to_string(),
        "input_sha256": sha256_hex(&features_bytes),
    });
    if let Some(model_path) = &a.out_model {
        let mut file = ModelFile::new(out.model.clone(), Some(out.scaler.clone()));
        file.provenance = Some(provenance.clone());
        save_model(model_path, &file).map_err(|e| e.in_stage("models"))?;
        println!("model saved to {}", model_path.display());
    }
    let extra = vec![
        format!("test_subjects={}", test_subjects.join(",")),
        format!("input_sha256={}", sha256_hex(&features_bytes)),
        format!(
            "run_config={}",
            serde_json::to_string(&provenance["config"]).expect("config serializes")
        ),
    ];
    deliver_report(&out.report, &extra, a.out_report.as_deref())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model_bytes = read_input(&a.model)?;
    let file = load_model(&a.model).map_err(|e| e.in_stage("models"))?;
    let features_bytes = read_input(&a.features)?;
    let fm = FeatureMatrix::read(&a.features).map_err(|e| e.in_stage("features"))?;
    let prepared = match &file.scaler {
        Some(s) => apply_scaler(s, &fm).map_err(|e| e.in_stage("features"))?,
        None => fm.clone(),
    };
    let pred = predict(&file.model, &prepared.rows).map_err(|e| e.in_stage("models"))?;
    let meta = RunMeta {
        classifier: file.model.meta.config.kind_name().to_string(),
        paradigm: "held-out-file".to_string(),
        features: a.features.display().to_string(),
        seed: file.model.meta.config.seed(),
    };
    let report =
        evaluate(&prepared.label_codes(), &pred, meta).map_err(|e| e.in_stage("metrics"))?;
    let extra = vec![
        format!("model={}", a.model.display()),
        format!("model_sha256={}", sha256_hex(&model_bytes)),
        format!("input_sha256={}", sha256_hex(&features_bytes)),
    ];
    deliver_report(&report, &extra, a.out_report.as_deref())
}

fn cmd_sweep(a: SweepArgs, cfg: &ConfigFile) -> Result<()> {
    let stage = |e: Error| e.in_stage("sweep");
    let grid_bytes = read_input(&a.grid)?;
    let grid = SweepGrid::parse_file(&a.grid).map_err(stage)?;
    let manifest_bytes = read_input(&a.manifest)?;
    let manifest = load_manifest(&a.manifest).map_err(|e| e.in_stage("ingest"))?;

    let mut opts = SweepOptions::new(&a.out);
    opts.workers = resolve(a.workers, cfg, "workers", 0)?;
    opts.fail_fast = a.fail_fast;
    let result = run_sweep(&manifest, &grid, &opts).map_err(stage)?;

    let echo = serde_json::json!({
        "command": "sweep",
        "config": { "grid_canonical": grid.canonical_text() },
        "fingerprint": result.fingerprint,
        "grid": a.grid.display().to_string(),
        "grid_sha256": sha256_hex(&grid_bytes),
        "input": a.manifest.display().to_string(),
        "input_sha256": sha256_hex(&manifest_bytes),
    });
    write_text(&a.out.join("sweep.json"), &json_text(&echo))?;
    println!(
        "sweep complete: {} records, {} errors, results in {}",
        result.records.len(),
        result.errors.len(),
        a.out.join("results.csv").display()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs, cfg: &ConfigFile) -> Result<()> {
    let stage = |e: Error| e.in_stage("report");
    let results_bytes = read_input(&a.results)?;
    let (fingerprint, records) = read_results(&a.results).map_err(stage)?;
    let group_text = resolve(a.group_by.clone(), cfg, "group_by", "classifier".into())?;
    let axes: Vec<String> = group_text
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let result = SweepResult { fingerprint: fingerprint.clone(), records, errors: vec![] };
    emit_table(&result, &axes, &a.out, a.drowsy).map_err(stage)?;

    let echo = serde_json::json!({
        "command": "report",
        "config": { "group_by": axes, "drowsy": a.drowsy },
        "fingerprint": fingerprint,
        "input": a.results.display().to_string(),
        "input_sha256": sha256_hex(&results_bytes),
    });
    let sidecar = a.out.with_extension("provenance.json");
    write_text(&sidecar, &json_text(&echo))?;
    println!("table written to {}", a.out.display());
    Ok(())
}
