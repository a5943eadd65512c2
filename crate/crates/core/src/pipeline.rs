//! End-to-end composition of the stages: recordings to feature matrices to
//! trained, evaluated models.
//!
//! Each step wraps its errors with a stage name so a failure deep inside a
//! long run still says where it happened. Trials are featurized one at a
//! time and stacked, which keeps peak memory at one recording plus the
//! growing feature matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    apply_scaler, bin_frequencies, fit_scaler, flatten, running_average, to_decibels,
    BinningParams, FeatureMatrix, Scaler, SmoothingParams, DEFAULT_DB_EPSILON,
};
use crate::formation::{assign_labels, select_channels, select_trials, FormationParams};
use crate::ingest::{load_entry, Manifest, RawRecording};
use crate::metrics::{evaluate, EvalReport, RunMeta};
use crate::models::{predict, train, ClassifierConfig, TrainedModel};
use crate::spectral::{spectrogram, StftParams};
use crate::split::{make_split, DatasetSplit, SplitSpec};

/// Everything between a labeled recording and a feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub formation: FormationParams,
    /// Analysis window length, seconds.
    pub w_l_seconds: f64,
    /// Window shift, samples.
    pub w_s_samples: usize,
    pub binning: BinningParams,
    pub smoothing: SmoothingParams,
    pub db_epsilon: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            formation: FormationParams::default(),
            w_l_seconds: 4.0,
            w_s_samples: 128,
            binning: BinningParams::default(),
            smoothing: SmoothingParams::default(),
            db_epsilon: DEFAULT_DB_EPSILON,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.formation.validate()?;
        self.binning.validate()?;
        self.smoothing.validate()?;
        if !(self.db_epsilon.is_finite() && self.db_epsilon > 0.0) {
            return Err(Error::InvalidFeatureParams(format!(
                "dB epsilon must be positive, got {}",
                self.db_epsilon
            )));
        }
        Ok(())
    }

    /// Short textual form for provenance fields and result tables.
    pub fn describe(&self) -> String {
        let channels = match &self.formation.channels {
            None => "all".to_string(),
            Some(chs) => chs.join("+"),
        };
        format!(
            "d_l={} w_l={} w_s={} channels={} bin={}Hz range=({},{}] smooth={}s",
            self.formation.d_l,
            self.w_l_seconds,
            self.w_s_samples,
            channels,
            self.binning.bin_size_hz,
            self.binning.f_lo_hz,
            self.binning.f_hi_hz,
            self.smoothing.span_seconds,
        )
    }
}

/// Featurize one raw recording: label, select channels, STFT, bin, smooth,
/// convert to dB, flatten.
pub fn featurize_trial(rec: &RawRecording, params: &PipelineParams) -> Result<FeatureMatrix> {
    let mut labeled =
        assign_labels(rec, params.formation.d_l).map_err(|e| e.in_stage("formation"))?;
    if let Some(chs) = &params.formation.channels {
        labeled = select_channels(&labeled, chs).map_err(|e| e.in_stage("formation"))?;
    }
    let stft = StftParams::new(params.w_l_seconds, params.w_s_samples, labeled.sample_rate_hz)
        .map_err(|e| e.in_stage("spectral"))?;
    let spec = spectrogram(&labeled, &stft).map_err(|e| e.in_stage("spectral"))?;
    let spec = bin_frequencies(&spec, &params.binning).map_err(|e| e.in_stage("features"))?;
    let spec = running_average(&spec, &params.smoothing).map_err(|e| e.in_stage("features"))?;
    let spec = to_decibels(&spec, params.db_epsilon).map_err(|e| e.in_stage("features"))?;
    flatten(&spec).map_err(|e| e.in_stage("features"))
}

/// Featurize a whole corpus: drop warm-up trials, then stack per-trial
/// feature matrices in manifest order.
pub fn featurize_corpus(manifest: &Manifest, params: &PipelineParams) -> Result<FeatureMatrix> {
    params.validate()?;
    let kept = select_trials(manifest, params.formation.drop_first_trials)
        .map_err(|e| e.in_stage("formation"))?;
    let mut parts = Vec::with_capacity(kept.len());
    for entry in &kept.entries {
        let rec = load_entry(&kept, entry).map_err(|e| e.in_stage("ingest"))?;
        parts.push(featurize_trial(&rec, params)?);
    }
    FeatureMatrix::vstack(&parts).map_err(|e| e.in_stage("features"))
}

/// The products of one train/evaluate run.
#[derive(Debug, Clone)]
pub struct TrainEval {
    pub model: TrainedModel,
    pub scaler: Scaler,
    pub report: EvalReport,
    pub split: DatasetSplit,
}

/// Split, standardize on the training side, train, and evaluate.
///
/// `features_desc` is echoed into the report metadata so a report alone
/// identifies the feature configuration it came from.
pub fn train_eval(
    features: &FeatureMatrix,
    split_spec: &SplitSpec,
    config: &ClassifierConfig,
    features_desc: &str,
) -> Result<TrainEval> {
    let split = make_split(features, split_spec).map_err(|e| e.in_stage("split"))?;
    let train_m = features.subset(&split.train_indices);
    let test_m = features.subset(&split.test_indices);
    let scaler = fit_scaler(&train_m).map_err(|e| e.in_stage("features"))?;
    let train_m = apply_scaler(&scaler, &train_m).map_err(|e| e.in_stage("features"))?;
    let test_m = apply_scaler(&scaler, &test_m).map_err(|e| e.in_stage("features"))?;
    let model = train(config, &train_m).map_err(|e| e.in_stage("models"))?;
    let pred = predict(&model, &test_m.rows).map_err(|e| e.in_stage("models"))?;
    let meta = RunMeta {
        classifier: config.kind_name().to_string(),
        paradigm: split_spec.paradigm.describe(),
        features: features_desc.to_string(),
        seed: split_spec.seed,
    };
    let report = evaluate(&test_m.label_codes(), &pred, meta).map_err(|e| e.in_stage("metrics"))?;
    Ok(TrainEval { model, scaler, report, split })
}
