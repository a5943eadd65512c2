//! Classifiers: random forest, linear SVM, and multilayer perceptrons, all
//! implemented in this crate.
//!
//! Every trainer is deterministic given its config (which carries the seed);
//! per-tree and per-class randomness is derived from the seed with stable
//! role strings, so results are independent of thread scheduling. Prediction
//! ties always resolve to the smallest class code.
//!
//! Models only ever see the numeric rows and integer class codes of a
//! [`FeatureMatrix`]; provenance strings never influence training or
//! prediction.

mod forest;
mod mlp;
mod svm;

pub use forest::ForestModel;
pub use mlp::{gradient_check, MlpArch, MlpModel};
pub use svm::SvmModel;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Scaler};
use crate::util::sha256_hex;

/// Current on-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// The pipeline's label space is fixed at three states.
pub(crate) const NUM_CLASSES: usize = 3;

const MODEL_MAGIC: &str = "mindstate-model";

/// Random-forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub num_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means `ceil(sqrt(num_features))`.
    pub features_per_split: Option<usize>,
    /// Draw a bootstrap resample per tree. Disable to train every tree on
    /// the full training set.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            num_trees: 200,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidModelConfig("num_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidModelConfig("min_samples_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidModelConfig("features_per_split must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidModelConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SvmKernel {
    #[default]
    Linear,
}

/// Linear SVM hyperparameters (one-vs-rest, stochastic subgradient descent
/// on hinge loss with L2 regularization, step size `1/(lambda t)` where
/// `lambda = 1/(C n)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: SvmKernel,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { kernel: SvmKernel::Linear, c: 1.0, epochs: 50, seed: 0 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidModelConfig(format!(
                "SVM regularization C must be positive, got {}",
                self.c
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidModelConfig("SVM epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Multilayer-perceptron hyperparameters. The two named architectures match
/// the configurations the pipeline sweeps over; `Custom` exists for small
/// diagnostic nets (notably gradient checking).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub arch: MlpArch,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(arch: MlpArch) -> Self {
        Self { arch, learning_rate: 1e-3, batch_size: 64, epochs: 30, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidModelConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidModelConfig("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidModelConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// A classifier choice with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassifierConfig {
    Rf(RfConfig),
    Svm(SvmConfig),
    Mlp(MlpConfig),
}

impl ClassifierConfig {
    /// Stable short name used in CLI arguments and result tables.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierConfig::Rf(_) => "rf",
            ClassifierConfig::Svm(_) => "svm",
            ClassifierConfig::Mlp(c) => c.arch.kind_name(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ClassifierConfig::Rf(c) => c.seed,
            ClassifierConfig::Svm(c) => c.seed,
            ClassifierConfig::Mlp(c) => c.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ClassifierConfig::Rf(c) => c.seed = seed,
            ClassifierConfig::Svm(c) => c.seed = seed,
            ClassifierConfig::Mlp(c) => c.seed = seed,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierConfig::Rf(c) => c.validate(),
            ClassifierConfig::Svm(c) => c.validate(),
            ClassifierConfig::Mlp(c) => c.validate(),
        }
    }

    /// Default config for a classifier name: `rf`, `svm`, `dnn4`, or `dnn6`.
    pub fn by_name(name: &str) -> Result<ClassifierConfig> {
        match name {
            "rf" => Ok(ClassifierConfig::Rf(RfConfig::default())),
            "svm" => Ok(ClassifierConfig::Svm(SvmConfig::default())),
            "dnn4" => Ok(ClassifierConfig::Mlp(MlpConfig::new(MlpArch::Dnn4))),
            "dnn6" => Ok(ClassifierConfig::Mlp(MlpConfig::new(MlpArch::Dnn6))),
            other => Err(Error::InvalidModelConfig(format!(
                "unknown classifier {other:?} (expected rf, svm, dnn4, or dnn6)"
            ))),
        }
    }
}

/// Training metadata attached to every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ClassifierConfig,
    pub num_features: usize,
    /// Class codes present in the training labels, ascending.
    pub classes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Forest(ForestModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub meta: ModelMeta,
    pub kind: ModelKind,
}

/// Train a classifier on the rows and labels of an (already standardized)
/// feature matrix.
pub fn train(config: &ClassifierConfig, data: &FeatureMatrix) -> Result<TrainedModel> {
    config.validate()?;
    let rows = &data.rows;
    if rows.nrows() == 0 || rows.ncols() == 0 {
        return Err(Error::EmptyTrainingMatrix);
    }
    for ((r, c), &v) in rows.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature { row: r, col: c });
        }
    }
    let labels = data.label_codes();
    let mut classes: Vec<u8> = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClassTraining);
    }

    let kind = match config {
        ClassifierConfig::Rf(cfg) => ModelKind::Forest(forest::train_forest(cfg, rows, &labels)?),
        ClassifierConfig::Svm(cfg) => ModelKind::Svm(svm::train_svm(cfg, rows, &labels, &classes)),
        ClassifierConfig::Mlp(cfg) => ModelKind::Mlp(mlp::train_mlp(cfg, rows, &labels)?),
    };
    Ok(TrainedModel {
        meta: ModelMeta { config: config.clone(), num_features: rows.ncols(), classes },
        kind,
    })
}

/// Predict a class code for every row.
pub fn predict(model: &TrainedModel, rows: &Array2<f64>) -> Result<Vec<u8>> {
    if rows.ncols() != model.meta.num_features {
        return Err(Error::WidthMismatch {
            expected: model.meta.num_features,
            found: rows.ncols(),
        });
    }
    Ok(match &model.kind {
        ModelKind::Forest(f) => f.predict(rows),
        ModelKind::Svm(s) => s.predict(rows),
        ModelKind::Mlp(m) => m.predict(rows),
    })
}

/// Everything stored in a model file: the model plus the scaler its inputs
/// are expected to pass through, and optionally a record of how it was
/// produced (resolved run configuration, input content hash).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub scaler: Option<Scaler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn new(model: TrainedModel, scaler: Option<Scaler>) -> Self {
        Self { model, scaler, provenance: None }
    }
}

/// Write a model file: magic + version line, payload checksum, JSON payload.
pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    let payload = serde_json::to_string(file).map_err(|e| Error::ModelFormat {
        path: path.display().to_string(),
        msg: format!("serialization failed: {e}"),
    })?;
    let text = format!(
        "{MODEL_MAGIC} v{MODEL_FORMAT_VERSION}\nsha256:{}\n{payload}\n",
        sha256_hex(payload.as_bytes())
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = || path.display().to_string();
    let bad = |msg: &str| Error::ModelFormat { path: p(), msg: msg.into() };

    let mut lines = text.splitn(3, '\n');
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let version = header
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| bad("missing or malformed magic line"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelVersion {
            path: p(),
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let checksum = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256:"))
        .ok_or_else(|| bad("missing checksum line"))?;
    let payload = lines.next().ok_or_else(|| bad("missing payload"))?;
    let payload = payload.strip_suffix('\n').unwrap_or(payload);
    if sha256_hex(payload.as_bytes()) != checksum {
        return Err(Error::ModelChecksum { path: p() });
    }
    serde_json::from_str(payload)
        .map_err(|e| bad(&format!("payload does not parse: {e}")))
}

/// Argmax over scores with ties resolved to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod bench {
    //! Shared synthetic benchmark datasets for the classifier tests.

    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::features::{apply_scaler, fit_scaler, FeatureMatrix, FrameProvenance};
    use crate::formation::StateLabel;

    pub fn matrix_of(rows: Array2<f64>, labels: Vec<u8>) -> FeatureMatrix {
        let names = (0..rows.ncols()).map(|j| format!("f{j}")).collect();
        let provenance = (0..rows.nrows())
            .map(|i| FrameProvenance {
                subject_id: "bench".into(),
                trial_index: 1,
                frame_time_s: i as f64,
            })
            .collect();
        FeatureMatrix {
            rows,
            labels: labels
                .iter()
                .map(|&c| StateLabel::from_code(c).unwrap())
                .collect(),
            provenance,
            feature_names: names,
        }
    }

    /// Three Gaussian blobs in 2D. `sigma` relative to a between-center
    /// distance of 8, so `sigma = 1.0` has margin well above 4 sigma.
    pub fn blobs(per_class: usize, sigma: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let centers = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * 3;
        let mut rows = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for (k, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..per_class {
                let r = k * per_class + i;
                let gx: f64 = rng.sample(StandardNormal);
                let gy: f64 = rng.sample(StandardNormal);
                rows[[r, 0]] = cx + sigma * gx;
                rows[[r, 1]] = cy + sigma * gy;
                labels.push(k as u8);
            }
        }
        (rows, labels)
    }

    /// Nearest-centroid classification, the oracle for blob separability.
    pub fn nearest_centroid(rows: &Array2<f64>, labels: &[u8]) -> Vec<u8> {
        let mut centers = [[0.0f64; 2]; 3];
        let mut counts = [0usize; 3];
        for (i, &l) in labels.iter().enumerate() {
            centers[l as usize][0] += rows[[i, 0]];
            centers[l as usize][1] += rows[[i, 1]];
            counts[l as usize] += 1;
        }
        for k in 0..3 {
            centers[k][0] /= counts[k] as f64;
            centers[k][1] /= counts[k] as f64;
        }
        (0..rows.nrows())
            .map(|i| {
                let d = |k: usize| {
                    let dx = rows[[i, 0]] - centers[k][0];
                    let dy = rows[[i, 1]] - centers[k][1];
                    dx * dx + dy * dy
                };
                super::argmax(&[-d(0), -d(1), -d(2)]) as u8
            })
            .collect()
    }

    /// Three concentric rings: a problem no linear machine can solve.
    pub fn rings(per_class: usize, noise: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let radii = [1.0, 2.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * 3;
        let mut rows = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for (k, &radius) in radii.iter().enumerate() {
            for i in 0..per_class {
                let r = k * per_class + i;
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let jitter: f64 = rng.sample(StandardNormal);
                let rho = radius + noise * jitter;
                rows[[r, 0]] = rho * angle.cos();
                rows[[r, 1]] = rho * angle.sin();
                labels.push(k as u8);
            }
        }
        (rows, labels)
    }

    /// Standardize `train` and `test` with statistics fitted on `train`.
    pub fn standardized(
        train: (Array2<f64>, Vec<u8>),
        test: (Array2<f64>, Vec<u8>),
    ) -> (FeatureMatrix, FeatureMatrix) {
        let train_m = matrix_of(train.0, train.1);
        let test_m = matrix_of(test.0, test.1);
        let scaler = fit_scaler(&train_m).unwrap();
        (
            apply_scaler(&scaler, &train_m).unwrap(),
            apply_scaler(&scaler, &test_m).unwrap(),
        )
    }

    pub fn accuracy(truth: &[u8], pred: &[u8]) -> f64 {
        let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
        hits as f64 / truth.len() as f64
    }
}
