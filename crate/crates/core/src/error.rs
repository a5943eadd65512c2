//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ── ingest ──────────────────────────────────────────────────────────
    #[error("empty manifest")]
    EmptyManifest,
    #[error("manifest parse error at line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },
    #[error("duplicate manifest entry for subject {subject} trial {trial}")]
    DuplicateManifestEntry { subject: String, trial: u32 },
    #[error("subject {subject}: trial indices must be a contiguous run starting at 1, found {found:?}")]
    NonContiguousTrials { subject: String, found: Vec<u32> },
    #[error("recording parse error in {path} at line {line}: {msg}")]
    RecordingParse { path: String, line: usize, msg: String },
    #[error("non-finite sample at row {row}, channel {channel}")]
    NonFiniteSample { row: usize, channel: String },
    #[error("duplicate channel label {0}")]
    DuplicateChannel(String),
    #[error("channel mismatch: expected channels {expected:?}, file has {found:?}")]
    ChannelMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("sample rate mismatch: expected {expected} Hz, file declares {found} Hz")]
    SampleRateMismatch { expected: f64, found: f64 },
    #[error("recording too short: {actual_min:.2} min < {required_min:.0} min required")]
    RecordingTooShort { actual_min: f64, required_min: f64 },
    #[error("invalid synthesis spec: {0}")]
    InvalidSynthSpec(String),

    // ── formation ───────────────────────────────────────────────────────
    #[error("subject {0} has no trials left after dropping the first {1}")]
    NoTrialsLeft(String, usize),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("invalid formation params: {0}")]
    InvalidFormationParams(String),

    // ── spectral / features ─────────────────────────────────────────────
    #[error("invalid STFT params: {0}")]
    InvalidStftParams(String),
    #[error("signal too short: {len} samples < one window of {window} samples")]
    SignalTooShort { len: usize, window: usize },
    #[error("incompatible binning: {0}")]
    IncompatibleBinning(String),
    #[error("invalid feature params: {0}")]
    InvalidFeatureParams(String),
    #[error("feature matrix parse error in {path} at line {line}: {msg}")]
    FeatureFileParse { path: String, line: usize, msg: String },
    #[error("cannot fit scaler on an empty matrix")]
    EmptyTrainingMatrix,
    #[error("feature matrices disagree: {0}")]
    FeatureMismatch(String),

    // ── split ───────────────────────────────────────────────────────────
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("class {0:?} absent from the rows being split; stratification impossible")]
    ClassAbsent(crate::formation::StateLabel),
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),

    // ── models ──────────────────────────────────────────────────────────
    #[error("training set contains a single class; need at least 2")]
    SingleClassTraining,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("feature width mismatch: model expects {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid model config: {0}")]
    InvalidModelConfig(String),
    #[error("model file {path}: {msg}")]
    ModelFormat { path: String, msg: String },
    #[error("model file {path}: checksum mismatch (file corrupt or truncated)")]
    ModelChecksum { path: String },
    #[error("model file {path}: unsupported format version {found} (expected {expected})")]
    ModelVersion { path: String, found: u32, expected: u32 },

    // ── metrics ─────────────────────────────────────────────────────────
    #[error("label vectors have different lengths: {true_len} vs {pred_len}")]
    LabelLengthMismatch { true_len: usize, pred_len: usize },
    #[error("empty label vector")]
    EmptyLabels,
    #[error("label code {0} out of range (expected 0..=2)")]
    LabelOutOfRange(u8),
    #[error("confusion matrix has no true samples in any class")]
    EmptyConfusion,
    #[error("no drowsy samples in confusion matrix")]
    NoDrowsySamples,

    // ── sweep / cli ─────────────────────────────────────────────────────
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("grid file parse error at line {line}: {msg}")]
    GridParse { line: usize, msg: String },
    #[error("unknown report axis {0}")]
    UnknownAxis(String),
    #[error("results file parse error in {path} at line {line}: {msg}")]
    ResultsParse { path: String, line: usize, msg: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
