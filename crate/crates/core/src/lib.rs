//! # mindstate — EEG attention-state classification
//!
//! A library and CLI for classifying attention states (focused, unfocused,
//! drowsy) from multi-channel EEG. The pipeline goes from raw recordings to
//! evaluation reports:
//!
//! ```text
//! recording files (or synthetic corpus)
//!   │
//!   ├─ ingest       manifest + recording loader, synthetic generator
//!   ├─ formation    timeline labeling, drowsy-length truncation, channel selection
//!   ├─ spectral     Blackman-windowed STFT → per-channel power spectrograms
//!   ├─ features     0.5 Hz binning, (0,18] Hz band restriction, 15 s running
//!   │               average, dB conversion, flattening, standardization
//!   ├─ split        subject-specific / common-subject / leave-one-out splits
//!   ├─ models       random forest, linear SVM, and two MLPs, from scratch
//!   ├─ metrics      confusion matrix, balanced accuracy, per-class recall
//!   └─ sweep        seeded hyperparameter grids with caching and CSV reports
//! ```
//!
//! Every stage is deterministic given its seed, so full runs are reproducible
//! byte for byte. The `mindstate` binary chains the stages through documented
//! file formats; see the README for the CLI surface.

pub mod cli;
pub mod error;
pub mod features;
pub mod formation;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod spectral;
pub mod split;
pub mod sweep;
pub mod util;

pub use error::{Error, Result};
pub use features::{BinningParams, FeatureMatrix, Scaler, SmoothingParams};
pub use formation::{DrowsyLength, FormationParams, LabeledRecording, StateLabel};
pub use ingest::{Manifest, RawRecording, SynthSpec};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use models::{ClassifierConfig, MlpConfig, RfConfig, SvmConfig, TrainedModel};
pub use pipeline::{featurize_corpus, featurize_trial, train_eval, PipelineParams, TrainEval};
pub use spectral::{Spectrogram, StftParams};
pub use split::{DatasetSplit, Paradigm, SplitSpec};
pub use sweep::{
    emit_table, read_results, run_sweep, GridParadigm, SweepGrid, SweepOptions, SweepRecord,
    SweepResult,
};
