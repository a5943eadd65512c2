//! Dataset formation: timeline labeling, drowsy-length truncation, trial and
//! channel selection.
//!
//! States are assigned purely by elapsed time within a trial: the first ten
//! minutes are focused, the next ten unfocused, and everything after that
//! drowsy. The drowsy tail can be truncated to balance the classes.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Manifest, RawRecording};

/// The three attention states, in timeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    Focused,
    Unfocused,
    Drowsy,
}

impl StateLabel {
    pub const ALL: [StateLabel; 3] = [StateLabel::Focused, StateLabel::Unfocused, StateLabel::Drowsy];

    /// Stable integer code used in every serialized artifact.
    pub fn code(self) -> u8 {
        match self {
            StateLabel::Focused => 0,
            StateLabel::Unfocused => 1,
            StateLabel::Drowsy => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<StateLabel> {
        match code {
            0 => Some(StateLabel::Focused),
            1 => Some(StateLabel::Unfocused),
            2 => Some(StateLabel::Drowsy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StateLabel::Focused => "focused",
            StateLabel::Unfocused => "unfocused",
            StateLabel::Drowsy => "drowsy",
        }
    }
}

/// How much of the drowsy segment to retain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrowsyLength {
    /// Keep at most this many minutes of drowsy data.
    Minutes(u32),
    /// Keep everything up to the end of the recording.
    Max,
}

impl DrowsyLength {
    pub fn parse(s: &str) -> Result<DrowsyLength> {
        match s.trim() {
            "max" | "Max" | "MAX" => Ok(DrowsyLength::Max),
            other => other
                .parse::<u32>()
                .ok()
                .filter(|&m| m > 0)
                .map(DrowsyLength::Minutes)
                .ok_or_else(|| {
                    Error::InvalidFormationParams(format!(
                        "d_L must be a positive minute count or \"max\", got {other:?}"
                    ))
                }),
        }
    }
}

impl std::fmt::Display for DrowsyLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DrowsyLength::Minutes(m) => write!(f, "{m}"),
            DrowsyLength::Max => write!(f, "max"),
        }
    }
}

/// Parameters for turning raw recordings into labeled ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationParams {
    pub d_l: DrowsyLength,
    /// Channels to keep, in order. `None` keeps all channels of the recording.
    pub channels: Option<Vec<String>>,
    /// Trials dropped from the start of each subject's run.
    pub drop_first_trials: usize,
}

impl Default for FormationParams {
    fn default() -> Self {
        Self {
            d_l: DrowsyLength::Minutes(20),
            channels: None,
            drop_first_trials: 2,
        }
    }
}

impl FormationParams {
    pub fn validate(&self) -> Result<()> {
        if let DrowsyLength::Minutes(0) = self.d_l {
            return Err(Error::InvalidFormationParams("d_L minutes must be > 0".into()));
        }
        if let Some(chs) = &self.channels {
            if chs.is_empty() {
                return Err(Error::InvalidFormationParams(
                    "channel selection must not be empty".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One contiguous run of samples sharing a state. `start..end` are sample
/// indices into the retained matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSegment {
    pub state: StateLabel,
    pub start: usize,
    pub end: usize,
}

/// A recording trimmed to its labeled portion, with per-sample labels.
#[derive(Debug, Clone)]
pub struct LabeledRecording {
    pub subject_id: String,
    pub trial_index: u32,
    pub sample_rate_hz: f64,
    pub channel_labels: Vec<String>,
    /// Retained samples, rows × channels.
    pub samples: Array2<f64>,
    /// One label per retained row.
    pub labels: Vec<StateLabel>,
    pub segments: Vec<StateSegment>,
}

impl LabeledRecording {
    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn count_state(&self, state: StateLabel) -> usize {
        self.labels.iter().filter(|&&l| l == state).count()
    }
}

/// Sample index of a minute mark at the given rate.
fn minute_boundary(minutes: f64, fs: f64) -> usize {
    (minutes * 60.0 * fs).round() as usize
}

/// Drop the first `drop_first` trials of every subject.
///
/// Ordering is preserved. A subject left without any trial is an error.
pub fn select_trials(manifest: &Manifest, drop_first: usize) -> Result<Manifest> {
    let mut kept = Vec::new();
    for entry in &manifest.entries {
        if entry.trial_index as usize > drop_first {
            kept.push(entry.clone());
        }
    }
    for subject in manifest.subjects() {
        if !kept.iter().any(|e| e.subject_id == subject) {
            return Err(Error::NoTrialsLeft(subject, drop_first));
        }
    }
    Manifest::from_entries(kept, manifest.base_dir().to_path_buf())
}

/// Label a recording by the trial timeline and truncate the drowsy tail.
///
/// Samples in `[0, 10 min)` are focused, `[10, 20 min)` unfocused, and the
/// rest drowsy up to the retained end determined by `d_l`. Samples past the
/// retained end are discarded.
pub fn assign_labels(rec: &RawRecording, d_l: DrowsyLength) -> Result<LabeledRecording> {
    let fs = rec.sample_rate_hz;
    let n = rec.num_samples();
    let focus_end = minute_boundary(10.0, fs);
    let unfocus_end = minute_boundary(20.0, fs);
    if n < unfocus_end {
        return Err(Error::RecordingTooShort {
            actual_min: n as f64 / fs / 60.0,
            required_min: 20.0,
        });
    }
    let retained_end = match d_l {
        DrowsyLength::Minutes(m) => (unfocus_end + minute_boundary(m as f64, fs)).min(n),
        DrowsyLength::Max => n,
    };
    if retained_end == unfocus_end {
        log::warn!(
            "trial {}/{}: no drowsy samples within the retained window (d_L = {})",
            rec.subject_id,
            rec.trial_index,
            d_l
        );
    }

    let mut labels = Vec::with_capacity(retained_end);
    let mut segments = Vec::new();
    let bounds = [
        (StateLabel::Focused, 0, focus_end),
        (StateLabel::Unfocused, focus_end, unfocus_end),
        (StateLabel::Drowsy, unfocus_end, retained_end),
    ];
    for (state, start, end) in bounds {
        if start < end {
            labels.resize(end, state);
            segments.push(StateSegment { state, start, end });
        }
    }

    let samples = rec.samples.slice(ndarray::s![..retained_end, ..]).to_owned();
    Ok(LabeledRecording {
        subject_id: rec.subject_id.clone(),
        trial_index: rec.trial_index,
        sample_rate_hz: fs,
        channel_labels: rec.channel_labels.clone(),
        samples,
        labels,
        segments,
    })
}

/// Restrict a labeled recording to the requested channels, in requested order.
pub fn select_channels(rec: &LabeledRecording, channels: &[String]) -> Result<LabeledRecording> {
    if channels.is_empty() {
        return Err(Error::InvalidFormationParams(
            "channel selection must not be empty".into(),
        ));
    }
    let mut cols = Vec::with_capacity(channels.len());
    for ch in channels {
        let idx = rec
            .channel_labels
            .iter()
            .position(|c| c == ch)
            .ok_or_else(|| Error::UnknownChannel(ch.clone()))?;
        cols.push(idx);
    }
    Ok(LabeledRecording {
        subject_id: rec.subject_id.clone(),
        trial_index: rec.trial_index,
        sample_rate_hz: rec.sample_rate_hz,
        channel_labels: channels.to_vec(),
        samples: rec.samples.select(Axis(1), &cols),
        labels: rec.labels.clone(),
        segments: rec.segments.clone(),
    })
}
