//! Raw data ingestion: the recording and manifest file formats, corpus
//! loading, and a synthetic EEG generator for running the pipeline without
//! the original dataset.
//!
//! A recording file is a header line
//! `# subject=<id> trial=<n> fs=<hz> channels=<comma-list>` followed by CSV
//! sample rows, one row per time step. A manifest is a CSV of
//! `subject,trial,relative_path[,duration_min]` lines; the optional duration
//! column marks trials whose short length is known and accepted.

use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, fmt_f64};

/// Electrode labels of the full montage, in canonical column order.
pub const CANONICAL_CHANNELS: [&str; 7] = ["F3", "F4", "Fz", "C3", "C4", "Cz", "Pz"];

pub const CANONICAL_SAMPLE_RATE_HZ: f64 = 128.0;

/// Trials shorter than this lack a usable drowsy tail and are rejected unless
/// the manifest declares their duration explicitly.
pub const MIN_TRIAL_MINUTES: f64 = 30.0;

/// One trial's worth of multichannel samples, as read from disk or generated.
#[derive(Debug, Clone)]
pub struct RawRecording {
    pub subject_id: String,
    pub trial_index: u32,
    pub sample_rate_hz: f64,
    pub channel_labels: Vec<String>,
    /// Samples, rows × channels.
    pub samples: Array2<f64>,
}

impl RawRecording {
    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration_minutes(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate_hz / 60.0
    }

    /// Structural invariants: positive sample rate, unique non-empty channel
    /// labels matching the sample width.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidSynthSpec(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.channel_labels.is_empty() {
            return Err(Error::ChannelMismatch {
                expected: vec!["<at least one channel>".into()],
                found: vec![],
            });
        }
        for (i, ch) in self.channel_labels.iter().enumerate() {
            if self.channel_labels[..i].contains(ch) {
                return Err(Error::DuplicateChannel(ch.clone()));
            }
        }
        if self.channel_labels.len() != self.num_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channel_labels.clone(),
                found: vec![format!("{} sample columns", self.num_channels())],
            });
        }
        Ok(())
    }

    /// Check this recording against the corpus-wide rate and channel set.
    pub fn ensure_matches(&self, sample_rate_hz: f64, channels: &[String]) -> Result<()> {
        if self.sample_rate_hz != sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: sample_rate_hz,
                found: self.sample_rate_hz,
            });
        }
        if self.channel_labels != channels {
            return Err(Error::ChannelMismatch {
                expected: channels.to_vec(),
                found: self.channel_labels.clone(),
            });
        }
        Ok(())
    }
}

/// One manifest line: where a trial lives and whose it is.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub trial_index: u32,
    /// Path as written in the manifest, resolved against the manifest's
    /// directory when loading.
    pub path: PathBuf,
    /// Declared duration in minutes. Presence turns the minimum-duration
    /// check into a warning.
    pub expected_minutes: Option<f64>,
}

/// An ordered, validated list of trials.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    /// Sort entries by (subject, trial) and reject duplicates.
    pub fn from_entries(mut entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Result<Manifest> {
        if entries.is_empty() {
            return Err(Error::EmptyManifest);
        }
        entries.sort_by(|a, b| {
            (a.subject_id.as_str(), a.trial_index).cmp(&(b.subject_id.as_str(), b.trial_index))
        });
        for pair in entries.windows(2) {
            if pair[0].subject_id == pair[1].subject_id && pair[0].trial_index == pair[1].trial_index
            {
                return Err(Error::DuplicateManifestEntry {
                    subject: pair[0].subject_id.clone(),
                    trial: pair[0].trial_index,
                });
            }
        }
        Ok(Manifest { entries, base_dir })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.subject_id) {
                out.push(e.subject_id.clone());
            }
        }
        out.sort();
        out
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# subject,trial,path,duration_min\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{}",
                e.subject_id,
                e.trial_index,
                e.path.display()
            ));
            if let Some(m) = e.expected_minutes {
                out.push(',');
                out.push_str(&fmt_f64(m));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Parse a manifest file. Trial indices per subject must form a contiguous
/// run starting at 1; blank lines and `#` comments are skipped.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::ManifestParse {
                line: line_no,
                msg: format!("expected 3 or 4 comma-separated fields, got {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(Error::ManifestParse {
                line: line_no,
                msg: "empty subject id".into(),
            });
        }
        let trial: u32 = fields[1].parse().map_err(|_| Error::ManifestParse {
            line: line_no,
            msg: format!("trial index must be a positive integer, got {:?}", fields[1]),
        })?;
        if trial == 0 {
            return Err(Error::ManifestParse {
                line: line_no,
                msg: "trial indices are 1-based".into(),
            });
        }
        if fields[2].is_empty() {
            return Err(Error::ManifestParse {
                line: line_no,
                msg: "empty path".into(),
            });
        }
        let expected_minutes = match fields.get(3) {
            None => None,
            Some(s) => {
                let m: f64 = s.parse().map_err(|_| Error::ManifestParse {
                    line: line_no,
                    msg: format!("duration must be a number of minutes, got {s:?}"),
                })?;
                if !(m.is_finite() && m > 0.0) {
                    return Err(Error::ManifestParse {
                        line: line_no,
                        msg: format!("duration must be positive, got {s}"),
                    });
                }
                Some(m)
            }
        };
        entries.push(ManifestEntry {
            subject_id: fields[0].to_string(),
            trial_index: trial,
            path: PathBuf::from(fields[2]),
            expected_minutes,
        });
    }
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let manifest = Manifest::from_entries(entries, base_dir)?;
    for subject in manifest.subjects() {
        let found: Vec<u32> = manifest
            .entries
            .iter()
            .filter(|e| e.subject_id == subject)
            .map(|e| e.trial_index)
            .collect();
        let contiguous = found.iter().enumerate().all(|(i, &t)| t == i as u32 + 1);
        if !contiguous {
            return Err(Error::NonContiguousTrials { subject, found });
        }
    }
    Ok(manifest)
}

/// Parse one recording file. Checks structure and sample finiteness but not
/// manifest identity or duration; see [`load_entry`] for those.
pub fn read_recording(path: &Path) -> Result<RawRecording> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let mut line = String::new();
    let mut line_no = 0usize;

    // Header.
    let header = loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        line_no += 1;
        if n == 0 {
            return Err(Error::RecordingParse {
                path: path_str,
                line: line_no,
                msg: "missing header line".into(),
            });
        }
        let t = line.trim();
        if !t.is_empty() {
            break t.to_string();
        }
    };
    let header_line = line_no;
    let body = header.strip_prefix('#').ok_or_else(|| Error::RecordingParse {
        path: path_str.clone(),
        line: header_line,
        msg: "header must start with '#'".into(),
    })?;
    let mut subject = None;
    let mut trial = None;
    let mut fs = None;
    let mut channels: Option<Vec<String>> = None;
    for token in body.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| Error::RecordingParse {
            path: path_str.clone(),
            line: header_line,
            msg: format!("malformed header token {token:?}"),
        })?;
        match key {
            "subject" => subject = Some(value.to_string()),
            "trial" => {
                trial = Some(value.parse::<u32>().map_err(|_| Error::RecordingParse {
                    path: path_str.clone(),
                    line: header_line,
                    msg: format!("trial must be an integer, got {value:?}"),
                })?)
            }
            "fs" => {
                let v: f64 = value.parse().map_err(|_| Error::RecordingParse {
                    path: path_str.clone(),
                    line: header_line,
                    msg: format!("fs must be a number, got {value:?}"),
                })?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::RecordingParse {
                        path: path_str.clone(),
                        line: header_line,
                        msg: format!("fs must be positive, got {value}"),
                    });
                }
                fs = Some(v);
            }
            "channels" => {
                channels = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            _ => {}
        }
    }
    let missing = |what: &str| Error::RecordingParse {
        path: path_str.clone(),
        line: header_line,
        msg: format!("header missing {what}"),
    };
    let subject = subject.ok_or_else(|| missing("subject"))?;
    let trial = trial.ok_or_else(|| missing("trial"))?;
    let fs = fs.ok_or_else(|| missing("fs"))?;
    let channels = channels.ok_or_else(|| missing("channels"))?;
    if channels.iter().any(|c| c.is_empty()) {
        return Err(Error::RecordingParse {
            path: path_str,
            line: header_line,
            msg: "empty channel label in header".into(),
        });
    }
    for (i, ch) in channels.iter().enumerate() {
        if channels[..i].contains(ch) {
            return Err(Error::DuplicateChannel(ch.clone()));
        }
    }

    // Sample rows.
    let width = channels.len();
    let mut flat: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut count = 0usize;
        for (col, field) in t.split(',').enumerate() {
            if col >= width {
                count += 1;
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::RecordingParse {
                path: path_str.clone(),
                line: line_no,
                msg: format!("sample value {:?} is not a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    row: rows,
                    channel: channels[col].clone(),
                });
            }
            flat.push(v);
            count += 1;
        }
        if count != width {
            return Err(Error::RecordingParse {
                path: path_str,
                line: line_no,
                msg: format!("expected {width} values, got {count}"),
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::RecordingParse {
            path: path_str,
            line: line_no,
            msg: "no sample rows".into(),
        });
    }
    let samples = Array2::from_shape_vec((rows, width), flat).expect("shape from counted rows");
    let rec = RawRecording {
        subject_id: subject,
        trial_index: trial,
        sample_rate_hz: fs,
        channel_labels: channels,
        samples,
    };
    rec.validate()?;
    Ok(rec)
}

/// Write a recording in the format [`read_recording`] parses. Values use
/// shortest round-trip formatting, so a write/read cycle is bit-exact.
pub fn write_recording(rec: &RawRecording, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = format!(
        "# subject={} trial={} fs={} channels={}\n",
        rec.subject_id,
        rec.trial_index,
        fmt_f64(rec.sample_rate_hz),
        rec.channel_labels.join(",")
    );
    out.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut buf = String::with_capacity(rec.num_channels() * 24);
    for row in rec.samples.rows() {
        buf.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            buf.push_str(&fmt_f64(*v));
        }
        buf.push('\n');
        out.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Load one manifest entry's recording, checking that the file's identity
/// matches the manifest and applying the minimum-duration policy.
pub fn load_entry(manifest: &Manifest, entry: &ManifestEntry) -> Result<RawRecording> {
    let path = manifest.resolve(entry);
    let rec = read_recording(&path)?;
    if rec.subject_id != entry.subject_id || rec.trial_index != entry.trial_index {
        return Err(Error::RecordingParse {
            path: path.display().to_string(),
            line: 1,
            msg: format!(
                "header identity {}/{} does not match manifest entry {}/{}",
                rec.subject_id, rec.trial_index, entry.subject_id, entry.trial_index
            ),
        });
    }
    let minutes = rec.duration_minutes();
    if minutes + 1e-9 < MIN_TRIAL_MINUTES {
        match entry.expected_minutes {
            Some(_) => log::warn!(
                "trial {}/{} is {:.2} min, shorter than the usual {:.0} min minimum; \
                 kept because the manifest declares its duration",
                entry.subject_id,
                entry.trial_index,
                minutes,
                MIN_TRIAL_MINUTES
            ),
            None => {
                return Err(Error::RecordingTooShort {
                    actual_min: minutes,
                    required_min: MIN_TRIAL_MINUTES,
                })
            }
        }
    }
    if let Some(expected) = entry.expected_minutes {
        if (minutes - expected).abs() > 0.1 {
            log::warn!(
                "trial {}/{}: manifest declares {expected} min but file holds {minutes:.2} min",
                entry.subject_id,
                entry.trial_index
            );
        }
    }
    Ok(rec)
}

/// Load every trial in the manifest, enforcing a uniform sample rate and
/// channel set across the corpus.
pub fn load_corpus(manifest: &Manifest) -> Result<Vec<RawRecording>> {
    let mut recs = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let rec = load_entry(manifest, entry)?;
        if let Some(first) = recs.first() {
            let first: &RawRecording = first;
            rec.ensure_matches(first.sample_rate_hz, &first.channel_labels)?;
        }
        recs.push(rec);
    }
    Ok(recs)
}

/// Oscillation profile for one attention state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateProfile {
    /// Band the state's rhythm occupies, Hz.
    pub band_hz: (f64, f64),
    /// Oscillation power as a multiple of the noise power in that band.
    pub gain: f64,
}

/// Recipe for a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_subjects: usize,
    pub trials_per_subject: usize,
    pub trial_minutes: f64,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    /// Indexed by state code: focused, unfocused, drowsy.
    pub profile: [StateProfile; 3],
    /// Scale of per-subject band shifts (Hz) and gain jitter.
    pub subject_variability: f64,
    /// Spectral slope of the background noise, power ~ 1/f^alpha.
    pub noise_exponent: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_subjects: 5,
            trials_per_subject: 5,
            trial_minutes: 45.0,
            sample_rate_hz: CANONICAL_SAMPLE_RATE_HZ,
            channels: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            profile: [
                StateProfile { band_hz: (12.0, 18.0), gain: 4.0 },
                StateProfile { band_hz: (8.0, 12.0), gain: 4.0 },
                StateProfile { band_hz: (1.0, 7.0), gain: 4.0 },
            ],
            subject_variability: 0.3,
            noise_exponent: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidSynthSpec(msg));
        if self.num_subjects == 0 || self.trials_per_subject == 0 {
            return err("need at least one subject and one trial".into());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return err(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if !(self.trial_minutes.is_finite() && self.trial_minutes >= 30.0) {
            return err(format!(
                "trials must be at least 30 min (labeling needs the full 20-minute \
                 timeline plus a drowsy tail), got {} min",
                self.trial_minutes
            ));
        }
        if self.channels.is_empty() {
            return err("need at least one channel".into());
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.is_empty() || self.channels[..i].contains(ch) {
                return err(format!("channel labels must be unique and non-empty, got {ch:?}"));
            }
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for p in &self.profile {
            let (lo, hi) = p.band_hz;
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi && hi < nyquist) {
                return err(format!("band ({lo}, {hi}) Hz must satisfy 0 < lo < hi < Nyquist"));
            }
            if !(p.gain.is_finite() && p.gain > 0.0) {
                return err(format!("gain must be positive, got {}", p.gain));
            }
        }
        if !(self.subject_variability.is_finite() && self.subject_variability >= 0.0) {
            return err(format!(
                "subject variability must be non-negative, got {}",
                self.subject_variability
            ));
        }
        if !(self.noise_exponent.is_finite() && self.noise_exponent >= 0.0) {
            return err(format!("noise exponent must be non-negative, got {}", self.noise_exponent));
        }
        Ok(())
    }

    fn num_samples(&self) -> usize {
        (self.trial_minutes * 60.0 * self.sample_rate_hz).round() as usize
    }

    fn subject_id(&self, subject_idx: usize) -> String {
        format!("s{:02}", subject_idx + 1)
    }
}

/// A subject's personal variant of the state profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub bands_hz: [(f64, f64); 3],
    pub gains: [f64; 3],
}

/// Derive a subject's profile: each state's band shifts by N(0, v) Hz and its
/// gain scales by exp(N(0, v/4)), drawn from a per-subject stream. With
/// `subject_variability = 0` every subject gets the base profile.
pub fn subject_profile(spec: &SynthSpec, subject_idx: usize) -> SubjectProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.seed,
        &["synth-subject", &subject_idx.to_string()],
    ));
    let v = spec.subject_variability;
    let nyquist = spec.sample_rate_hz / 2.0;
    let mut bands = [(0.0, 0.0); 3];
    let mut gains = [0.0; 3];
    for (i, p) in spec.profile.iter().enumerate() {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let shift = v * g1;
        let factor = (v / 4.0 * g2).exp();
        let (lo, hi) = p.band_hz;
        let lo_s = (lo + shift).max(0.5);
        let hi_s = (hi + shift).min(nyquist - 0.5);
        bands[i] = if lo_s < hi_s { (lo_s, hi_s) } else { (lo, hi) };
        gains[i] = p.gain * factor;
    }
    SubjectProfile { bands_hz: bands, gains }
}

/// RMS every noise channel is normalized to before oscillations are added.
const NOISE_TARGET_RMS: f64 = 10.0;

/// Sinusoids per state band.
const OSC_COMPONENTS: usize = 5;

/// Per-bin 1/f^alpha noise amplitudes for a given signal length, with
/// cumulative power sums for band-fraction queries.
struct NoiseTable {
    n: usize,
    half: usize,
    has_nyquist: bool,
    sigma: Vec<f64>,
    /// cum[k] = weighted power of bins 1..=k, weight 2 except Nyquist.
    cum: Vec<f64>,
    total: f64,
    bin_hz: f64,
}

impl NoiseTable {
    fn new(n: usize, fs: f64, alpha: f64) -> NoiseTable {
        let has_nyquist = n % 2 == 0;
        let half = n / 2;
        let bin_hz = fs / n as f64;
        let mut sigma = Vec::with_capacity(half);
        let mut cum = vec![0.0; half + 1];
        for k in 1..=half {
            let f = k as f64 * bin_hz;
            let s2 = f.powf(-alpha);
            sigma.push(s2.sqrt());
            let weight = if has_nyquist && k == half { 1.0 } else { 2.0 };
            cum[k] = cum[k - 1] + weight * s2;
        }
        let total = cum[half];
        NoiseTable { n, half, has_nyquist, sigma, cum, total, bin_hz }
    }

    /// Fraction of total noise power carried by bins with lo < f <= hi.
    fn band_fraction(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let idx = |f: f64| -> usize {
            ((f / self.bin_hz).floor().max(0.0) as usize).min(self.half)
        };
        let lo_k = idx(lo_hz);
        let hi_k = idx(hi_hz);
        (self.cum[hi_k] - self.cum[lo_k]) / self.total
    }
}

/// Generate one trial. Background is 1/f^alpha noise shaped in the frequency
/// domain and normalized per channel to a fixed RMS; each state's segment
/// additionally carries a sum of sinusoids spanning the subject's band for
/// that state, with total power `gain` times the noise power in the band.
fn generate_trial(
    spec: &SynthSpec,
    prof: &SubjectProfile,
    subject_idx: usize,
    trial_idx: u32,
    table: &NoiseTable,
    ifft: &std::sync::Arc<dyn rustfft::Fft<f64>>,
) -> RawRecording {
    let n = table.n;
    let fs = spec.sample_rate_hz;
    let num_ch = spec.channels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.seed,
        &["synth-trial", &subject_idx.to_string(), &trial_idx.to_string()],
    ));

    let b10 = (10.0 * 60.0 * fs).round() as usize;
    let b20 = (20.0 * 60.0 * fs).round() as usize;
    let segments = [(0usize, b10.min(n)), (b10.min(n), b20.min(n)), (b20.min(n), n)];

    let mut samples = Array2::<f64>::zeros((n, num_ch));
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    for c in 0..num_ch {
        // Frequency-domain noise draw: Hermitian spectrum, zero DC.
        spectrum[0] = Complex::new(0.0, 0.0);
        for k in 1..=table.half {
            let s = table.sigma[k - 1];
            if table.has_nyquist && k == table.half {
                let g: f64 = rng.sample(StandardNormal);
                spectrum[k] = Complex::new(g * s, 0.0);
            } else {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let v = Complex::new(re * s * inv_sqrt2, im * s * inv_sqrt2);
                spectrum[k] = v;
                spectrum[n - k] = v.conj();
            }
        }
        ifft.process_with_scratch(&mut spectrum, &mut scratch);

        let mut sum_sq = 0.0;
        for v in spectrum.iter() {
            sum_sq += v.re * v.re;
        }
        let rms = (sum_sq / n as f64).sqrt();
        let scale = if rms > 0.0 { NOISE_TARGET_RMS / rms } else { 0.0 };
        for (t, v) in spectrum.iter().enumerate() {
            samples[[t, c]] = v.re * scale;
        }

        // State oscillations on top of the noise.
        for (state, &(start, end)) in segments.iter().enumerate() {
            let (lo, hi) = prof.bands_hz[state];
            let gain = prof.gains[state];
            let band_noise_power =
                table.band_fraction(lo, hi) * NOISE_TARGET_RMS * NOISE_TARGET_RMS;
            let amp = (2.0 * gain * band_noise_power / OSC_COMPONENTS as f64).sqrt();
            let step = (hi - lo) / OSC_COMPONENTS as f64;
            for m in 0..OSC_COMPONENTS {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                if start >= end || amp == 0.0 {
                    continue;
                }
                let f_m = lo + (m as f64 + 0.5) * step;
                let omega = std::f64::consts::TAU * f_m / fs;
                for t in start..end {
                    samples[[t, c]] += amp * (omega * t as f64 + phase).sin();
                }
            }
        }
    }

    RawRecording {
        subject_id: spec.subject_id(subject_idx),
        trial_index: trial_idx,
        sample_rate_hz: fs,
        channel_labels: spec.channels.clone(),
        samples,
    }
}

/// Generate the whole corpus in memory. Deterministic: the same spec yields
/// bit-identical samples. Prefer [`synthesize_corpus`] for large corpora; it
/// streams trials to disk one at a time.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<RawRecording>> {
    spec.validate()?;
    let table = NoiseTable::new(spec.num_samples(), spec.sample_rate_hz, spec.noise_exponent);
    let ifft = FftPlanner::new().plan_fft_inverse(table.n);
    let mut out = Vec::with_capacity(spec.num_subjects * spec.trials_per_subject);
    for s in 0..spec.num_subjects {
        let prof = subject_profile(spec, s);
        for t in 1..=spec.trials_per_subject as u32 {
            out.push(generate_trial(spec, &prof, s, t, &table, &ifft));
        }
    }
    Ok(out)
}

/// Generate a corpus directly to `out_dir/recordings/` plus a manifest at
/// `out_dir/manifest.csv`, holding only one trial in memory at a time.
pub fn synthesize_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let rec_dir = out_dir.join("recordings");
    std::fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let table = NoiseTable::new(spec.num_samples(), spec.sample_rate_hz, spec.noise_exponent);
    let ifft = FftPlanner::new().plan_fft_inverse(table.n);
    let mut entries = Vec::new();
    for s in 0..spec.num_subjects {
        let prof = subject_profile(spec, s);
        for t in 1..=spec.trials_per_subject as u32 {
            let rec = generate_trial(spec, &prof, s, t, &table, &ifft);
            let rel = PathBuf::from("recordings").join(format!("{}_t{:02}.csv", rec.subject_id, t));
            write_recording(&rec, &out_dir.join(&rel))?;
            entries.push(ManifestEntry {
                subject_id: rec.subject_id.clone(),
                trial_index: t,
                path: rel,
                expected_minutes: Some(spec.trial_minutes),
            });
        }
    }
    let manifest = Manifest::from_entries(entries, out_dir.to_path_buf())?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
