//! Feature construction on top of spectrograms: frequency binning, causal
//! smoothing, dB conversion, flattening to a feature matrix, and
//! standardization.
//!
//! The pipeline order is bin, smooth, convert to dB, flatten. Standardization
//! is fitted per training split, never on the full matrix.

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::StateLabel;
use crate::spectral::{FreqAxis, Spectrogram};
use crate::util::{fmt_f64, fmt_hz, ContentHash};

/// Added inside the log before dB conversion so empty bins stay finite.
pub const DEFAULT_DB_EPSILON: f64 = 1e-12;

/// Columns whose training standard deviation falls below this are flagged
/// degenerate and passed through unscaled.
pub const STD_FLOOR: f64 = 1e-12;

/// Frequency-band aggregation: bin `b` covers `(f_lo + b*s, f_lo + (b+1)*s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    pub bin_size_hz: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

impl Default for BinningParams {
    fn default() -> Self {
        Self { bin_size_hz: 0.5, f_lo_hz: 0.0, f_hi_hz: 18.0 }
    }
}

impl BinningParams {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidFeatureParams(msg));
        if !(self.bin_size_hz.is_finite() && self.bin_size_hz > 0.0) {
            return err(format!("bin size must be positive, got {}", self.bin_size_hz));
        }
        if !(self.f_lo_hz.is_finite() && self.f_lo_hz >= 0.0) {
            return err(format!("f_lo must be non-negative, got {}", self.f_lo_hz));
        }
        if !(self.f_hi_hz.is_finite() && self.f_hi_hz > self.f_lo_hz) {
            return err(format!(
                "range ({}, {}] Hz is empty",
                self.f_lo_hz, self.f_hi_hz
            ));
        }
        let bands = (self.f_hi_hz - self.f_lo_hz) / self.bin_size_hz;
        if (bands - bands.round()).abs() > 1e-9 {
            return err(format!(
                "({}, {}] Hz is not a whole number of {} Hz bins",
                self.f_lo_hz, self.f_hi_hz, self.bin_size_hz
            ));
        }
        Ok(())
    }

    pub fn num_bands(&self) -> usize {
        ((self.f_hi_hz - self.f_lo_hz) / self.bin_size_hz).round() as usize
    }
}

/// Average raw FFT bins into fixed-width bands.
///
/// Band `b` is the mean of the raw bins whose frequency lies in
/// `(f_lo + b*s, f_lo + (b+1)*s]`; with `f_lo = 0` the DC bin is never
/// included. The bin size must be an integer multiple of the raw spacing.
pub fn bin_frequencies(spec: &Spectrogram, params: &BinningParams) -> Result<Spectrogram> {
    params.validate()?;
    let spacing = match spec.freq_axis {
        FreqAxis::Raw { spacing_hz } => spacing_hz,
        FreqAxis::Binned { .. } => {
            return Err(Error::IncompatibleBinning("spectrogram is already binned".into()))
        }
    };
    let ratio = params.bin_size_hz / spacing;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::IncompatibleBinning(format!(
            "bin size {} Hz is not a multiple of the raw spacing {} Hz",
            params.bin_size_hz, spacing
        )));
    }
    let k = ratio.round() as usize;
    let lo_ratio = params.f_lo_hz / spacing;
    if (lo_ratio - lo_ratio.round()).abs() > 1e-9 {
        return Err(Error::IncompatibleBinning(format!(
            "f_lo {} Hz does not land on a raw bin boundary (spacing {} Hz)",
            params.f_lo_hz, spacing
        )));
    }
    let lo_idx = lo_ratio.round() as usize;
    let bands = params.num_bands();
    let top_idx = lo_idx + bands * k;
    if top_idx > spec.num_bins() - 1 {
        return Err(Error::IncompatibleBinning(format!(
            "f_hi {} Hz exceeds the spectrogram's top frequency {} Hz",
            params.f_hi_hz,
            (spec.num_bins() - 1) as f64 * spacing
        )));
    }

    let frames = spec.num_frames();
    let channels = spec.num_channels();
    let mut power = Array3::zeros((frames, bands, channels));
    for c in 0..channels {
        for b in 0..bands {
            let start = lo_idx + b * k + 1;
            for j in 0..frames {
                let mut acc = 0.0;
                for r in start..start + k {
                    acc += spec.power[[j, r, c]];
                }
                power[[j, b, c]] = acc / k as f64;
            }
        }
    }
    Ok(Spectrogram {
        subject_id: spec.subject_id.clone(),
        trial_index: spec.trial_index,
        channel_labels: spec.channel_labels.clone(),
        power,
        frame_times: spec.frame_times.clone(),
        frame_step_s: spec.frame_step_s,
        freq_axis: FreqAxis::Binned {
            lo_hz: params.f_lo_hz,
            bin_size_hz: params.bin_size_hz,
        },
        labels: spec.labels.clone(),
    })
}

/// Trailing running average over this many seconds of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub span_seconds: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self { span_seconds: 15.0 }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_seconds.is_finite() && self.span_seconds > 0.0) {
            return Err(Error::InvalidFeatureParams(format!(
                "smoothing span must be positive, got {} s",
                self.span_seconds
            )));
        }
        Ok(())
    }
}

/// Window size in frames for a smoothing span, at least 1.
pub fn smoothing_window_frames(span_seconds: f64, frame_step_s: f64) -> usize {
    ((span_seconds / frame_step_s).round() as usize).max(1)
}

/// Causal trailing mean over the last `span` seconds of frames.
///
/// Frame `j` becomes the mean of frames `max(0, j-k+1) ..= j`; early frames
/// average only what exists. The input spectrogram covers one trial, so the
/// average never mixes trials.
pub fn running_average(spec: &Spectrogram, params: &SmoothingParams) -> Result<Spectrogram> {
    params.validate()?;
    let k = smoothing_window_frames(params.span_seconds, spec.frame_step_s);
    let frames = spec.num_frames();
    let mut out = spec.clone();
    if k == 1 || frames == 0 {
        return Ok(out);
    }
    let (_, bins, channels) = (frames, spec.num_bins(), spec.num_channels());
    let mut acc = Array2::<f64>::zeros((bins, channels));
    for j in 0..frames {
        for b in 0..bins {
            for c in 0..channels {
                acc[[b, c]] += spec.power[[j, b, c]];
            }
        }
        if j >= k {
            for b in 0..bins {
                for c in 0..channels {
                    acc[[b, c]] -= spec.power[[j - k, b, c]];
                }
            }
        }
        let count = (j + 1).min(k) as f64;
        for b in 0..bins {
            for c in 0..channels {
                out.power[[j, b, c]] = acc[[b, c]] / count;
            }
        }
    }
    Ok(out)
}

/// `10 log10(p + epsilon)` on every cell.
pub fn to_decibels(spec: &Spectrogram, epsilon: f64) -> Result<Spectrogram> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidFeatureParams(format!(
            "dB epsilon must be positive, got {epsilon}"
        )));
    }
    let mut out = spec.clone();
    out.power.mapv_inplace(|p| 10.0 * (p + epsilon).log10());
    Ok(out)
}

/// Where a feature row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProvenance {
    pub subject_id: String,
    pub trial_index: u32,
    pub frame_time_s: f64,
}

/// Flattened per-frame features with labels and provenance.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// rows x features.
    pub rows: Array2<f64>,
    pub labels: Vec<StateLabel>,
    pub provenance: Vec<FrameProvenance>,
    pub feature_names: Vec<String>,
}

/// Flatten a binned spectrogram to rows of `channels x bands` features,
/// channel-major and frequency-ascending within each channel. Feature names
/// follow `ch:<label>|band:<lo>-<hi>Hz`.
pub fn flatten(spec: &Spectrogram) -> Result<FeatureMatrix> {
    if matches!(spec.freq_axis, FreqAxis::Raw { .. }) {
        return Err(Error::InvalidFeatureParams(
            "flatten expects a frequency-binned spectrogram".into(),
        ));
    }
    let frames = spec.num_frames();
    let bands = spec.num_bins();
    let channels = spec.num_channels();
    let mut feature_names = Vec::with_capacity(channels * bands);
    for ch in &spec.channel_labels {
        for b in 0..bands {
            let (lo, hi) = spec.freq_axis.band(b);
            feature_names.push(format!("ch:{ch}|band:{}-{}Hz", fmt_hz(lo), fmt_hz(hi)));
        }
    }
    let mut rows = Array2::zeros((frames, channels * bands));
    for j in 0..frames {
        for c in 0..channels {
            for b in 0..bands {
                rows[[j, c * bands + b]] = spec.power[[j, b, c]];
            }
        }
    }
    let provenance = spec
        .frame_times
        .iter()
        .map(|&t| FrameProvenance {
            subject_id: spec.subject_id.clone(),
            trial_index: spec.trial_index,
            frame_time_s: t,
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        labels: spec.labels.clone(),
        provenance,
        feature_names,
    })
}

impl FeatureMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.rows.ncols()
    }

    /// Stack matrices rowwise. All parts must agree on feature names.
    pub fn vstack(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::FeatureMismatch("nothing to stack".into()))?;
        let mut labels = Vec::new();
        let mut provenance = Vec::new();
        let mut views = Vec::with_capacity(parts.len());
        for p in parts {
            if p.feature_names != first.feature_names {
                return Err(Error::FeatureMismatch(format!(
                    "feature names differ between {}/{} and {}/{}",
                    first.provenance.first().map(|x| x.subject_id.as_str()).unwrap_or("?"),
                    first.provenance.first().map(|x| x.trial_index).unwrap_or(0),
                    p.provenance.first().map(|x| x.subject_id.as_str()).unwrap_or("?"),
                    p.provenance.first().map(|x| x.trial_index).unwrap_or(0),
                )));
            }
            labels.extend_from_slice(&p.labels);
            provenance.extend_from_slice(&p.provenance);
            views.push(p.rows.view());
        }
        let rows = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::FeatureMismatch(e.to_string()))?;
        Ok(FeatureMatrix {
            rows,
            labels,
            provenance,
            feature_names: first.feature_names.clone(),
        })
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.rows.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Sorted unique subject ids present in the rows.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.provenance {
            if !out.contains(&p.subject_id) {
                out.push(p.subject_id.clone());
            }
        }
        out.sort();
        out
    }

    pub fn label_codes(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.code()).collect()
    }

    /// Content fingerprint over names, data, labels, and provenance.
    pub fn content_hash(&self) -> String {
        let mut h = ContentHash::new();
        for name in &self.feature_names {
            h.update_str(name);
        }
        for l in &self.labels {
            h.update_bytes(&[l.code()]);
        }
        for p in &self.provenance {
            h.update_str(&p.subject_id);
            h.update_u64(p.trial_index as u64);
            h.update_f64(p.frame_time_s);
        }
        for v in self.rows.iter() {
            h.update_f64(*v);
        }
        h.short_hex()
    }

    /// Write as CSV: optional `#` comment lines, a header of feature names
    /// plus `label,subject,trial,frame_time`, then one row per frame. Values
    /// use shortest round-trip formatting.
    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        use std::io::Write as _;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut buf = String::new();
        for c in comments {
            buf.push_str("# ");
            buf.push_str(c);
            buf.push('\n');
        }
        buf.push_str(&self.feature_names.join(","));
        buf.push_str(",label,subject,trial,frame_time\n");
        out.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        for (i, row) in self.rows.rows().into_iter().enumerate() {
            buf.clear();
            for v in row.iter() {
                buf.push_str(&fmt_f64(*v));
                buf.push(',');
            }
            let p = &self.provenance[i];
            buf.push_str(&format!(
                "{},{},{},{}\n",
                self.labels[i].code(),
                p.subject_id,
                p.trial_index,
                fmt_f64(p.frame_time_s)
            ));
            out.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Parse a file written by [`FeatureMatrix::write`]; the round trip is
    /// bit-exact.
    pub fn read(path: &Path) -> Result<FeatureMatrix> {
        let path_str = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let parse_err = |line: usize, msg: String| Error::FeatureFileParse {
            path: path_str.clone(),
            line,
            msg,
        };

        let (header_line, header) = loop {
            match lines.next() {
                None => return Err(parse_err(0, "missing header".into())),
                Some((idx, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    let t = line.trim().to_string();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    break (idx + 1, t);
                }
            }
        };
        let cols: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
        const FIXED: [&str; 4] = ["label", "subject", "trial", "frame_time"];
        if cols.len() < 5 || cols[cols.len() - 4..] != FIXED {
            return Err(parse_err(
                header_line,
                "header must end with label,subject,trial,frame_time".into(),
            ));
        }
        let width = cols.len() - 4;
        let feature_names = cols[..width].to_vec();

        let mut flat = Vec::new();
        let mut labels = Vec::new();
        let mut provenance = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').collect();
            if fields.len() != width + 4 {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, got {}", width + 4, fields.len()),
                ));
            }
            for f in &fields[..width] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad feature value {f:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite feature value {f}")));
                }
                flat.push(v);
            }
            let code: u8 = fields[width]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad label {:?}", fields[width])))?;
            let label = StateLabel::from_code(code)
                .ok_or_else(|| parse_err(line_no, format!("label code {code} out of range")))?;
            labels.push(label);
            let trial: u32 = fields[width + 2]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad trial {:?}", fields[width + 2])))?;
            let time: f64 = fields[width + 3]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad frame time {:?}", fields[width + 3])))?;
            provenance.push(FrameProvenance {
                subject_id: fields[width + 1].to_string(),
                trial_index: trial,
                frame_time_s: time,
            });
        }
        let rows = Array2::from_shape_vec((labels.len(), width), flat)
            .map_err(|e| parse_err(0, e.to_string()))?;
        Ok(FeatureMatrix { rows, labels, provenance, feature_names })
    }
}

/// Per-column standardization statistics, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1.0 where degenerate.
    pub std: Vec<f64>,
    /// Columns whose training std fell below [`STD_FLOOR`].
    pub degenerate: Vec<bool>,
    /// Fingerprint of the matrix the scaler was fitted on.
    pub fitted_on: String,
}

/// Fit column means and population standard deviations.
pub fn fit_scaler(train: &FeatureMatrix) -> Result<Scaler> {
    let n = train.num_rows();
    if n == 0 {
        return Err(Error::EmptyTrainingMatrix);
    }
    let f = train.num_features();
    let mut mean = vec![0.0; f];
    let mut std = vec![0.0; f];
    let mut degenerate = vec![false; f];
    for (j, col) in train.rows.columns().into_iter().enumerate() {
        let m: f64 = col.iter().sum::<f64>() / n as f64;
        let var: f64 = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        mean[j] = m;
        let s = var.sqrt();
        if s < STD_FLOOR {
            std[j] = 1.0;
            degenerate[j] = true;
        } else {
            std[j] = s;
        }
    }
    let flagged = degenerate.iter().filter(|&&d| d).count();
    if flagged > 0 {
        log::warn!("{flagged} of {f} feature columns are constant on the training split");
    }
    Ok(Scaler {
        mean,
        std,
        degenerate,
        fitted_on: train.content_hash(),
    })
}

/// Apply training statistics to any matrix with the same feature layout.
pub fn apply_scaler(scaler: &Scaler, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    if scaler.mean.len() != m.num_features() {
        return Err(Error::FeatureMismatch(format!(
            "scaler fitted on {} features, matrix has {}",
            scaler.mean.len(),
            m.num_features()
        )));
    }
    let mut out = m.clone();
    for (j, mut col) in out.rows.columns_mut().into_iter().enumerate() {
        let (mu, sd) = (scaler.mean[j], scaler.std[j]);
        col.mapv_inplace(|v| (v - mu) / sd);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::TempDir;

    /// Hand-built spectrogram: power[j, b, c] supplied by a closure.
    fn raw_spec(
        frames: usize,
        bins: usize,
        channels: &[&str],
        spacing: f64,
        step: f64,
        fill: impl Fn(usize, usize, usize) -> f64,
    ) -> Spectrogram {
        Spectrogram {
            subject_id: "s1".into(),
            trial_index: 3,
            channel_labels: channels.iter().map(|s| s.to_string()).collect(),
            power: Array3::from_shape_fn((frames, bins, channels.len()), |(j, b, c)| {
                fill(j, b, c)
            }),
            frame_times: (0..frames).map(|j| (j + 1) as f64 * step).collect(),
            frame_step_s: step,
            freq_axis: FreqAxis::Raw { spacing_hz: spacing },
            labels: vec![StateLabel::Focused; frames],
        }
    }

    #[test]
    fn binning_averages_half_open_bands() {
        // Spacing 0.25 Hz, bin 0.5 Hz: band 0 averages raw bins 1 and 2
        // (0.25 and 0.5 Hz), never the DC bin.
        let spec = raw_spec(2, 73, &["Fz"], 0.25, 1.0, |_, b, _| b as f64);
        let params = BinningParams::default();
        let binned = bin_frequencies(&spec, &params).unwrap();
        assert_eq!(binned.num_bins(), 36);
        assert_eq!(binned.power[[0, 0, 0]], 1.5); // mean of raw 1, 2
        assert_eq!(binned.power[[0, 1, 0]], 3.5); // mean of raw 3, 4
        assert_eq!(binned.power[[0, 35, 0]], 71.5); // mean of raw 71, 72 (17.75, 18 Hz)
        assert_eq!(
            binned.freq_axis,
            FreqAxis::Binned { lo_hz: 0.0, bin_size_hz: 0.5 }
        );
    }

    #[test]
    fn binning_band_sums_match_raw_sums() {
        let spec = raw_spec(3, 40, &["a", "b"], 0.5, 1.0, |j, b, c| {
            ((j * 40 + b) as f64).sin().abs() + c as f64
        });
        let params = BinningParams { bin_size_hz: 1.0, f_lo_hz: 2.0, f_hi_hz: 10.0 };
        let binned = bin_frequencies(&spec, &params).unwrap();
        assert_eq!(binned.num_bins(), 8);
        for j in 0..3 {
            for c in 0..2 {
                let band_total: f64 =
                    (0..8).map(|b| binned.power[[j, b, c]] * 2.0).sum();
                let raw_total: f64 = (5..21).map(|r| spec.power[[j, r, c]]).sum();
                assert!((band_total - raw_total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binning_rejects_incompatible_layouts() {
        let spec = raw_spec(1, 20, &["Fz"], 0.3, 1.0, |_, _, _| 1.0);
        assert!(matches!(
            bin_frequencies(&spec, &BinningParams::default()).unwrap_err(),
            Error::IncompatibleBinning(_)
        ));

        // f_hi past the top frequency: 10 bins at 0.5 Hz reach only 4.5 Hz.
        let spec = raw_spec(1, 10, &["Fz"], 0.5, 1.0, |_, _, _| 1.0);
        assert!(matches!(
            bin_frequencies(&spec, &BinningParams::default()).unwrap_err(),
            Error::IncompatibleBinning(_)
        ));

        // Double binning is refused.
        let spec = raw_spec(1, 73, &["Fz"], 0.25, 1.0, |_, _, _| 1.0);
        let once = bin_frequencies(&spec, &BinningParams::default()).unwrap();
        assert!(bin_frequencies(&once, &BinningParams::default()).is_err());

        assert!(BinningParams { bin_size_hz: 0.5, f_lo_hz: 0.0, f_hi_hz: 18.3 }
            .validate()
            .is_err());
    }

    #[test]
    fn running_average_known_sequence() {
        // Frames worth 1..=5, 3-frame window: 1, 1.5, 2, 3, 4.
        let spec = raw_spec(5, 2, &["Fz"], 0.5, 1.0, |j, _, _| (j + 1) as f64);
        let smoothed =
            running_average(&spec, &SmoothingParams { span_seconds: 3.0 }).unwrap();
        let expected = [1.0, 1.5, 2.0, 3.0, 4.0];
        for (j, &e) in expected.iter().enumerate() {
            assert!((smoothed.power[[j, 0, 0]] - e).abs() < 1e-12, "frame {j}");
            assert!((smoothed.power[[j, 1, 0]] - e).abs() < 1e-12, "frame {j}");
        }
    }

    #[test]
    fn constants_pass_through_binning_and_smoothing() {
        let spec = raw_spec(40, 73, &["Fz", "Cz"], 0.25, 1.0, |_, _, _| 7.25);
        let binned = bin_frequencies(&spec, &BinningParams::default()).unwrap();
        assert!(binned.power.iter().all(|&p| (p - 7.25).abs() < 1e-12));
        let smoothed =
            running_average(&binned, &SmoothingParams::default()).unwrap();
        assert!(smoothed.power.iter().all(|&p| (p - 7.25).abs() < 1e-12));
    }

    #[test]
    fn smoothing_window_sizes() {
        // 15 s at 1 s per frame; 15 s at the smallest shift (4 samples at
        // 128 Hz); span shorter than a frame step degrades to identity.
        assert_eq!(smoothing_window_frames(15.0, 1.0), 15);
        assert_eq!(smoothing_window_frames(15.0, 4.0 / 128.0), 480);
        assert_eq!(smoothing_window_frames(15.0, 10.0), 2);
        assert_eq!(smoothing_window_frames(0.2, 1.0), 1);
    }

    #[test]
    fn running_average_matches_direct_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = raw_spec(200, 6, &["a", "b", "c"], 0.5, 0.25, |_, _, _| 0.0);
        let mut spec = spec;
        spec.power.mapv_inplace(|_| rng.random_range(0.0..50.0));
        let params = SmoothingParams { span_seconds: 4.0 };
        let k = smoothing_window_frames(4.0, 0.25);
        assert_eq!(k, 16);
        let smoothed = running_average(&spec, &params).unwrap();
        for j in 0usize..200 {
            let start = j.saturating_sub(k - 1);
            let count = (j - start + 1) as f64;
            for b in 0..6 {
                for c in 0..3 {
                    let direct: f64 =
                        (start..=j).map(|i| spec.power[[i, b, c]]).sum::<f64>() / count;
                    let got = smoothed.power[[j, b, c]];
                    assert!(
                        (got - direct).abs() <= 1e-10 * direct.abs().max(1.0),
                        "frame {j} bin {b} ch {c}: {got} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn decibel_conversion() {
        let spec = raw_spec(1, 3, &["Fz"], 0.5, 1.0, |_, b, _| match b {
            0 => 0.0,
            1 => 1.0,
            _ => 100.0,
        });
        let db = to_decibels(&spec, DEFAULT_DB_EPSILON).unwrap();
        assert!((db.power[[0, 0, 0]] - -120.0).abs() < 1e-12);
        assert!((db.power[[0, 1, 0]] - 0.0).abs() < 1e-9);
        assert!((db.power[[0, 2, 0]] - 20.0).abs() < 1e-9);
        assert!(to_decibels(&spec, 0.0).is_err());
        assert!(to_decibels(&spec, -1.0).is_err());
    }

    fn binned_spec(frames: usize, bands: usize, channels: &[&str]) -> Spectrogram {
        let mut s = raw_spec(frames, bands, channels, 0.5, 1.0, |j, b, c| {
            (j * 100 + c * 10 + b) as f64
        });
        s.freq_axis = FreqAxis::Binned { lo_hz: 0.0, bin_size_hz: 0.5 };
        s
    }

    #[test]
    fn flatten_is_channel_major() {
        let spec = binned_spec(2, 3, &["F3", "Pz"]);
        let m = flatten(&spec).unwrap();
        assert_eq!(m.num_rows(), 2);
        assert_eq!(m.num_features(), 6);
        assert_eq!(
            m.feature_names,
            vec![
                "ch:F3|band:0.0-0.5Hz",
                "ch:F3|band:0.5-1.0Hz",
                "ch:F3|band:1.0-1.5Hz",
                "ch:Pz|band:0.0-0.5Hz",
                "ch:Pz|band:0.5-1.0Hz",
                "ch:Pz|band:1.0-1.5Hz"
            ]
        );
        // Row 1: channel F3 bands then Pz bands.
        assert_eq!(
            m.rows.row(1).to_vec(),
            vec![100.0, 101.0, 102.0, 110.0, 111.0, 112.0]
        );
        assert_eq!(m.provenance[1].frame_time_s, 2.0);
        assert_eq!(m.provenance[1].subject_id, "s1");
    }

    #[test]
    fn flatten_requires_binned_axis() {
        let spec = raw_spec(1, 4, &["Fz"], 0.5, 1.0, |_, _, _| 1.0);
        assert!(flatten(&spec).is_err());
    }

    #[test]
    fn vstack_checks_names_and_preserves_order() {
        let a = flatten(&binned_spec(2, 2, &["F3"])).unwrap();
        let mut b = flatten(&binned_spec(3, 2, &["F3"])).unwrap();
        b.provenance.iter_mut().for_each(|p| p.subject_id = "s2".into());
        let stacked = FeatureMatrix::vstack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(stacked.num_rows(), 5);
        assert_eq!(stacked.subjects(), vec!["s1".to_string(), "s2".to_string()]);
        assert_eq!(stacked.rows.row(0), a.rows.row(0));
        assert_eq!(stacked.rows.row(2), b.rows.row(0));

        let c = flatten(&binned_spec(1, 2, &["F4"])).unwrap();
        assert!(matches!(
            FeatureMatrix::vstack(&[a, c]).unwrap_err(),
            Error::FeatureMismatch(_)
        ));
    }

    #[test]
    fn feature_file_round_trip_is_bit_exact() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("f.features");
        let mut m = flatten(&binned_spec(4, 3, &["Fz", "Cz"])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        m.rows.mapv_inplace(|_| rng.random_range(-1.0..1.0) * 1e-7);
        m.labels = vec![
            StateLabel::Focused,
            StateLabel::Unfocused,
            StateLabel::Drowsy,
            StateLabel::Drowsy,
        ];
        m.write(&path, &["provenance: test".into()]).unwrap();
        let back = FeatureMatrix::read(&path).unwrap();
        assert_eq!(back.feature_names, m.feature_names);
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.provenance, m.provenance);
        assert_eq!(back.rows, m.rows);
        assert_eq!(back.content_hash(), m.content_hash());
    }

    #[test]
    fn feature_file_parse_errors_carry_line_numbers() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.features");
        std::fs::write(&path, "a,b,label,subject,trial,frame_time\n1,2,0,s1,1\n").unwrap();
        let err = FeatureMatrix::read(&path).unwrap_err();
        assert!(matches!(err, Error::FeatureFileParse { line: 2, .. }), "{err}");

        std::fs::write(&path, "a,b,label\n").unwrap();
        assert!(FeatureMatrix::read(&path).is_err());

        std::fs::write(&path, "a,label,subject,trial,frame_time\n1,7,s1,1,2.0\n").unwrap();
        let err = FeatureMatrix::read(&path).unwrap_err();
        assert!(err.to_string().contains("label code 7"), "{err}");
    }

    #[test]
    fn scaler_uses_training_statistics_only() {
        let mut train = flatten(&binned_spec(2, 1, &["Fz", "Cz"])).unwrap();
        train.rows = ndarray::arr2(&[[1.0, 5.0], [3.0, 5.0]]);
        let scaler = fit_scaler(&train).unwrap();
        assert_eq!(scaler.mean, vec![2.0, 5.0]);
        assert_eq!(scaler.std, vec![1.0, 1.0]); // col 1 degenerate, floored
        assert_eq!(scaler.degenerate, vec![false, true]);

        let scaled_train = apply_scaler(&scaler, &train).unwrap();
        assert_eq!(scaled_train.rows, ndarray::arr2(&[[-1.0, 0.0], [1.0, 0.0]]));

        let mut test = train.clone();
        test.rows = ndarray::arr2(&[[5.0, 6.0], [2.0, 5.0]]);
        let scaled_test = apply_scaler(&scaler, &test).unwrap();
        assert_eq!(scaled_test.rows, ndarray::arr2(&[[3.0, 1.0], [0.0, 0.0]]));
    }

    #[test]
    fn scaler_width_mismatch_rejected() {
        let train = flatten(&binned_spec(3, 2, &["Fz"])).unwrap();
        let scaler = fit_scaler(&train).unwrap();
        let other = flatten(&binned_spec(3, 3, &["Fz"])).unwrap();
        assert!(apply_scaler(&scaler, &other).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        // Standardizing the training matrix always yields mean 0 and, for
        // non-degenerate columns, population std 1.
        #[test]
        fn standardized_train_has_zero_mean_unit_std(seed in 0u64..300, rows in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = flatten(&binned_spec(rows, 3, &["Fz"])).unwrap();
            m.rows.mapv_inplace(|_| rng.random_range(-100.0..100.0));
            let scaler = fit_scaler(&m).unwrap();
            let scaled = apply_scaler(&scaler, &m).unwrap();
            for (j, col) in scaled.rows.columns().into_iter().enumerate() {
                let mean: f64 = col.iter().sum::<f64>() / rows as f64;
                prop_assert!(mean.abs() < 1e-9, "col {} mean {}", j, mean);
                if !scaler.degenerate[j] {
                    let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-9, "col {} std {}", j, var.sqrt());
                }
            }
        }
    }
}
