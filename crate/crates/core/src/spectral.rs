//! Short-time spectral analysis: Blackman window, windowed power spectra,
//! and per-trial spectrograms.
//!
//! Power is normalized as a one-sided spectral density: `|X_b|^2 / (fs * sum
//! w^2)`, doubled for every bin except DC and Nyquist. Summing `P_b * df`
//! over bins recovers the mean squared value of the windowed frame divided by
//! the window energy, which keeps amplitudes comparable across window
//! lengths.

use std::ops::RangeInclusive;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{LabeledRecording, StateLabel};

/// Window length bounds, seconds.
pub const W_L_RANGE: RangeInclusive<f64> = 2.0..=60.0;

/// Window shift bounds, samples.
pub const W_S_RANGE: RangeInclusive<usize> = 4..=1280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WindowFn {
    #[default]
    Blackman,
}

/// Symmetric Blackman window of length `n`:
/// `w[k] = 0.42 - 0.5 cos(2 pi k / (n-1)) + 0.08 cos(4 pi k / (n-1))`.
pub fn blackman_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidStftParams(format!(
            "window needs at least 2 samples, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let x = k as f64 / denom;
            0.42 - 0.5 * (std::f64::consts::TAU * x).cos()
                + 0.08 * (2.0 * std::f64::consts::TAU * x).cos()
        })
        .collect())
}

/// STFT geometry: window length in seconds, shift in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub w_l_seconds: f64,
    pub w_s_samples: usize,
    pub sample_rate_hz: f64,
    pub window: WindowFn,
}

impl StftParams {
    pub fn new(w_l_seconds: f64, w_s_samples: usize, sample_rate_hz: f64) -> Result<StftParams> {
        let p = StftParams {
            w_l_seconds,
            w_s_samples,
            sample_rate_hz,
            window: WindowFn::Blackman,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidStftParams(msg));
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return err(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if !W_L_RANGE.contains(&self.w_l_seconds) {
            return err(format!(
                "window length {} s outside [{}, {}] s",
                self.w_l_seconds,
                W_L_RANGE.start(),
                W_L_RANGE.end()
            ));
        }
        if !W_S_RANGE.contains(&self.w_s_samples) {
            return err(format!(
                "window shift {} samples outside [{}, {}]",
                self.w_s_samples,
                W_S_RANGE.start(),
                W_S_RANGE.end()
            ));
        }
        let exact = self.w_l_seconds * self.sample_rate_hz;
        if (exact - exact.round()).abs() > 1e-9 || exact.round() < 2.0 {
            return err(format!(
                "window length {} s at {} Hz is not a whole number of samples",
                self.w_l_seconds, self.sample_rate_hz
            ));
        }
        if self.w_s_samples > exact.round() as usize {
            return err(format!(
                "window shift {} exceeds the window of {} samples",
                self.w_s_samples,
                exact.round() as usize
            ));
        }
        Ok(())
    }

    /// Window length in samples.
    pub fn window_len(&self) -> usize {
        (self.w_l_seconds * self.sample_rate_hz).round() as usize
    }

    /// One-sided bin count, DC through Nyquist.
    pub fn num_bins(&self) -> usize {
        self.window_len() / 2 + 1
    }

    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.window_len() as f64
    }

    /// Frames that fit entirely inside a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> Result<usize> {
        let window = self.window_len();
        if len < window {
            return Err(Error::SignalTooShort { len, window });
        }
        Ok((len - window) / self.w_s_samples + 1)
    }
}

/// Power spectra of one signal: frames x bins, with the end time of each
/// frame in seconds.
#[derive(Debug, Clone)]
pub struct StftOutput {
    pub power: Array2<f64>,
    pub frame_times: Vec<f64>,
}

/// Windowed one-sided power spectral density per frame. Frame `j` covers
/// samples `[j*w_S, j*w_S + N)`; its time stamp is the end of that span.
pub fn stft_power(signal: &[f64], params: &StftParams) -> Result<StftOutput> {
    params.validate()?;
    let window = params.window_len();
    let frames = params.num_frames(signal.len())?;
    let win = blackman_window(window)?;
    let fft = FftPlanner::new().plan_fft_forward(window);
    stft_power_with(signal, params, &win, &fft, frames)
}

fn stft_power_with(
    signal: &[f64],
    params: &StftParams,
    win: &[f64],
    fft: &std::sync::Arc<dyn rustfft::Fft<f64>>,
    frames: usize,
) -> Result<StftOutput> {
    let window = win.len();
    let bins = window / 2 + 1;
    let fs = params.sample_rate_hz;
    let win_energy: f64 = win.iter().map(|w| w * w).sum();
    let norm = 1.0 / (fs * win_energy);
    let nyquist_bin = if window % 2 == 0 { Some(window / 2) } else { None };

    let mut power = Array2::zeros((frames, bins));
    let mut frame_times = Vec::with_capacity(frames);
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for j in 0..frames {
        let start = j * params.w_s_samples;
        for (t, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(signal[start + t] * win[t], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for b in 0..bins {
            let mut p = buf[b].norm_sqr() * norm;
            if b != 0 && Some(b) != nyquist_bin {
                p *= 2.0;
            }
            power[[j, b]] = p;
        }
        frame_times.push((start + window) as f64 / fs);
    }
    Ok(StftOutput { power, frame_times })
}

/// Frequency layout of a spectrogram's bin axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FreqAxis {
    /// Direct FFT bins: bin `b` sits at `b * spacing_hz`.
    Raw { spacing_hz: f64 },
    /// Aggregated bands: bin `b` covers `(lo + b*size, lo + (b+1)*size]`.
    Binned { lo_hz: f64, bin_size_hz: f64 },
}

impl FreqAxis {
    /// Band edges of bin `b`. Raw bins are points, returned as a zero-width
    /// band at the bin frequency.
    pub fn band(&self, b: usize) -> (f64, f64) {
        match *self {
            FreqAxis::Raw { spacing_hz } => {
                let f = b as f64 * spacing_hz;
                (f, f)
            }
            FreqAxis::Binned { lo_hz, bin_size_hz } => (
                lo_hz + b as f64 * bin_size_hz,
                lo_hz + (b + 1) as f64 * bin_size_hz,
            ),
        }
    }
}

/// Per-trial time-frequency power with one label per frame.
///
/// The frame axis never crosses trial boundaries, so any smoothing over it
/// stays within a single trial.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub subject_id: String,
    pub trial_index: u32,
    pub channel_labels: Vec<String>,
    /// frames x bins x channels.
    pub power: Array3<f64>,
    /// Frame end times, seconds from trial start.
    pub frame_times: Vec<f64>,
    /// Seconds between consecutive frames.
    pub frame_step_s: f64,
    pub freq_axis: FreqAxis,
    /// Label of each frame: the state of the frame's final sample.
    pub labels: Vec<StateLabel>,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.power.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.power.shape()[1]
    }

    pub fn num_channels(&self) -> usize {
        self.power.shape()[2]
    }
}

/// STFT of every channel of a labeled recording. Frame labels come from the
/// last sample each frame covers.
pub fn spectrogram(rec: &LabeledRecording, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    if rec.sample_rate_hz != params.sample_rate_hz {
        return Err(Error::InvalidStftParams(format!(
            "params expect {} Hz but the recording is {} Hz",
            params.sample_rate_hz, rec.sample_rate_hz
        )));
    }
    let window = params.window_len();
    let frames = params.num_frames(rec.num_samples())?;
    let win = blackman_window(window)?;
    let fft = FftPlanner::new().plan_fft_forward(window);

    let mut power = Array3::zeros((frames, window / 2 + 1, rec.num_channels()));
    let mut frame_times = Vec::new();
    for c in 0..rec.num_channels() {
        let signal: Vec<f64> = rec.samples.column(c).to_vec();
        let out = stft_power_with(&signal, params, &win, &fft, frames)?;
        power
            .slice_mut(ndarray::s![.., .., c])
            .assign(&out.power);
        if c == 0 {
            frame_times = out.frame_times;
        }
    }
    let labels = (0..frames)
        .map(|j| rec.labels[j * params.w_s_samples + window - 1])
        .collect();
    Ok(Spectrogram {
        subject_id: rec.subject_id.clone(),
        trial_index: rec.trial_index,
        channel_labels: rec.channel_labels.clone(),
        power,
        frame_times,
        frame_step_s: params.w_s_samples as f64 / params.sample_rate_hz,
        freq_axis: FreqAxis::Raw { spacing_hz: params.bin_spacing_hz() },
        labels,
    })
}
