//! Hann-windowed short-time Fourier transform and window-sum normalized
//! overlap-add inverse.
//!
//! Frames start at multiples of `hop`; frame `k` covers samples
//! `[k * hop, k * hop + window_len)`, zero-padded to `fft_len` before the
//! transform. The inverse adds every full `fft_len` frame back at its start
//! position and divides by the running sum of analysis windows, so that
//! spectral products with short filters come out as linear convolutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::scene::AudioClip;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StftError {
    #[error("expected a mono clip, got {0} channels")]
    NotMono(usize),
    #[error("invalid STFT parameters: {0}")]
    InvalidParams(String),
    #[error("window {window_len} with hop {hop} does not satisfy constant overlap-add")]
    NotCola { window_len: usize, hop: usize },
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Number of frames for a signal of `len` samples, the last one zero-padded.
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if len <= window_len {
        1
    } else {
        (len - window_len).div_ceil(hop) + 1
    }
}

fn check_params(window_len: usize, hop: usize, fft_len: usize) -> Result<(), StftError> {
    if window_len < 2 || hop == 0 {
        return Err(StftError::InvalidParams(format!(
            "window_len {window_len} and hop {hop} must be positive"
        )));
    }
    if hop > window_len {
        return Err(StftError::InvalidParams(format!(
            "hop {hop} exceeds window_len {window_len}"
        )));
    }
    if fft_len < window_len {
        return Err(StftError::InvalidParams(format!(
            "fft_len {fft_len} shorter than window_len {window_len}"
        )));
    }
    // The periodic Hann window overlap-adds to a constant iff the hop
    // divides the window into at least two pieces.
    if !window_len.is_multiple_of(hop) || window_len / hop < 2 {
        return Err(StftError::NotCola { window_len, hop });
    }
    Ok(())
}

/// Precomputed window and FFT plans for one parameter set.
#[derive(Clone)]
pub struct StftPlan {
    window_len: usize,
    hop: usize,
    fft_len: usize,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftPlan")
            .field("window_len", &self.window_len)
            .field("hop", &self.hop)
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl StftPlan {
    pub fn new(window_len: usize, hop: usize, fft_len: usize) -> Result<Self, StftError> {
        check_params(window_len, hop, fft_len)?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            window_len,
            hop,
            fft_len,
            window: hann(window_len),
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windowed, zero-padded spectrum of `samples` (shorter input is
    /// zero-extended).
    pub fn analyze(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![0.0; self.fft_len];
        for ((b, s), w) in buf.iter_mut().zip(samples).zip(&self.window) {
            *b = s * w;
        }
        self.forward_fft(&mut buf)
    }

    /// Plain real FFT of a buffer already `fft_len` long (or shorter,
    /// zero-extended), without windowing.
    pub fn spectrum_of(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![0.0; self.fft_len];
        let n = samples.len().min(self.fft_len);
        buf[..n].copy_from_slice(&samples[..n]);
        self.forward_fft(&mut buf)
    }

    fn forward_fft(&self, buf: &mut [f64]) -> Vec<Complex64> {
        let mut out = self.forward.make_output_vec();
        self.forward
            .process(buf, &mut out)
            .expect("buffer lengths match the plan");
        out
    }

    /// Inverse transform scaled so that `synthesize(analyze(x))` returns the
    /// windowed frame. Consumes the spectrum as scratch.
    pub fn synthesize(&self, spectrum: &mut [Complex64]) -> Vec<f64> {
        // a real signal's DC and Nyquist bins are real
        spectrum[0].im = 0.0;
        let last = spectrum.len() - 1;
        spectrum[last].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(spectrum, &mut out)
            .expect("buffer lengths match the plan");
        let scale = 1.0 / self.fft_len as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// Sum of analysis windows covering a sample at offset `residue` within
    /// a hop, once every overlapping frame is present.
    pub fn full_window_sum(&self, residue: usize) -> f64 {
        let mut acc = 0.0;
        let mut off = residue + self.window_len - self.hop;
        loop {
            acc += self.window[off];
            if off < self.hop {
                break;
            }
            off -= self.hop;
        }
        acc
    }
}

/// Complex STFT frames of a mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `frames[t][f]`, `fft_len / 2 + 1` bins per frame.
    pub frames: Vec<Vec<Complex64>>,
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub sample_rate: u32,
    /// Length of the analyzed signal in samples.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Forward STFT of a mono clip.
pub fn stft(
    clip: &AudioClip,
    window_len: usize,
    hop: usize,
    fft_len: usize,
) -> Result<Spectrogram, StftError> {
    if clip.num_channels() != 1 {
        return Err(StftError::NotMono(clip.num_channels()));
    }
    let plan = StftPlan::new(window_len, hop, fft_len)?;
    Ok(stft_with_plan(&plan, &clip.channels[0], clip.sample_rate))
}

pub fn stft_with_plan(plan: &StftPlan, signal: &[f64], sample_rate: u32) -> Spectrogram {
    let n_frames = frame_count(signal.len(), plan.window_len, plan.hop);
    let frames = (0..n_frames)
        .map(|k| {
            let start = (k * plan.hop).min(signal.len());
            let end = (start + plan.window_len).min(signal.len());
            plan.analyze(&signal[start..end])
        })
        .collect();
    Spectrogram {
        frames,
        window_len: plan.window_len,
        hop: plan.hop,
        fft_len: plan.fft_len,
        sample_rate,
        signal_len: signal.len(),
    }
}

/// Overlap-add inverse of [`stft`], returning `signal_len` samples.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip, StftError> {
    let plan = StftPlan::new(spec.window_len, spec.hop, spec.fft_len)?;
    istft_with_plan(&plan, spec)
}

pub fn istft_with_plan(plan: &StftPlan, spec: &Spectrogram) -> Result<AudioClip, StftError> {
    if spec.frames.iter().any(|f| f.len() != plan.bins()) {
        return Err(StftError::InvalidParams(format!(
            "frames must have {} bins",
            plan.bins()
        )));
    }
    let total = spec.frames.len().saturating_sub(1) * plan.hop + plan.fft_len;
    let mut out = vec![0.0; total.max(spec.signal_len)];
    let mut wsum = vec![0.0; out.len()];
    let mut scratch = Vec::with_capacity(plan.bins());
    for (k, frame) in spec.frames.iter().enumerate() {
        scratch.clear();
        scratch.extend_from_slice(frame);
        let time = plan.synthesize(&mut scratch);
        let start = k * plan.hop;
        for (o, v) in out[start..].iter_mut().zip(&time) {
            *o += v;
        }
        for (s, w) in wsum[start..].iter_mut().zip(&plan.window) {
            *s += w;
        }
    }
    out.truncate(spec.signal_len);
    for (o, s) in out.iter_mut().zip(&wsum) {
        if *s > 1e-10 {
            *o /= s;
        }
    }
    Ok(AudioClip::mono(spec.sample_rate, out))
}
