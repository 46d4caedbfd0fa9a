//! WAV I/O and sample-rate conversion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::scene::AudioClip;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported WAV format ({format})")]
    Unsupported { path: PathBuf, format: String },
    #[error("invalid audio: {0}")]
    Invalid(String),
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> AudioError + '_ {
    move |source| AudioError::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads PCM 16/24-bit or 32-bit float WAV into `[-1, 1]` samples.
pub fn read_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1_i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
        (fmt, bits) => {
            return Err(AudioError::Unsupported {
                path: path.to_path_buf(),
                format: format!("{fmt:?} {bits}-bit"),
            })
        }
    };
    let n_ch = spec.channels as usize;
    if !(1..=2).contains(&n_ch) {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            format: format!("{n_ch} channels"),
        });
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, s) in channels.iter_mut().zip(frame) {
            c.push(*s);
        }
    }
    Ok(AudioClip {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes 32-bit float WAV.
pub fn write_wav_f32(path: &Path, clip: &AudioClip) -> Result<(), AudioError> {
    clip.validate()?;
    let spec = WavSpec {
        channels: clip.num_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..clip.len() {
        for ch in &clip.channels {
            writer.write_sample(ch[i] as f32).map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

/// Writes 16-bit PCM WAV, clipping to `[-1, 1]`.
pub fn write_wav_i16(path: &Path, clip: &AudioClip) -> Result<(), AudioError> {
    clip.validate()?;
    let spec = WavSpec {
        channels: clip.num_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..clip.len() {
        for ch in &clip.channels {
            let v = (ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

/// Zero crossings of the sinc kernel on each side, at the lower of the two
/// Nyquist rates.
const SINC_ZEROS: f64 = 32.0;

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let u = 0.5 * (x + 1.0);
    0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos()
}

/// Windowed-sinc sample-rate conversion of a single channel.
pub fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0);
    let half = SINC_ZEROS / cutoff;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 / ratio;
            let lo = (pos - half).ceil().max(0.0) as usize;
            let hi = ((pos + half).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = pos - k as f64;
                let arg = cutoff * d;
                let sinc = if arg == 0.0 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                acc += x * cutoff * sinc * blackman(d / half);
            }
            acc
        })
        .collect()
}

pub fn resample_clip(clip: &AudioClip, to: u32) -> AudioClip {
    if clip.sample_rate == to {
        return clip.clone();
    }
    AudioClip {
        sample_rate: to,
        channels: clip
            .channels
            .iter()
            .map(|c| resample(c, clip.sample_rate, to))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let clip = AudioClip::stereo(44_100, vec![0.5, -0.25, 0.0], vec![1.0, -1.0, 0.125]);
        write_wav_f32(&p, &clip).unwrap();
        assert_eq!(read_wav(&p).unwrap(), clip);
    }

    #[test]
    fn pcm16_reads_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav_i16(&p, &AudioClip::mono(8000, vec![0.5, -1.0])).unwrap();
        let back = read_wav(&p).unwrap();
        assert!((back.channels[0][0] - 16384.0 / 32768.0).abs() < 1e-9);
        assert!((back.channels[0][1] + 32767.0 / 32768.0).abs() < 1e-9);
    }

    #[test]
    fn pcm24_reads_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(1 << 22).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_wav(&p).unwrap().channels[0], vec![0.5]);
    }

    #[test]
    fn missing_file_errors() {
        assert!(read_wav(Path::new("/nonexistent.wav")).is_err());
    }

    #[test]
    fn resample_preserves_low_frequency_sine() {
        let (from, to) = (44_100, 48_000);
        let f = 440.0;
        let x: Vec<f64> = (0..from)
            .map(|n| (2.0 * PI * f * n as f64 / from as f64).sin())
            .collect();
        let y = resample(&x, from, to);
        assert_eq!(y.len(), to as usize);
        // skip kernel-length edges
        let max_err = (2000..y.len() - 2000)
            .map(|n| (y[n] - (2.0 * PI * f * n as f64 / to as f64).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-3, "{max_err}");
    }

    #[test]
    fn downsampling_rejects_content_above_new_nyquist() {
        let (from, to) = (48_000, 16_000);
        let x: Vec<f64> = (0..from)
            .map(|n| (2.0 * PI * 12_000.0 * n as f64 / from as f64).sin())
            .collect();
        let y = resample(&x, from, to);
        let rms = (y[1000..y.len() - 1000].iter().map(|v| v * v).sum::<f64>()
            / (y.len() - 2000) as f64)
            .sqrt();
        assert!(rms < 1e-2, "{rms}");
    }
}
