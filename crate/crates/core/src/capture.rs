//! Multi-stream alignment on a shared world clock, refined by cross
//! correlation, and the swept-volume capture density of a camera rig.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::Deserialize;

use crate::audio::{read_wav, resample, AudioError};
use crate::scene::AudioClip;

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("no streams given")]
    Empty,
    #[error("stream id `{0}` appears more than once")]
    DuplicateStream(String),
    #[error("invalid stream header `{id}`: {message}")]
    InvalidHeader { id: String, message: String },
    #[error("clips overlap by {overlap_secs:.3} s after coarse alignment, need at least 1 s")]
    InsufficientOverlap { overlap_secs: f64 },
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("clip is not mono")]
    NotMono,
    #[error("invalid rig sweep: {0}")]
    InvalidSweep(String),
    #[error("rig sweep has zero duration")]
    ZeroDuration,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = CaptureError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub stream_id: String,
    /// Seconds on the shared world clock.
    pub start_time: f64,
    pub sample_rate: u32,
}

impl StreamHeader {
    pub fn new(stream_id: impl Into<String>, start_time: f64, sample_rate: u32) -> Self {
        Self {
            stream_id: stream_id.into(),
            start_time,
            sample_rate,
        }
    }
}

/// Start offset of every stream relative to the earliest one, in samples
/// at `session_rate`, rounded to the nearest sample.
pub fn timecode_offsets(headers: &[StreamHeader], session_rate: u32) -> Result<BTreeMap<String, i64>> {
    if headers.is_empty() {
        return Err(CaptureError::Empty);
    }
    let mut seen = HashSet::new();
    for h in headers {
        if !seen.insert(h.stream_id.as_str()) {
            return Err(CaptureError::DuplicateStream(h.stream_id.clone()));
        }
        let bad = |message: &str| CaptureError::InvalidHeader {
            id: h.stream_id.clone(),
            message: message.into(),
        };
        if h.sample_rate == 0 {
            return Err(bad("sample_rate must be positive"));
        }
        if !h.start_time.is_finite() {
            return Err(bad("start_time must be finite"));
        }
    }
    let earliest = headers
        .iter()
        .map(|h| h.start_time)
        .fold(f64::INFINITY, f64::min);
    Ok(headers
        .iter()
        .map(|h| {
            let off = ((h.start_time - earliest) * f64::from(session_rate)).round() as i64;
            (h.stream_id.clone(), off)
        })
        .collect())
}

fn mono_samples(clip: &AudioClip) -> Result<&[f64]> {
    match clip.channels.as_slice() {
        [ch] => Ok(ch),
        _ => Err(CaptureError::NotMono),
    }
}

/// Estimates the integer delay `k` with `other[n] ~ reference[n - k]`.
///
/// `coarse` is the prior estimate; only lags within `coarse ± search` are
/// considered. Uses the phase-transform weighted cross correlation over
/// the span where both clips overlap once shifted by `coarse`, which must
/// be at least one second long. Ties go to the lag closest to `coarse`.
pub fn xcorr_refine(reference: &AudioClip, other: &AudioClip, coarse: i64, search: u64) -> Result<i64> {
    if reference.sample_rate != other.sample_rate {
        return Err(CaptureError::SampleRateMismatch(
            reference.sample_rate,
            other.sample_rate,
        ));
    }
    let x = mono_samples(reference)?;
    let y = mono_samples(other)?;
    let search = search as i64;

    // reference span [n0, n1) whose coarse-shifted partner lies inside `other`
    let n0 = (-coarse).max(0);
    let n1 = (x.len() as i64).min(y.len() as i64 - coarse);
    let overlap = (n1 - n0).max(0);
    if overlap < i64::from(reference.sample_rate) {
        return Err(CaptureError::InsufficientOverlap {
            overlap_secs: overlap as f64 / f64::from(reference.sample_rate),
        });
    }
    let a = &x[n0 as usize..n1 as usize];
    // partner span widened by the search radius so every candidate lag sees
    // the full reference span where data exists
    let b_start = (n0 + coarse - search).max(0);
    let b_end = (n1 + coarse + search).min(y.len() as i64);
    let b = &y[b_start as usize..b_end as usize];

    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |s: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..s.len()].copy_from_slice(s);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("buffer sizes match the plan");
        out
    };
    let fa = spectrum(a);
    let fb = spectrum(b);
    let mut cross: Vec<Complex64> = fa
        .iter()
        .zip(&fb)
        .map(|(p, q)| {
            let c = p.conj() * q;
            let mag = c.norm();
            if mag > 1e-300 {
                c / mag
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    cross[0].im = 0.0;
    cross[n / 2].im = 0.0;
    let mut corr = inv.make_output_vec();
    inv.process(&mut cross, &mut corr).expect("buffer sizes match the plan");

    // corr[m] = sum_i a[i] b[i + m], circularly; lag k pairs reference[i]
    // with other[i + k], i.e. m = n0 + k - b_start
    let at = |d: i64| {
        let m = n0 + coarse + d - b_start;
        corr[m.rem_euclid(n as i64) as usize]
    };
    let mut best = (0, at(0));
    for mag in 1..=search {
        for d in [mag, -mag] {
            let v = at(d);
            if v > best.1 {
                best = (d, v);
            }
        }
    }
    Ok(coarse + best.0)
}

/// Rig cylinder of `radius` and `height` carried along a timed planar path.
#[derive(Debug, Clone, PartialEq)]
pub struct RigSweep {
    pub radius: f64,
    pub height: f64,
    /// `(t, x, y)` samples with strictly increasing `t`.
    pub path: Vec<(f64, f64, f64)>,
}

impl RigSweep {
    pub fn new(radius: f64, height: f64, path: Vec<(f64, f64, f64)>) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !(height > 0.0 && height.is_finite()) {
            return Err(CaptureError::InvalidSweep(format!(
                "radius and height must be positive, got r={radius}, h={height}"
            )));
        }
        if path.is_empty() {
            return Err(CaptureError::InvalidSweep("empty path".into()));
        }
        if path.iter().any(|(t, x, y)| !(t.is_finite() && x.is_finite() && y.is_finite())) {
            return Err(CaptureError::InvalidSweep("non-finite path sample".into()));
        }
        if path.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(CaptureError::InvalidSweep(
                "path timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            radius,
            height,
            path,
        })
    }

    /// A rig that stays put for `duration` seconds.
    pub fn stationary(radius: f64, height: f64, duration: f64) -> Result<Self> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(CaptureError::InvalidSweep(format!("invalid duration {duration}")));
        }
        let path = if duration > 0.0 {
            vec![(0.0, 0.0, 0.0), (duration, 0.0, 0.0)]
        } else {
            vec![(0.0, 0.0, 0.0)]
        };
        Self::new(radius, height, path)
    }

    pub fn duration(&self) -> f64 {
        self.path.last().map_or(0.0, |l| l.0) - self.path.first().map_or(0.0, |f| f.0)
    }

    pub fn path_length(&self) -> f64 {
        self.path
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).hypot(w[1].2 - w[0].2))
            .sum()
    }

    /// Reads `t,x,y` rows (with header) as the rig path.
    pub fn load_path_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            x: f64,
            y: f64,
        }
        let format = |message: String| CaptureError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => CaptureError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => format(format!("{other:?}")),
            })?;
        reader
            .deserialize::<Row>()
            .map(|r| r.map(|r| (r.t, r.x, r.y)).map_err(|e| format(e.to_string())))
            .collect()
    }
}

/// Swept volume per second: `h (pi r^2 + 2 r L) / duration`, with `L` the
/// path length. Self-overlap of the swept tube is not subtracted.
pub fn capture_density(sweep: &RigSweep) -> Result<f64> {
    let duration = sweep.duration();
    if duration <= 0.0 {
        return Err(CaptureError::ZeroDuration);
    }
    let (r, h) = (sweep.radius, sweep.height);
    let area = std::f64::consts::PI * r * r + 2.0 * r * sweep.path_length();
    Ok(h * area / duration)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestStream {
    pub header: StreamHeader,
    pub wav: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Rate offsets are expressed in; defaults to the first stream's rate.
    pub session_rate: u32,
    pub streams: Vec<ManifestStream>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    session_rate: Option<u32>,
    stream: Vec<StreamEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamEntry {
    id: String,
    start_time: f64,
    sample_rate: u32,
    wav: Option<PathBuf>,
}

impl Manifest {
    /// Parses `[[stream]]` tables with `id`, `start_time`, `sample_rate` and
    /// an optional `wav`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| CaptureError::Format {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let Some(first) = file.stream.first() else {
            return Err(CaptureError::Empty);
        };
        let session_rate = file.session_rate.unwrap_or(first.sample_rate);
        if session_rate == 0 {
            return Err(CaptureError::Format {
                path: origin.to_path_buf(),
                message: "session_rate must be positive".into(),
            });
        }
        let streams = file
            .stream
            .into_iter()
            .map(|e| ManifestStream {
                header: StreamHeader::new(e.id, e.start_time, e.sample_rate),
                wav: e.wav.map(|p| base.join(p)),
            })
            .collect();
        Ok(Self {
            session_rate,
            streams,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CaptureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), path)
    }

    pub fn headers(&self) -> Vec<StreamHeader> {
        self.streams.iter().map(|s| s.header.clone()).collect()
    }
}

/// One line of the alignment report: how many samples (at the session
/// rate) after the earliest stream this stream starts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRow {
    pub stream_id: String,
    pub offset_samples: i64,
    pub offset_ms: f64,
}

/// Timecode offsets for every stream in `manifest`, optionally refined by
/// cross correlation against the earliest stream within `±search` samples.
/// Refinement needs a `wav` for every stream; pairs run in parallel.
pub fn align_manifest(manifest: &Manifest, refine_search: Option<u64>) -> Result<Vec<AlignmentRow>> {
    let headers = manifest.headers();
    let rate = manifest.session_rate;
    let mut offsets = timecode_offsets(&headers, rate)?;

    if let Some(search) = refine_search {
        let clips = manifest
            .streams
            .iter()
            .map(|s| {
                let path = s.wav.as_ref().ok_or_else(|| CaptureError::InvalidHeader {
                    id: s.header.stream_id.clone(),
                    message: "refinement needs a wav path".into(),
                })?;
                let clip = read_wav(path)?.to_mono();
                if clip.sample_rate != s.header.sample_rate {
                    tracing::warn!(
                        stream = %s.header.stream_id,
                        "wav rate {} differs from manifest rate {}",
                        clip.sample_rate,
                        s.header.sample_rate
                    );
                }
                let samples = resample(&clip.channels[0], clip.sample_rate, rate);
                Ok(AudioClip::mono(rate, samples))
            })
            .collect::<Result<Vec<_>>>()?;
        let ref_idx = headers
            .iter()
            .position(|h| offsets[&h.stream_id] == 0)
            .expect("the earliest stream has offset 0");

        let refined: Vec<Result<(String, i64)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = headers
                .iter()
                .zip(&clips)
                .enumerate()
                .filter(|(i, _)| *i != ref_idx)
                .map(|(_, (h, clip))| {
                    let coarse = offsets[&h.stream_id];
                    let reference = &clips[ref_idx];
                    scope.spawn(move || {
                        // a stream starting `o` samples late holds reference[n + o]
                        let k = xcorr_refine(reference, clip, -coarse, search)?;
                        Ok((h.stream_id.clone(), -k))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("alignment thread panicked"))
                .collect()
        });
        for r in refined {
            let (id, off) = r?;
            offsets.insert(id, off);
        }
    }

    Ok(headers
        .iter()
        .map(|h| {
            let off = offsets[&h.stream_id];
            AlignmentRow {
                stream_id: h.stream_id.clone(),
                offset_samples: off,
                offset_ms: off as f64 * 1000.0 / f64::from(rate),
            }
        })
        .collect())
}

/// `stream_id,offset_samples,offset_ms` with a header line.
pub fn alignment_csv(rows: &[AlignmentRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stream_id", "offset_samples", "offset_ms"])
        .expect("writing to memory");
    for r in rows {
        w.write_record([
            r.stream_id.clone(),
            r.offset_samples.to_string(),
            format!("{:.3}", r.offset_ms),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}
