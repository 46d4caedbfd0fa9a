//! Scene description: poses, trajectories, audio clips, HRIR sets and the
//! scene configuration document.
//!
//! All coordinates are planar and expressed in the frame of the recording
//! microphone, which sits at the origin. Headings are measured
//! counterclockwise from the +y axis.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::audio::{self, AudioError};
use crate::soundfield::RenderParams;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("referenced path does not exist: {0}")]
    UnresolvedPath(PathBuf),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("invalid HRIR set: {0}")]
    Hrir(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Listener position and facing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListenerPose {
    pub x: f64,
    pub y: f64,
    /// Radians, counterclockwise from +y, in (-pi, pi].
    pub heading: f64,
}

impl ListenerPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn from_degrees(x: f64, y: f64, heading_deg: f64) -> Self {
        Self::new(x, y, heading_deg.to_radians())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

impl Default for ListenerPose {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePoint {
    pub x: f64,
    pub y: f64,
}

impl SourcePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Values that can be blended between two trajectory samples.
pub trait Interpolate: Copy {
    fn interpolate(&self, other: &Self, frac: f64) -> Self;
    fn is_finite(&self) -> bool;
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

impl Interpolate for SourcePoint {
    fn interpolate(&self, other: &Self, frac: f64) -> Self {
        SourcePoint::new(lerp(self.x, other.x, frac), lerp(self.y, other.y, frac))
    }

    fn is_finite(&self) -> bool {
        SourcePoint::is_finite(self)
    }
}

impl Interpolate for ListenerPose {
    /// Positions blend linearly, the heading along the shorter arc.
    fn interpolate(&self, other: &Self, frac: f64) -> Self {
        let delta = wrap_angle(other.heading - self.heading);
        ListenerPose::new(
            lerp(self.x, other.x, frac),
            lerp(self.y, other.y, frac),
            self.heading + delta * frac,
        )
    }

    fn is_finite(&self) -> bool {
        ListenerPose::is_finite(self)
    }
}

/// Timed samples of a pose, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<P> {
    samples: Vec<(f64, P)>,
}

impl<P: Interpolate> Trajectory<P> {
    pub fn new(samples: Vec<(f64, P)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(SceneError::Trajectory("trajectory is empty".into()));
        }
        for (t, p) in &samples {
            if !t.is_finite() || !p.is_finite() {
                return Err(SceneError::Trajectory(format!(
                    "non-finite sample at t={t}"
                )));
            }
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(SceneError::Trajectory(format!(
                "timestamps not strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { samples })
    }

    /// A single-sample trajectory, i.e. a pose that never changes.
    pub fn constant(pose: P) -> Self {
        Self {
            samples: vec![(0.0, pose)],
        }
    }

    pub fn samples(&self) -> &[(f64, P)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pose at time `t`. Clamps outside the sampled interval and returns
    /// the stored pose exactly at sample timestamps.
    pub fn pose_at(&self, t: f64) -> P {
        let s = &self.samples;
        let first = &s[0];
        let last = &s[s.len() - 1];
        if t <= first.0 || t.is_nan() {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        match s.binary_search_by(|(ts, _)| ts.total_cmp(&t)) {
            Ok(i) => s[i].1,
            Err(i) => {
                let (t0, p0) = &s[i - 1];
                let (t1, p1) = &s[i];
                p0.interpolate(p1, (t - t0) / (t1 - t0))
            }
        }
    }
}

/// Free-function form of [`Trajectory::pose_at`].
pub fn pose_at<P: Interpolate>(traj: &Trajectory<P>, t: f64) -> P {
    traj.pose_at(t)
}

/// Multichannel audio held as `f64` samples, one vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn stereo(sample_rate: u32, left: Vec<f64>, right: Vec<f64>) -> Self {
        Self {
            sample_rate,
            channels: vec![left, right],
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.sample_rate == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        if self.channels.is_empty() || self.channels.len() > 2 {
            return Err(AudioError::Invalid(format!(
                "expected 1 or 2 channels, got {}",
                self.channels.len()
            )));
        }
        let n = self.channels[0].len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(AudioError::Invalid("channel lengths differ".into()));
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Average of all channels.
    pub fn to_mono(&self) -> AudioClip {
        if self.channels.len() == 1 {
            return self.clone();
        }
        let k = self.channels.len() as f64;
        let samples = (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / k)
            .collect();
        AudioClip::mono(self.sample_rate, samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrirPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Azimuth-indexed head-related impulse responses.
///
/// Azimuths are degrees in [0, 360): 0 is straight ahead, 90 is the
/// listener's right.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirSet {
    sample_rate: u32,
    /// Sorted by azimuth.
    entries: Vec<(f64, HrirPair)>,
}

impl HrirSet {
    pub fn new(sample_rate: u32, mut entries: Vec<(f64, HrirPair)>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SceneError::Hrir("sample rate must be positive".into()));
        }
        for (az, pair) in &entries {
            if !(0.0..360.0).contains(az) {
                return Err(SceneError::Hrir(format!("azimuth {az} outside [0, 360)")));
            }
            if pair.left.is_empty() || pair.left.len() != pair.right.len() {
                return Err(SceneError::Hrir(format!(
                    "impulse responses at {az} deg are empty or of unequal length"
                )));
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SceneError::Hrir("duplicate azimuth".into()));
        }
        if entries.len() < 2 {
            return Err(SceneError::Hrir(
                "at least two distinct azimuths are required".into(),
            ));
        }
        let len = entries[0].1.left.len();
        if entries.iter().any(|(_, p)| p.left.len() != len) {
            return Err(SceneError::Hrir(
                "all impulse responses must have equal length".into(),
            ));
        }
        Ok(Self {
            sample_rate,
            entries,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn entries(&self) -> &[(f64, HrirPair)] {
        &self.entries
    }

    pub fn hrir_len(&self) -> usize {
        self.entries[0].1.left.len()
    }

    /// Resamples every response to `rate`.
    pub fn resampled(&self, rate: u32) -> HrirSet {
        if rate == self.sample_rate {
            return self.clone();
        }
        let entries = self
            .entries
            .iter()
            .map(|(az, p)| {
                let pair = HrirPair {
                    left: audio::resample(&p.left, self.sample_rate, rate),
                    right: audio::resample(&p.right, self.sample_rate, rate),
                };
                (*az, pair)
            })
            .collect();
        HrirSet {
            sample_rate: rate,
            entries,
        }
    }

    /// Loads a set from a directory holding an `index` document plus WAV
    /// files. The index lists `[[entry]]` tables with `azimuth`, `left` and
    /// `right` keys.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Index {
            entry: Vec<IndexEntry>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct IndexEntry {
            azimuth: f64,
            left: PathBuf,
            right: PathBuf,
        }

        let index_path = dir.join("index");
        let text = read_text(&index_path)?;
        let index: Index = toml::from_str(&text).map_err(|e| SceneError::Schema {
            path: index_path.clone(),
            message: e.message().to_string(),
        })?;

        let mut rate = None;
        let mut entries = Vec::with_capacity(index.entry.len());
        for e in index.entry {
            let mut load = |name: &Path| -> Result<Vec<f64>> {
                let clip = audio::read_wav(&dir.join(name))?;
                if clip.num_channels() != 1 {
                    return Err(SceneError::Hrir(format!(
                        "{} must be mono",
                        name.display()
                    )));
                }
                match rate {
                    None => rate = Some(clip.sample_rate),
                    Some(r) if r != clip.sample_rate => {
                        return Err(SceneError::Hrir(format!(
                            "{} has rate {} but the set uses {r}",
                            name.display(),
                            clip.sample_rate
                        )))
                    }
                    _ => {}
                }
                Ok(clip.channels.into_iter().next().unwrap_or_default())
            };
            let left = load(&e.left)?;
            let right = load(&e.right)?;
            entries.push((e.azimuth.rem_euclid(360.0), HrirPair { left, right }));
        }
        HrirSet::new(rate.unwrap_or(0), entries)
    }
}

/// STFT settings as written in a scene document.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSettings {
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_hop")]
    pub hop: usize,
    #[serde(default)]
    pub fft_len: Option<usize>,
}

fn default_window_len() -> usize {
    1024
}

fn default_hop() -> usize {
    256
}

impl Default for StftSettings {
    fn default() -> Self {
        Self {
            window_len: default_window_len(),
            hop: default_hop(),
            fft_len: None,
        }
    }
}

/// A validated scene document.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub source: Trajectory<SourcePoint>,
    pub listener_default: ListenerPose,
    pub hrir_path: PathBuf,
    pub recording_path: PathBuf,
    pub gain_cap: f64,
    /// Session sample rate; `None` keeps the recording's native rate.
    pub sample_rate: Option<u32>,
    pub stft: StftSettings,
}

impl SceneConfig {
    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            window_len: self.stft.window_len,
            hop: self.stft.hop,
            fft_len: self.stft.fft_len,
            gain_cap: self.gain_cap,
        }
    }
}

/// Non-fatal findings while loading a scene document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigWarning(pub String);

impl std::fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Deserialize)]
struct RawScene {
    recording_path: PathBuf,
    hrir_path: PathBuf,
    #[serde(default = "default_gain_cap")]
    gain_cap: f64,
    #[serde(default)]
    sample_rate: Option<u32>,
    #[serde(default)]
    listener_default: RawListener,
    source: RawSource,
    #[serde(default)]
    stft: StftSettings,
}

fn default_gain_cap() -> f64 {
    4.0
}

#[derive(Deserialize, Default)]
struct RawListener {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    heading_deg: f64,
}

#[derive(Deserialize)]
struct RawSource {
    #[serde(default)]
    samples: Option<Vec<RawSourceSample>>,
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Deserialize)]
struct RawSourceSample {
    #[serde(default)]
    t: f64,
    x: f64,
    y: f64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve(base: &Path, p: &Path) -> Result<PathBuf> {
    let full = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    };
    if full.exists() {
        Ok(full)
    } else {
        Err(SceneError::UnresolvedPath(full))
    }
}

/// Reads and validates a scene document. Relative paths resolve against the
/// document's directory. Unknown keys are reported as warnings.
pub fn load_scene_config(path: &Path) -> Result<(SceneConfig, Vec<ConfigWarning>)> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scene_config(&text, base).map_err(|e| match e {
        SceneError::Schema { message, .. } => SceneError::Schema {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses a scene document held in memory; `base` anchors relative paths.
pub fn parse_scene_config(text: &str, base: &Path) -> Result<(SceneConfig, Vec<ConfigWarning>)> {
    let schema = |message: String| SceneError::Schema {
        path: PathBuf::from("<scene>"),
        message,
    };
    let mut warnings = Vec::new();
    let de = toml::Deserializer::new(text);
    let raw: RawScene = serde_ignored::deserialize(de, |field| {
        warnings.push(ConfigWarning(format!("unknown field `{field}` ignored")));
    })
    .map_err(|e| schema(e.message().to_string()))?;
    for w in &warnings {
        tracing::warn!("{w}");
    }

    if !raw.gain_cap.is_finite() || raw.gain_cap < 1.0 {
        return Err(schema(format!("gain_cap must be >= 1, got {}", raw.gain_cap)));
    }
    if raw.sample_rate == Some(0) {
        return Err(schema("sample_rate must be positive".into()));
    }

    let source = match (raw.source.samples, raw.source.path) {
        (Some(samples), None) => Trajectory::new(
            samples
                .into_iter()
                .map(|s| (s.t, SourcePoint::new(s.x, s.y)))
                .collect(),
        )?,
        (None, Some(p)) => load_source_csv(&resolve(base, &p)?)?,
        _ => {
            return Err(schema(
                "source needs exactly one of `samples` or `path`".into(),
            ))
        }
    };

    let listener_default = ListenerPose::from_degrees(
        raw.listener_default.x,
        raw.listener_default.y,
        raw.listener_default.heading_deg,
    );
    if !listener_default.is_finite() {
        return Err(schema("listener_default must be finite".into()));
    }

    let config = SceneConfig {
        source,
        listener_default,
        hrir_path: resolve(base, &raw.hrir_path)?,
        recording_path: resolve(base, &raw.recording_path)?,
        gain_cap: raw.gain_cap,
        sample_rate: raw.sample_rate,
        stft: raw.stft,
    };
    Ok((config, warnings))
}

#[derive(Deserialize)]
struct CsvRow {
    t: f64,
    x: f64,
    y: f64,
    #[serde(default)]
    heading_deg: Option<f64>,
}

fn read_csv_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<CsvRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> SceneError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => SceneError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => SceneError::Schema {
            path: path.to_path_buf(),
            message: format!("{kind:?}"),
        },
    }
}

/// Reads a `t,x,y` CSV as a source trajectory.
pub fn load_source_csv(path: &Path) -> Result<Trajectory<SourcePoint>> {
    let rows = read_csv_rows(path)?;
    Trajectory::new(
        rows.into_iter()
            .map(|r| (r.t, SourcePoint::new(r.x, r.y)))
            .collect(),
    )
}

/// Reads a `t,x,y[,heading_deg]` CSV as a listener trajectory. Rows without
/// a heading use `default_heading` (radians).
pub fn load_listener_csv(path: &Path, default_heading: f64) -> Result<Trajectory<ListenerPose>> {
    let rows = read_csv_rows(path)?;
    Trajectory::new(
        rows.into_iter()
            .map(|r| {
                let heading = r.heading_deg.map_or(default_heading, f64::to_radians);
                (r.t, ListenerPose::new(r.x, r.y, heading))
            })
            .collect(),
    )
}

/// A scene with its recording and HRIRs loaded at the session rate.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub config: SceneConfig,
    /// Mono recording at `sample_rate`.
    pub recording: AudioClip,
    pub hrirs: HrirSet,
    pub sample_rate: u32,
}

impl LoadedScene {
    /// Loads the referenced audio, downmixing the recording to mono and
    /// resampling everything to the session rate.
    pub fn load(config: SceneConfig) -> Result<Self> {
        let mut recording = audio::read_wav(&config.recording_path)?;
        if recording.num_channels() > 1 {
            tracing::warn!(
                path = %config.recording_path.display(),
                "recording has {} channels; downmixing to mono",
                recording.num_channels()
            );
            recording = recording.to_mono();
        }
        let rate = config.sample_rate.unwrap_or(recording.sample_rate);
        let recording = audio::resample_clip(&recording, rate);
        let hrirs = HrirSet::load_dir(&config.hrir_path)?.resampled(rate);
        Ok(Self {
            config,
            recording,
            hrirs,
            sample_rate: rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[(f64, f64, f64)]) -> Trajectory<SourcePoint> {
        Trajectory::new(
            points
                .iter()
                .map(|&(t, x, y)| (t, SourcePoint::new(x, y)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pose_at_exact_and_midpoint() {
        let tr = traj(&[(0.0, 0.0, 0.0), (1.0, 2.0, 0.0)]);
        assert_eq!(tr.pose_at(0.0), SourcePoint::new(0.0, 0.0));
        assert_eq!(tr.pose_at(0.5), SourcePoint::new(1.0, 0.0));
    }

    #[test]
    fn pose_at_clamps() {
        let tr = traj(&[(1.0, 1.0, 1.0), (2.0, 3.0, 3.0)]);
        assert_eq!(tr.pose_at(-10.0), SourcePoint::new(1.0, 1.0));
        assert_eq!(tr.pose_at(99.0), SourcePoint::new(3.0, 3.0));
    }

    #[test]
    fn heading_takes_short_arc_through_180() {
        let tr = Trajectory::new(vec![
            (0.0, ListenerPose::from_degrees(0.0, 0.0, 170.0)),
            (1.0, ListenerPose::from_degrees(0.0, 0.0, -170.0)),
        ])
        .unwrap();
        let mid = tr.pose_at(0.5).heading;
        // oracle: mean of unit vectors, renormalized
        let (a, b) = (170f64.to_radians(), (-170f64).to_radians());
        let oracle = (a.sin() + b.sin()).atan2(a.cos() + b.cos());
        assert!((wrap_angle(mid - oracle)).abs() < 1e-12);
        assert!((mid.to_degrees() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        assert!(Trajectory::<SourcePoint>::new(vec![]).is_err());
        assert!(Trajectory::new(vec![
            (1.0, SourcePoint::new(0.0, 0.0)),
            (1.0, SourcePoint::new(1.0, 0.0)),
        ])
        .is_err());
        assert!(Trajectory::new(vec![(0.0, SourcePoint::new(f64::NAN, 0.0))]).is_err());
    }

    fn pair(v: f64) -> HrirPair {
        HrirPair {
            left: vec![v; 4],
            right: vec![v; 4],
        }
    }

    #[test]
    fn hrir_set_invariants() {
        assert!(HrirSet::new(48_000, vec![(0.0, pair(1.0))]).is_err());
        assert!(HrirSet::new(48_000, vec![(0.0, pair(1.0)), (0.0, pair(2.0))]).is_err());
        assert!(HrirSet::new(48_000, vec![(0.0, pair(1.0)), (360.0, pair(2.0))]).is_err());
        let set = HrirSet::new(48_000, vec![(90.0, pair(1.0)), (0.0, pair(2.0))]).unwrap();
        assert_eq!(set.entries()[0].0, 0.0);
        assert_eq!(set.hrir_len(), 4);
    }

    fn scene_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("rec.wav"), b"").unwrap();
        fs::create_dir(dir.path().join("hrir")).unwrap();
        dir
    }

    const MINIMAL: &str = r#"
recording_path = "rec.wav"
hrir_path = "hrir"

[source]
samples = [{ t = 0.0, x = 0.0, y = 2.0 }]
"#;

    #[test]
    fn minimal_scene_parses() {
        let dir = scene_dir();
        let (cfg, warnings) = parse_scene_config(MINIMAL, dir.path()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.source.len(), 1);
        assert_eq!(cfg.source.pose_at(3.0), SourcePoint::new(0.0, 2.0));
        assert_eq!(cfg.gain_cap, 4.0);
        assert_eq!(cfg.stft, StftSettings::default());
        assert_eq!(cfg.listener_default, ListenerPose::default());
    }

    #[test]
    fn missing_recording_path_names_field() {
        let dir = scene_dir();
        let text = MINIMAL.replace("recording_path = \"rec.wav\"", "");
        let err = parse_scene_config(&text, dir.path()).unwrap_err();
        assert!(matches!(err, SceneError::Schema { .. }));
        assert!(err.to_string().contains("recording_path"), "{err}");
    }

    #[test]
    fn extra_field_warns_once() {
        let dir = scene_dir();
        let text = format!("comment = \"hello\"\n{MINIMAL}");
        let (_, warnings) = parse_scene_config(&text, dir.path()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].0.contains("comment"));
    }

    #[test]
    fn wrong_type_is_schema_error() {
        let dir = scene_dir();
        let text = format!("gain_cap = \"loud\"\n{MINIMAL}");
        assert!(matches!(
            parse_scene_config(&text, dir.path()),
            Err(SceneError::Schema { .. })
        ));
    }

    #[test]
    fn unresolved_path_is_reported() {
        let dir = scene_dir();
        let text = MINIMAL.replace("rec.wav", "missing.wav");
        assert!(matches!(
            parse_scene_config(&text, dir.path()),
            Err(SceneError::UnresolvedPath(_))
        ));
    }

    #[test]
    fn gain_cap_below_one_rejected() {
        let dir = scene_dir();
        let text = format!("gain_cap = 0.5\n{MINIMAL}");
        assert!(parse_scene_config(&text, dir.path()).is_err());
    }

    #[test]
    fn listener_csv_with_optional_heading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "t,x,y,heading_deg\n0,0,0,90\n1,1,0,\n").unwrap();
        let tr = load_listener_csv(&p, 0.25).unwrap();
        assert!((tr.samples()[0].1.heading - PI / 2.0).abs() < 1e-15);
        assert_eq!(tr.samples()[1].1.heading, 0.25);

        let p2 = dir.path().join("s.csv");
        fs::write(&p2, "t,x,y\n0,0,1\n2,2,1\n").unwrap();
        let s = load_source_csv(&p2).unwrap();
        assert_eq!(s.pose_at(1.0), SourcePoint::new(1.0, 1.0));
    }

    #[test]
    fn missing_csv_is_io_error() {
        assert!(matches!(
            load_source_csv(Path::new("/nonexistent/x.csv")),
            Err(SceneError::Io { .. })
        ));
    }
}
