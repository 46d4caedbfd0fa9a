//! Position-dependent binaural rendering of a single mono recording.
//!
//! The recording microphone sits at the origin. For a listener at `l` with
//! heading `theta` and a source at `s`:
//!
//! * the direction of arrival is the angle between `s - l` and the facing
//!   vector `(-sin theta, cos theta)`;
//! * the level relative to the recording is `|s| / |s - l|`;
//! * each STFT frame of the recording is multiplied by that gain and by the
//!   left/right HRTF spectra for the direction of arrival.
//!
//! The unsigned direction angle cannot tell left from right, so the HRIR
//! lookup uses [`signed_azimuth`] (positive to the listener's right).

mod hrtf;
mod render;
mod stream;

pub use hrtf::hrtf_for_azimuth;
pub use render::{render_binaural, BinauralEngine, RenderParams};
pub use stream::StreamRenderer;

use crate::scene::{ListenerPose, SourcePoint};
use crate::stft::StftError;

/// Minimum source-listener distance used in the gain, in meters.
pub const DISTANCE_FLOOR: f64 = 0.05;

/// Default ceiling on the distance gain (+12 dB).
pub const DEFAULT_GAIN_CAP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SoundfieldError {
    #[error("source and listener coincide; direction is undefined")]
    DegenerateGeometry,
    #[error("expected a mono recording, got {0} channels")]
    NotMono(usize),
    #[error("HRIR rate {hrir} Hz differs from recording rate {audio} Hz")]
    SampleRateMismatch { hrir: u32, audio: u32 },
    #[error("invalid render parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Stft(#[from] StftError),
}

pub type Result<T, E = SoundfieldError> = std::result::Result<T, E>;

fn offset(listener: &ListenerPose, source: &SourcePoint) -> Result<(f64, f64)> {
    let v = (source.x - listener.x, source.y - listener.y);
    if v.0 == 0.0 && v.1 == 0.0 {
        return Err(SoundfieldError::DegenerateGeometry);
    }
    Ok(v)
}

/// Components of the source offset along the listener's facing and right
/// directions.
fn forward_right(listener: &ListenerPose, source: &SourcePoint) -> Result<(f64, f64)> {
    let (vx, vy) = offset(listener, source)?;
    let (sin, cos) = listener.heading.sin_cos();
    let forward = -sin * vx + cos * vy;
    let right = cos * vx + sin * vy;
    Ok((forward, right))
}

/// Unsigned angle in `[0, pi]` between the facing direction and the source.
///
/// Equal to `acos(v1 . v2 / (|v1| |v2|))`, evaluated through `atan2` to stay
/// accurate near 0 and pi.
pub fn direction_angle(listener: &ListenerPose, source: &SourcePoint) -> Result<f64> {
    let (forward, right) = forward_right(listener, source)?;
    Ok(right.abs().atan2(forward))
}

/// Azimuth of the source in degrees, in (-180, 180], positive to the right.
pub fn signed_azimuth(listener: &ListenerPose, source: &SourcePoint) -> Result<f64> {
    let (forward, right) = forward_right(listener, source)?;
    let az = right.atan2(forward).to_degrees();
    Ok(if az <= -180.0 { az + 360.0 } else { az })
}

/// Distance gain `|s| / max(|s - l|, DISTANCE_FLOOR)`, clamped to
/// `[0, gain_cap]`.
pub fn distance_gain(listener: &ListenerPose, source: &SourcePoint, gain_cap: f64) -> f64 {
    let to_mic = source.x.hypot(source.y);
    if to_mic == 0.0 {
        tracing::warn!("source at the microphone position; rendering silence");
        return 0.0;
    }
    let to_listener = (source.x - listener.x).hypot(source.y - listener.y);
    (to_mic / to_listener.max(DISTANCE_FLOOR)).clamp(0.0, gain_cap)
}

/// Direction and gain for one STFT frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    /// Radians in `[0, pi]`.
    pub theta_s: f64,
    /// Degrees in (-180, 180].
    pub azimuth_signed: f64,
    pub lambda: f64,
}

impl FramePose {
    /// When the listener stands exactly on the source the direction falls
    /// back to straight ahead; the gain is then `gain_cap`.
    pub fn compute(listener: &ListenerPose, source: &SourcePoint, gain_cap: f64) -> Self {
        let lambda = distance_gain(listener, source, gain_cap);
        match signed_azimuth(listener, source) {
            Ok(az) => FramePose {
                theta_s: az.abs().to_radians(),
                azimuth_signed: az,
                lambda,
            },
            Err(_) => FramePose {
                theta_s: 0.0,
                azimuth_signed: 0.0,
                lambda,
            },
        }
    }

    /// Azimuth on the HRIR grid convention, in [0, 360).
    pub fn grid_azimuth(&self) -> f64 {
        let a = self.azimuth_signed.rem_euclid(360.0);
        if a >= 360.0 {
            0.0
        } else {
            a
        }
    }
}
