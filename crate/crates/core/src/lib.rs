//! Listener-position dependent binaural rendering from a single mono
//! recording, plus the supporting tools for multi-view captures: affine
//! color harmonization between cameras, stream alignment and capture
//! density.

pub mod audio;
pub mod capture;
pub mod colormap;
pub mod scene;
pub mod session;
pub mod soundfield;
pub mod stft;

pub use scene::{
    AudioClip, HrirPair, HrirSet, ListenerPose, LoadedScene, SceneConfig, SourcePoint, Trajectory,
};
pub use soundfield::{render_binaural, RenderParams, StreamRenderer};
