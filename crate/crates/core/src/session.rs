//! Interactive rendering sessions: a renderer that produces fixed-size
//! binaural chunks while listener poses arrive through a single-slot
//! mailbox.

use std::sync::{Arc, Mutex};

use crate::scene::{HrirSet, ListenerPose, LoadedScene, SourcePoint, Trajectory};
use crate::soundfield::{RenderParams, SoundfieldError, StreamRenderer};

pub const DEFAULT_CHUNK_LEN: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session is closed")]
    Closed,
    #[error("end of stream")]
    EndOfStream,
    #[error("chunk length {chunk_len} is not a positive multiple of the hop {hop}")]
    InvalidChunkLen { chunk_len: usize, hop: usize },
    #[error("pose or client time is not finite")]
    InvalidPose,
    #[error(transparent)]
    Render(#[from] SoundfieldError),
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Everything a session renders from; cheap to clone, shared between
/// sessions of the same scene.
#[derive(Debug, Clone)]
pub struct SessionSource {
    pub signal: Arc<[f64]>,
    pub sample_rate: u32,
    pub source: Arc<Trajectory<SourcePoint>>,
    pub hrirs: Arc<HrirSet>,
    pub params: RenderParams,
    pub listener_default: ListenerPose,
}

impl SessionSource {
    pub fn from_scene(scene: &LoadedScene) -> Self {
        Self {
            signal: scene.recording.channels[0].clone().into(),
            sample_rate: scene.sample_rate,
            source: Arc::new(scene.config.source.clone()),
            hrirs: Arc::new(scene.hrirs.clone()),
            params: scene.config.render_params(),
            listener_default: scene.config.listener_default,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseAck {
    Accepted,
    /// Older than an update already accepted; ignored.
    Stale,
}

impl PoseAck {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseAck::Accepted => "accepted",
            PoseAck::Stale => "stale",
        }
    }
}

#[derive(Debug, Default)]
struct Slot {
    pending: Option<ListenerPose>,
    last_client_time: Option<f64>,
    closed: bool,
}

/// Producer side of a session's pose mailbox. Clone freely; the newest
/// accepted pose overwrites any pose not yet consumed.
#[derive(Debug, Clone, Default)]
pub struct PoseMailbox(Arc<Mutex<Slot>>);

impl PoseMailbox {
    pub fn update(&self, pose: ListenerPose, client_time: f64) -> Result<PoseAck> {
        if !pose.is_finite() || !client_time.is_finite() {
            return Err(SessionError::InvalidPose);
        }
        let mut slot = self.0.lock().expect("mailbox lock poisoned");
        if slot.closed {
            return Err(SessionError::Closed);
        }
        if slot.last_client_time.is_some_and(|t| client_time < t) {
            return Ok(PoseAck::Stale);
        }
        slot.last_client_time = Some(client_time);
        slot.pending = Some(pose);
        Ok(PoseAck::Accepted)
    }

    pub fn close(&self) {
        self.0.lock().expect("mailbox lock poisoned").closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.0.lock().expect("mailbox lock poisoned").closed
    }

    fn take(&self) -> Result<Option<ListenerPose>> {
        let mut slot = self.0.lock().expect("mailbox lock poisoned");
        if slot.closed {
            return Err(SessionError::Closed);
        }
        Ok(slot.pending.take())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub seq: u64,
    /// Stereo frames in this chunk.
    pub frames: usize,
    /// Pose held for the whole chunk.
    pub pose: ListenerPose,
    /// Interleaved left/right.
    pub samples: Vec<f32>,
}

impl Chunk {
    /// Little-endian 32-bit float, interleaved.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

/// Pose that took effect starting with chunk `seq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLogEntry {
    pub seq: u64,
    pub pose: ListenerPose,
}

/// One listener's render loop. Poses apply at chunk granularity.
#[derive(Debug)]
pub struct Session {
    renderer: StreamRenderer,
    mailbox: PoseMailbox,
    current: ListenerPose,
    chunk_len: usize,
    seq: u64,
    log: Vec<PoseLogEntry>,
}

impl Session {
    pub fn new(src: &SessionSource, chunk_len: usize) -> Result<Self> {
        let hop = src.params.hop;
        if chunk_len == 0 || hop == 0 || !chunk_len.is_multiple_of(hop) {
            return Err(SessionError::InvalidChunkLen { chunk_len, hop });
        }
        let renderer = StreamRenderer::new(
            src.signal.clone(),
            src.sample_rate,
            src.source.clone(),
            src.hrirs.clone(),
            src.params,
        )?;
        Ok(Self {
            renderer,
            mailbox: PoseMailbox::default(),
            current: src.listener_default,
            chunk_len,
            seq: 0,
            log: Vec::new(),
        })
    }

    pub fn mailbox(&self) -> PoseMailbox {
        self.mailbox.clone()
    }

    pub fn update_pose(&self, pose: ListenerPose, client_time: f64) -> Result<PoseAck> {
        self.mailbox.update(pose, client_time)
    }

    pub fn close(&self) {
        self.mailbox.close();
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn current_pose(&self) -> ListenerPose {
        self.current
    }

    /// Output samples produced so far.
    pub fn playhead(&self) -> usize {
        self.renderer.position()
    }

    /// Poses consumed so far, in the order they took effect.
    pub fn pose_log(&self) -> &[PoseLogEntry] {
        &self.log
    }

    fn render_next(&mut self) -> Result<Chunk> {
        if self.renderer.remaining() == 0 {
            return Err(SessionError::EndOfStream);
        }
        let (l, r) = self.renderer.render(self.chunk_len, &self.current);
        let samples = l
            .iter()
            .zip(&r)
            .flat_map(|(a, b)| [*a as f32, *b as f32])
            .collect();
        let chunk = Chunk {
            seq: self.seq,
            frames: l.len(),
            pose: self.current,
            samples,
        };
        self.seq += 1;
        Ok(chunk)
    }

    /// Renders the next chunk with the newest mailbox pose held fixed. The
    /// final chunk may be shorter; after it, `EndOfStream`.
    pub fn next_chunk(&mut self) -> Result<Chunk> {
        if let Some(pose) = self.mailbox.take()? {
            self.current = pose;
            self.log.push(PoseLogEntry {
                seq: self.seq,
                pose,
            });
        }
        self.render_next()
    }

    /// Re-renders a session from its pose log; the result is bit-identical
    /// to the original chunk stream.
    pub fn replay(src: &SessionSource, chunk_len: usize, log: &[PoseLogEntry]) -> Result<Vec<Chunk>> {
        let mut s = Session::new(src, chunk_len)?;
        let mut entries = log.iter().peekable();
        let mut out = Vec::new();
        loop {
            while let Some(e) = entries.next_if(|e| e.seq <= s.seq) {
                s.current = e.pose;
            }
            match s.render_next() {
                Ok(c) => out.push(c),
                Err(SessionError::EndOfStream) => return Ok(out),
                Err(e) => return Err(e),
            }
        }
    }
}
