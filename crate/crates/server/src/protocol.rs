//! JSON shapes exchanged with browser clients.

use serde::{Deserialize, Serialize};

/// Messages a client sends over the session socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Pose {
        x: f64,
        y: f64,
        heading_deg: f64,
        /// Client clock, seconds; older updates than the newest accepted
        /// one are ignored.
        client_time: f64,
    },
}

/// Text messages the server sends over the session socket. Every `chunk`
/// message is immediately followed by one binary frame holding `frames`
/// interleaved stereo samples as little-endian `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Ready {
        session_id: String,
        sample_rate: u32,
        chunk_len: usize,
        channels: u16,
    },
    Chunk {
        seq: u64,
        frames: usize,
    },
    Ack {
        client_time: f64,
        /// `accepted` or `stale`.
        status: String,
    },
    Error {
        message: String,
    },
    Eos {
        chunks: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseBody {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub id: String,
    pub gain_cap: f64,
    pub listener_default: PoseBody,
    pub source: Vec<SourceSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneList {
    pub scenes: Vec<SceneSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub scene_id: String,
    #[serde(default)]
    pub chunk_len: Option<usize>,
    /// Pose for the first chunk; the scene default otherwise.
    #[serde(default)]
    pub pose: Option<PoseBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub socket_url: String,
    pub sample_rate: u32,
    pub chunk_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_shapes() {
        let pose: ClientMessage = serde_json::from_value(
            json!({"type": "pose", "x": 1.0, "y": -2.0, "heading_deg": 30.0, "client_time": 0.5}),
        )
        .unwrap();
        assert_eq!(
            pose,
            ClientMessage::Pose {
                x: 1.0,
                y: -2.0,
                heading_deg: 30.0,
                client_time: 0.5
            }
        );
        assert_eq!(
            serde_json::to_value(ServerMessage::Chunk { seq: 3, frames: 4096 }).unwrap(),
            json!({"type": "chunk", "seq": 3, "frames": 4096})
        );
        assert_eq!(
            serde_json::to_value(ServerMessage::Eos { chunks: 7 }).unwrap(),
            json!({"type": "eos", "chunks": 7})
        );
        assert!(serde_json::from_value::<ClientMessage>(json!({"type": "jump"})).is_err());
    }
}
