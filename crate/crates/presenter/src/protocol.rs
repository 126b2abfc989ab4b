//! Session transport messages. One JSON object per websocket text message
//! or log line, discriminated by `type`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use magboard_core::mapper::InteractionCommand;
use magboard_core::recognizer::UserActionEvent;
use magboard_core::tracking::{parse_frame, serialize_frame, ObservationFrame};
use magboard_core::viz::{StateDiff, VizState};

pub const SCHEMA_VERSION: u32 = 1;

/// Error codes carried by `error` messages.
pub mod codes {
    pub const PROTOCOL: &str = "protocol";
    pub const SCHEMA_VERSION: &str = "schema-version";
    pub const PRODUCER_TAKEN: &str = "producer-taken";
    pub const FORBIDDEN: &str = "forbidden";
    pub const STALE_FRAME: &str = "stale-frame";
    pub const LAGGED: &str = "lagged";
    pub const RECOGNIZER: &str = "recognizer";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Sends tracking frames. At most one per session.
    Producer,
    /// Receives state messages.
    Consumer,
    /// Receives state plus action and command messages.
    Debug,
}

impl Role {
    pub fn from_path(path: &str) -> Option<Role> {
        match path.trim_end_matches('/') {
            "" | "/consumer" => Some(Role::Consumer),
            "/producer" => Some(Role::Producer),
            "/debug" => Some(Role::Debug),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatePayload {
    Snapshot(Box<VizState>),
    Diff(Box<StateDiff>),
}

impl StatePayload {
    pub fn revision(&self) -> u64 {
        match self {
            StatePayload::Snapshot(s) => s.revision,
            StatePayload::Diff(d) => d.revision,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionMessage {
    Hello(Hello),
    Frame(ObservationFrame),
    Action(UserActionEvent),
    Command(InteractionCommand),
    State(StatePayload),
    Error { code: String, detail: String },
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum WireOut<'a> {
    Hello(&'a Hello),
    Action {
        action: &'a UserActionEvent,
    },
    Command {
        command: &'a InteractionCommand,
    },
    State {
        revision: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        snapshot: Option<&'a VizState>,
        #[serde(skip_serializing_if = "Option::is_none")]
        diff: Option<&'a StateDiff>,
    },
    Error {
        code: &'a str,
        detail: &'a str,
    },
}

fn field<T: serde::de::DeserializeOwned>(v: &mut Value, key: &str) -> Result<T, ProtocolError> {
    let inner = v.get_mut(key).map(Value::take).ok_or_else(|| ProtocolError::Malformed(format!("missing `{key}`")))?;
    serde_json::from_value(inner).map_err(|e| ProtocolError::Malformed(format!("`{key}`: {e}")))
}

impl SessionMessage {
    pub fn hello(story_id: &str, role: Role) -> Self {
        SessionMessage::Hello(Hello {
            schema_version: SCHEMA_VERSION,
            story_id: Some(story_id.to_string()),
            role: Some(role),
        })
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        SessionMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            SessionMessage::Hello(_) => "hello",
            SessionMessage::Frame(_) => "frame",
            SessionMessage::Action(_) => "action",
            SessionMessage::Command(_) => "command",
            SessionMessage::State(_) => "state",
            SessionMessage::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        let wire = match self {
            SessionMessage::Frame(f) => return format!("{{\"type\":\"frame\",\"frame\":{}}}", serialize_frame(f)),
            SessionMessage::Hello(h) => WireOut::Hello(h),
            SessionMessage::Action(action) => WireOut::Action { action },
            SessionMessage::Command(command) => WireOut::Command { command },
            SessionMessage::State(p) => WireOut::State {
                revision: p.revision(),
                snapshot: match p {
                    StatePayload::Snapshot(s) => Some(s),
                    StatePayload::Diff(_) => None,
                },
                diff: match p {
                    StatePayload::Diff(d) => Some(d),
                    StatePayload::Snapshot(_) => None,
                },
            },
            SessionMessage::Error { code, detail } => WireOut::Error { code, detail },
        };
        serde_json::to_string(&wire).expect("session messages serialize")
    }

    /// Parses one message. A bare frame record without `type` is accepted as
    /// a frame so that producers can stream a frames file unchanged.
    pub fn parse(text: &str) -> Result<SessionMessage, ProtocolError> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if !v.is_object() {
            return Err(ProtocolError::Malformed("expected a JSON object".into()));
        }
        let Some(ty) = v.get("type").cloned() else {
            return parse_frame(text).map(SessionMessage::Frame).map_err(|e| ProtocolError::Malformed(e.to_string()));
        };
        let ty = ty.as_str().ok_or_else(|| ProtocolError::Malformed("`type` must be a string".into()))?;
        Ok(match ty {
            "hello" => {
                v.as_object_mut().expect("object").remove("type");
                SessionMessage::Hello(serde_json::from_value(v).map_err(|e| ProtocolError::Malformed(e.to_string()))?)
            }
            "frame" => {
                let raw = v.get("frame").ok_or_else(|| ProtocolError::Malformed("missing `frame`".into()))?;
                SessionMessage::Frame(parse_frame(&raw.to_string()).map_err(|e| ProtocolError::Malformed(e.to_string()))?)
            }
            "action" => SessionMessage::Action(field(&mut v, "action")?),
            "command" => SessionMessage::Command(field(&mut v, "command")?),
            "state" => {
                let revision: u64 = field(&mut v, "revision")?;
                let payload = match (v.get("snapshot").is_some(), v.get("diff").is_some()) {
                    (true, false) => StatePayload::Snapshot(Box::new(field(&mut v, "snapshot")?)),
                    (false, true) => StatePayload::Diff(Box::new(field(&mut v, "diff")?)),
                    _ => return Err(ProtocolError::Malformed("state needs exactly one of `snapshot`, `diff`".into())),
                };
                if payload.revision() != revision {
                    return Err(ProtocolError::Malformed(format!(
                        "revision {revision} disagrees with payload revision {}",
                        payload.revision()
                    )));
                }
                SessionMessage::State(payload)
            }
            "error" => SessionMessage::Error {
                code: field(&mut v, "code")?,
                detail: field(&mut v, "detail")?,
            },
            other => return Err(ProtocolError::UnknownType(other.to_string())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_round_trips() {
        let m = SessionMessage::hello("wwi", Role::Debug);
        let line = m.to_line();
        assert_eq!(line, r#"{"type":"hello","schema_version":1,"story_id":"wwi","role":"debug"}"#);
        assert_eq!(SessionMessage::parse(&line).unwrap(), m);
    }

    #[test]
    fn bare_frame_is_a_frame() {
        let m = SessionMessage::parse(r#"{"t_ms":5,"markers":[],"hands":[]}"#).unwrap();
        assert_eq!(m, SessionMessage::Frame(ObservationFrame::empty(5)));
        assert_eq!(SessionMessage::parse(&m.to_line()).unwrap(), m);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(SessionMessage::parse("[1]"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(SessionMessage::parse(r#"{"type":"nope"}"#), Err(ProtocolError::UnknownType(_))));
        assert!(SessionMessage::parse(r#"{"type":"state","revision":1}"#).is_err());
    }
}
