//! JSON text messages exchanged with UI clients.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use mibci::realtime::{Command, SourceSpec, SyntheticSource};
use mibci::signal::ClassLabel;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Command {
        /// +1 left, -1 right.
        label: ClassLabel,
        decision: f64,
        frame: u64,
        t: DateTime<Utc>,
    },
    Telemetry {
        fps: f64,
        cps: f64,
        /// Latest decision value, if any command has been emitted.
        decision: Option<f64>,
        dropped: u64,
        paused: bool,
    },
    /// Acknowledges control messages and reports source changes.
    Status {
        state: StreamState,
        source: String,
        class: String,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamState {
    Running,
    Paused,
    Ended,
}

impl ServerMessage {
    pub fn command(c: &Command) -> Self {
        ServerMessage::Command {
            label: c.label,
            decision: c.decision_value,
            frame: c.frame_index,
            t: c.t,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            message: message.into(),
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    SetClass(ClassLabel),
    SetSource(SourceSpec),
    Pause,
    Resume,
}

/// How an incoming text frame was understood.
#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Message(ClientMessage),
    /// Well-formed but unusable (unknown type, bad argument): reply, keep the client.
    Rejected(String),
    /// Not a protocol message at all: the client is dropped.
    Violation(String),
}

#[derive(Deserialize)]
struct SetClass {
    class: String,
}

#[derive(Deserialize)]
struct SetSource {
    kind: String,
    path: Option<PathBuf>,
    speed: Option<f64>,
    addr: Option<String>,
}

pub fn parse_client(text: &str) -> Parsed {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Parsed::Violation(format!("not JSON: {e}")),
    };
    let Some(kind) = value.get("type").and_then(Value::as_str) else {
        return Parsed::Violation("message needs a string `type` field".into());
    };
    let kind = kind.to_string();
    match kind.as_str() {
        "pause" => Parsed::Message(ClientMessage::Pause),
        "resume" => Parsed::Message(ClientMessage::Resume),
        "set_class" => match serde_json::from_value::<SetClass>(value) {
            Ok(m) => match m.class.parse::<ClassLabel>() {
                Ok(c) => Parsed::Message(ClientMessage::SetClass(c)),
                Err(_) => Parsed::Rejected(format!("unknown class `{}` (left or right)", m.class)),
            },
            Err(e) => Parsed::Rejected(format!("set_class: {e}")),
        },
        "set_source" => match serde_json::from_value::<SetSource>(value) {
            Ok(m) => source_spec(m).map_or_else(Parsed::Rejected, |s| Parsed::Message(ClientMessage::SetSource(s))),
            Err(e) => Parsed::Rejected(format!("set_source: {e}")),
        },
        other => Parsed::Rejected(format!("unknown message type `{other}`")),
    }
}

fn source_spec(m: SetSource) -> Result<SourceSpec, String> {
    match m.kind.as_str() {
        "replay" => {
            let path = m.path.ok_or("replay source needs `path`")?;
            let speed = m.speed.unwrap_or(1.0);
            if speed.is_nan() || speed <= 0.0 {
                return Err(format!("speed must be positive, got {speed}"));
            }
            Ok(SourceSpec::Replay { path, speed })
        }
        "synthetic" => Ok(SourceSpec::Synthetic {
            config: SyntheticSource::live_config(),
        }),
        "listener" => Ok(SourceSpec::Listener {
            addr: m.addr.ok_or("listener source needs `addr`")?,
        }),
        other => Err(format!("unknown source kind `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_wire_shape() {
        let t: DateTime<Utc> = "2024-01-02T03:04:05Z".parse().unwrap();
        let m = ServerMessage::Command {
            label: ClassLabel::Left,
            decision: 0.83,
            frame: 241,
            t,
        };
        let v: Value = serde_json::from_str(&m.to_text()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"type":"command","label":1,"decision":0.83,"frame":241,"t":"2024-01-02T03:04:05Z"})
        );
        let v: Value = serde_json::from_str(
            &ServerMessage::Telemetry {
                fps: 10.0,
                cps: 10.0,
                decision: None,
                dropped: 0,
                paused: false,
            }
            .to_text(),
        )
        .unwrap();
        assert_eq!(v["type"], "telemetry");
        assert_eq!(v["fps"], 10.0);
    }

    #[test]
    fn client_messages() {
        assert_eq!(
            parse_client(r#"{"type":"set_class","class":"right","extra":1}"#),
            Parsed::Message(ClientMessage::SetClass(ClassLabel::Right))
        );
        assert_eq!(parse_client(r#"{"type":"pause"}"#), Parsed::Message(ClientMessage::Pause));
        assert_eq!(
            parse_client(r#"{"type":"set_source","kind":"replay","path":"s.csv"}"#),
            Parsed::Message(ClientMessage::SetSource(SourceSpec::Replay {
                path: "s.csv".into(),
                speed: 1.0
            }))
        );
        assert!(matches!(parse_client(r#"{"type":"jump"}"#), Parsed::Rejected(_)));
        assert!(matches!(parse_client(r#"{"type":"set_class","class":"up"}"#), Parsed::Rejected(_)));
        assert!(matches!(parse_client(r#"{"type":"set_source","kind":"replay"}"#), Parsed::Rejected(_)));
        assert!(matches!(parse_client("hello"), Parsed::Violation(_)));
        assert!(matches!(parse_client(r#"{"kind":"x"}"#), Parsed::Violation(_)));
    }
}
