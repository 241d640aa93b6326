//! JSON messages exchanged with live clients of `ftl serve`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    Auto,
    Teleop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    PedInput { turn: i8, speed: f64 },
    Teleop { steering: f64, throttle: f64 },
    Mode { value: DriveMode },
    Record {
        action: RecordAction,
        #[serde(default)]
        path: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub steering: f64,
    pub throttle: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McnView {
    pub p_present: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        tick: u64,
        av: AvView,
        ped: Option<PedView>,
        mcn: McnView,
    },
    /// Confirms a record start/stop.
    Recording {
        active: bool,
        path: String,
        frames: u64,
    },
    Error { detail: String },
}

impl ServerMessage {
    pub fn error(detail: impl Into<String>) -> Self {
        ServerMessage::Error { detail: detail.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parse and range-check one client message.
pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(text.trim()).map_err(|e| e.to_string())?;
    match &msg {
        ClientMessage::PedInput { turn, speed } => {
            if !(-1..=1).contains(turn) {
                return Err(format!("turn must be -1, 0 or 1, got {turn}"));
            }
            if !(0.0..=1.2).contains(speed) {
                return Err(format!("speed must be in [0, 1.2], got {speed}"));
            }
        }
        ClientMessage::Teleop { steering, throttle } => {
            if !(-100.0..=100.0).contains(steering) || !(0.0..=100.0).contains(throttle) {
                return Err(format!("teleop command ({steering}, {throttle}) out of range"));
            }
        }
        ClientMessage::Record { action: RecordAction::Start, path: None } => {
            return Err("record start needs a path".into());
        }
        _ => {}
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_client_message() {
        assert_eq!(
            parse_client(r#"{"type":"ped_input","turn":-1,"speed":0.8}"#),
            Ok(ClientMessage::PedInput { turn: -1, speed: 0.8 })
        );
        assert_eq!(
            parse_client(r#"{"type":"teleop","steering":-40,"throttle":25}"#),
            Ok(ClientMessage::Teleop { steering: -40.0, throttle: 25.0 })
        );
        assert_eq!(parse_client(r#"{"type":"mode","value":"teleop"}"#), Ok(ClientMessage::Mode { value: DriveMode::Teleop }));
        assert_eq!(
            parse_client(r#"{"type":"record","action":"start","path":"/tmp/x.ftllog"}"#),
            Ok(ClientMessage::Record {
                action: RecordAction::Start,
                path: Some("/tmp/x.ftllog".into())
            })
        );
        assert_eq!(
            parse_client(r#"{"type":"record","action":"stop"}"#),
            Ok(ClientMessage::Record { action: RecordAction::Stop, path: None })
        );
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(parse_client(r#"{"type":"dance"}"#).is_err());
        assert!(parse_client("not json").is_err());
        assert!(parse_client(r#"{"type":"ped_input","turn":2,"speed":0.5}"#).is_err());
        assert!(parse_client(r#"{"type":"ped_input","turn":0,"speed":1.5}"#).is_err());
        assert!(parse_client(r#"{"type":"teleop","steering":-140,"throttle":0}"#).is_err());
        assert!(parse_client(r#"{"type":"mode","value":"warp"}"#).is_err());
        assert!(parse_client(r#"{"type":"record","action":"start"}"#).is_err());
    }

    #[test]
    fn state_message_shape() {
        let m = ServerMessage::State {
            tick: 3,
            av: AvView {
                x: 0.0,
                y: 1.0,
                heading: 0.5,
                steering: -10.0,
                throttle: 20.0,
                mode: "tracking".into(),
            },
            ped: Some(PedView {
                x: 1.0,
                y: 2.0,
                heading: 0.0,
                id: "A".into(),
            }),
            mcn: McnView { p_present: Some(0.9) },
        };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["tick"], 3);
        assert_eq!(v["av"]["mode"], "tracking");
        assert_eq!(v["ped"]["id"], "A");
        assert_eq!(v["mcn"]["p_present"], 0.9);
        assert_eq!(ServerMessage::error("bad").to_json(), r#"{"type":"error","detail":"bad"}"#);
    }
}
