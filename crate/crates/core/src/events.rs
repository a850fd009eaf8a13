//! Structured run events, one JSON object per line.
//!
//! Events go through the `log` facade under the `lforge::event` target at
//! info level, so any logger can route them; the message body is the JSON
//! object itself.

use serde::Serialize;
use std::time::{SystemTime, UNIX_EPOCH};

pub const TARGET: &str = "lforge::event";

#[derive(Debug, Clone, Default, Serialize)]
pub struct Event<'a> {
    pub event: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qp: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<&'a str>,
}

impl<'a> Event<'a> {
    pub fn new(event: &'a str) -> Self {
        Event {
            event,
            ..Event::default()
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("events always serialize");
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        v["ts"] = serde_json::json!(ts);
        v.to_string()
    }

    pub fn emit(&self) {
        if log::log_enabled!(target: TARGET, log::Level::Info) {
            log::info!(target: TARGET, "{}", self.to_json());
        }
    }

    /// Like [`emit`](Self::emit) but at debug level, for per-encode noise.
    pub fn emit_debug(&self) {
        if log::log_enabled!(target: TARGET, log::Level::Debug) {
            log::debug!(target: TARGET, "{}", self.to_json());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let k = [1.5, 2.0];
        let e = Event {
            phase: Some("search"),
            clip: Some("a"),
            k: Some(&k),
            ..Event::new("cost")
        };
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["event"], "cost");
        assert_eq!(v["k"][1], 2.0);
        assert!(v.get("qp").is_none());
        assert!(v["ts"].as_f64().unwrap() > 0.0);
    }
}
