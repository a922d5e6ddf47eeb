//! Adapter wire protocol, version 1.
//!
//! One JSON object per line over the child's stdin/stdout. The harness opens
//! with `hello`, the adapter answers `model_info`, then each `forecast`
//! request gets exactly one `forecast_result` or `error` with the same
//! `task_id`. Numbers travel as shortest round-trip decimal text, so values
//! survive the trip bit-exactly.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello { protocol: u32 },
    ModelInfo(ModelInfo),
    Forecast(ForecastRequest),
    ForecastResult(ForecastReply),
    Error(ErrorReply),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    /// Native grid; empty for point-only producers.
    pub quantile_levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelInfo {
    pub fn point_only(&self) -> bool {
        self.quantile_levels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub task_id: String,
    /// `YYYY-MM-DDTHH:00:00Z`, one per context value.
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
    pub horizon: usize,
    pub quantile_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReply {
    pub task_id: String,
    pub point: Vec<f64>,
    /// Row-major `horizon × quantile_levels`; empty for point-only output.
    #[serde(default)]
    pub quantiles: Vec<Vec<f64>>,
    pub inference_seconds: f64,
    /// Set when `inference_seconds` also covers fitting.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub includes_fit: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    #[serde(default)]
    pub task_id: Option<String>,
    pub message: String,
}

/// Serialises a message as one line, newline included.
pub fn encode(message: &Message) -> String {
    let mut line = serde_json::to_string(message).expect("protocol messages always serialise");
    line.push('\n');
    line
}

pub fn decode(line: &str) -> Result<Message, serde_json::Error> {
    serde_json::from_str(line.trim_end_matches(['\r', '\n']))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_is_exact() {
        assert_eq!(
            encode(&Message::Hello {
                protocol: PROTOCOL_VERSION
            }),
            "{\"type\":\"hello\",\"protocol\":1}\n"
        );
    }

    #[test]
    fn request_field_order_and_shape() {
        let req = Message::Forecast(ForecastRequest {
            task_id: "t".into(),
            timestamps: vec!["2023-07-01T00:00:00Z".into()],
            values: vec![41000.5],
            horizon: 2,
            quantile_levels: vec![0.1, 0.5, 0.9],
        });
        assert_eq!(
            encode(&req),
            "{\"type\":\"forecast\",\"task_id\":\"t\",\"timestamps\":[\"2023-07-01T00:00:00Z\"],\
             \"values\":[41000.5],\"horizon\":2,\"quantile_levels\":[0.1,0.5,0.9]}\n"
        );
    }

    #[test]
    fn floats_round_trip_bit_exactly() {
        let values = vec![0.1 + 0.2, 41234.567891234567, 1e-300, f64::MAX, 5e-324];
        let reply = Message::ForecastResult(ForecastReply {
            task_id: "x".into(),
            point: values.clone(),
            quantiles: vec![values.clone()],
            inference_seconds: 0.012,
            includes_fit: false,
            rank_deficient: false,
        });
        let Message::ForecastResult(back) = decode(&encode(&reply)).unwrap() else {
            panic!("wrong variant");
        };
        for (a, b) in back.point.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn adapter_side_messages_parse() {
        let info = decode(r#"{"type":"model_info","model_id":"ttm-r2","quantile_levels":[]}"#).unwrap();
        assert!(matches!(info, Message::ModelInfo(ref m) if m.point_only()));
        let err = decode(r#"{"type":"error","task_id":"a","message":"boom"}"#).unwrap();
        assert!(matches!(err, Message::Error(ErrorReply { ref message, .. }) if message == "boom"));
        let res = decode(r#"{"type":"forecast_result","task_id":"a","point":[1],"inference_seconds":0.5,"includes_fit":true}"#)
            .unwrap();
        assert!(matches!(res, Message::ForecastResult(ref r) if r.includes_fit && r.quantiles.is_empty()));
        assert!(decode(r#"{"type":"nonsense"}"#).is_err());
    }
}
