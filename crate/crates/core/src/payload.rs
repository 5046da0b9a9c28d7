//! Message values and the envelope that carries them between node ports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Virtual milliseconds since run start.
pub type Millis = u64;

/// A message payload: a scalar, a string, or a key-value record.
///
/// Equality is deep and structural. Records keep their keys sorted so the
/// compact JSON form is canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Bool(bool),
    Number(f64),
    Text(String),
    Record(BTreeMap<String, Payload>),
}

impl Payload {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Payload::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Payload::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_record(&self) -> Option<&BTreeMap<String, Payload>> {
        match self {
            Payload::Record(r) => Some(r),
            _ => None,
        }
    }

    /// Field lookup on a record payload.
    pub fn get(&self, key: &str) -> Option<&Payload> {
        self.as_record().and_then(|r| r.get(key))
    }

    pub fn record<K, I>(fields: I) -> Payload
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, Payload)>,
    {
        Payload::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// Compact canonical JSON text.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Payload, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Converts a generic JSON value; `null` and arrays have no payload form.
    pub fn from_value(value: &serde_json::Value) -> Option<Payload> {
        serde_json::from_value(value.clone()).ok()
    }
}

impl From<f64> for Payload {
    fn from(v: f64) -> Self {
        Payload::Number(v)
    }
}

impl From<bool> for Payload {
    fn from(v: bool) -> Self {
        Payload::Bool(v)
    }
}

impl From<&str> for Payload {
    fn from(v: &str) -> Self {
        Payload::Text(v.to_string())
    }
}

impl From<String> for Payload {
    fn from(v: String) -> Self {
        Payload::Text(v)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

/// One timestamped message emitted on a node egress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub time: Millis,
    pub topic: String,
    pub payload: Payload,
    pub source: String,
    pub port: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<String>,
}

impl Envelope {
    pub fn new(
        time: Millis,
        source: impl Into<String>,
        port: usize,
        topic: impl Into<String>,
        payload: Payload,
    ) -> Self {
        Envelope {
            time,
            topic: topic.into(),
            payload,
            source: source.into(),
            port,
            corr: None,
        }
    }

    pub fn with_corr(mut self, corr: impl Into<String>) -> Self {
        self.corr = Some(corr.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_json_is_key_sorted() {
        let p = Payload::record([("b", Payload::from(1.0)), ("a", Payload::from("x"))]);
        assert_eq!(p.to_json(), r#"{"a":"x","b":1.0}"#);
    }

    #[test]
    fn untagged_decode_picks_variants() {
        assert_eq!(Payload::from_json("3").unwrap(), Payload::Number(3.0));
        assert_eq!(Payload::from_json("true").unwrap(), Payload::Bool(true));
        assert_eq!(Payload::from_json("\"on\"").unwrap(), Payload::Text("on".into()));
        assert!(Payload::from_json("null").is_err());
        assert!(Payload::from_json("[1,2]").is_err());
    }

    #[test]
    fn structural_equality_is_deep() {
        let a = Payload::record([("v", Payload::record([("x", Payload::from(1.0))]))]);
        let b = Payload::from_json(r#"{"v":{"x":1}}"#).unwrap();
        assert_eq!(a, b);
    }
}
