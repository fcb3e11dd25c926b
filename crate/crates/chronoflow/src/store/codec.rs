//! The closed set of payload codecs and their bit-exact encodings.

use super::StoreError;
use crate::message::PortType;
use serde::{Deserialize, Serialize};

/// Payload encoding tag, recorded per stream in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    /// 8-byte little-endian IEEE-754 double.
    F64,
    /// 8-byte little-endian signed integer.
    I64,
    /// 1 byte, 0 or 1.
    Bool,
    /// Raw UTF-8 text; length from the frame.
    Utf8,
    /// Raw bytes.
    Bytes,
    /// UTF-8 JSON text.
    Json,
}

impl Codec {
    pub const ALL: [Codec; 6] = [
        Codec::F64,
        Codec::I64,
        Codec::Bool,
        Codec::Utf8,
        Codec::Bytes,
        Codec::Json,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Codec::F64 => "f64",
            Codec::I64 => "i64",
            Codec::Bool => "bool",
            Codec::Utf8 => "utf8",
            Codec::Bytes => "bytes",
            Codec::Json => "json",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Codec> {
        Codec::ALL.iter().copied().find(|c| c.tag() == tag)
    }

    /// The Rust type this codec decodes into when wired as a typed port.
    pub fn port_type(&self) -> PortType {
        match self {
            Codec::F64 => PortType::of::<f64>(),
            Codec::I64 => PortType::of::<i64>(),
            Codec::Bool => PortType::of::<bool>(),
            Codec::Utf8 => PortType::of::<String>(),
            Codec::Bytes => PortType::of::<Vec<u8>>(),
            Codec::Json => PortType::of::<serde_json::Value>(),
        }
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<Value, StoreError> {
        match self {
            Codec::F64 => {
                let raw: [u8; 8] = bytes
                    .try_into()
                    .map_err(|_| StoreError::Codec(format!("f64 needs 8 bytes, got {}", bytes.len())))?;
                Ok(Value::F64(f64::from_le_bytes(raw)))
            }
            Codec::I64 => {
                let raw: [u8; 8] = bytes
                    .try_into()
                    .map_err(|_| StoreError::Codec(format!("i64 needs 8 bytes, got {}", bytes.len())))?;
                Ok(Value::I64(i64::from_le_bytes(raw)))
            }
            Codec::Bool => match bytes {
                [0] => Ok(Value::Bool(false)),
                [1] => Ok(Value::Bool(true)),
                _ => Err(StoreError::Codec("bool must be one byte, 0 or 1".into())),
            },
            Codec::Utf8 => String::from_utf8(bytes.to_vec())
                .map(Value::Utf8)
                .map_err(|e| StoreError::Codec(format!("invalid utf8: {e}"))),
            Codec::Bytes => Ok(Value::Bytes(bytes.to_vec())),
            Codec::Json => serde_json::from_slice(bytes)
                .map(Value::Json)
                .map_err(|e| StoreError::Codec(format!("invalid json: {e}"))),
        }
    }

    pub fn encode(&self, value: &Value) -> Result<Vec<u8>, StoreError> {
        match (self, value) {
            (Codec::F64, Value::F64(v)) => Ok(v.to_le_bytes().to_vec()),
            (Codec::I64, Value::I64(v)) => Ok(v.to_le_bytes().to_vec()),
            (Codec::Bool, Value::Bool(v)) => Ok(vec![*v as u8]),
            (Codec::Utf8, Value::Utf8(v)) => Ok(v.as_bytes().to_vec()),
            (Codec::Bytes, Value::Bytes(v)) => Ok(v.clone()),
            (Codec::Json, Value::Json(v)) => {
                serde_json::to_vec(v).map_err(|e| StoreError::Codec(e.to_string()))
            }
            (codec, value) => Err(StoreError::Codec(format!(
                "value {:?} does not match codec {}",
                value.kind(),
                codec.tag()
            ))),
        }
    }
}

/// A decoded payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    F64(f64),
    I64(i64),
    Bool(bool),
    Utf8(String),
    Bytes(Vec<u8>),
    Json(serde_json::Value),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::F64(_) => "f64",
            Value::I64(_) => "i64",
            Value::Bool(_) => "bool",
            Value::Utf8(_) => "utf8",
            Value::Bytes(_) => "bytes",
            Value::Json(_) => "json",
        }
    }
}

/// Rust types with a canonical codec, usable as typed store streams.
pub trait Encodable: Clone + Send + Sync + 'static {
    const CODEC: Codec;
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError>;
}

impl Encodable for f64 {
    const CODEC: Codec = Codec::F64;
    fn to_bytes(&self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        match Codec::F64.decode(bytes)? {
            Value::F64(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

impl Encodable for i64 {
    const CODEC: Codec = Codec::I64;
    fn to_bytes(&self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        match Codec::I64.decode(bytes)? {
            Value::I64(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

impl Encodable for bool {
    const CODEC: Codec = Codec::Bool;
    fn to_bytes(&self) -> Vec<u8> {
        vec![*self as u8]
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        match Codec::Bool.decode(bytes)? {
            Value::Bool(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

impl Encodable for String {
    const CODEC: Codec = Codec::Utf8;
    fn to_bytes(&self) -> Vec<u8> {
        self.as_bytes().to_vec()
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        match Codec::Utf8.decode(bytes)? {
            Value::Utf8(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

impl Encodable for Vec<u8> {
    const CODEC: Codec = Codec::Bytes;
    fn to_bytes(&self) -> Vec<u8> {
        self.clone()
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        Ok(bytes.to_vec())
    }
}

impl Encodable for serde_json::Value {
    const CODEC: Codec = Codec::Json;
    fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("json value serializes")
    }
    fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        match Codec::Json.decode(bytes)? {
            Value::Json(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for codec in Codec::ALL {
            assert_eq!(Codec::from_tag(codec.tag()), Some(codec));
        }
        assert_eq!(Codec::from_tag("gzip"), None);
    }

    #[test]
    fn scalar_encodings_are_little_endian() {
        assert_eq!(
            Codec::F64.encode(&Value::F64(1.5)).unwrap(),
            1.5f64.to_le_bytes().to_vec()
        );
        assert_eq!(
            Codec::I64.encode(&Value::I64(-2)).unwrap(),
            (-2i64).to_le_bytes().to_vec()
        );
        assert_eq!(Codec::Bool.encode(&Value::Bool(true)).unwrap(), vec![1]);
    }

    #[test]
    fn bool_rejects_other_bytes() {
        assert!(Codec::Bool.decode(&[2]).is_err());
        assert!(Codec::Bool.decode(&[0, 1]).is_err());
    }

    #[test]
    fn utf8_rejects_invalid_sequences() {
        assert!(Codec::Utf8.decode(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn json_round_trips() {
        let v = serde_json::json!({"a": 1, "b": [true, null, "x"]});
        let bytes = Codec::Json.encode(&Value::Json(v.clone())).unwrap();
        assert_eq!(Codec::Json.decode(&bytes).unwrap(), Value::Json(v));
    }

    #[test]
    fn codec_serde_uses_lowercase_tags() {
        assert_eq!(serde_json::to_string(&Codec::F64).unwrap(), "\"f64\"");
        assert_eq!(
            serde_json::from_str::<Codec>("\"json\"").unwrap(),
            Codec::Json
        );
    }
}
