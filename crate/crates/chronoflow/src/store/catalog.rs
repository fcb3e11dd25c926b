//! The human-readable store catalog.

use super::{Codec, Result, StoreError, FORMAT_VERSION};
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub id: u32,
    pub name: String,
    pub codec: Codec,
    pub message_count: u64,
    pub first_originating: Option<Timestamp>,
    pub last_originating: Option<Timestamp>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreCatalog {
    pub format_version: u32,
    pub index_granularity: u64,
    pub streams: Vec<StreamMetadata>,
}

impl StoreCatalog {
    pub fn new(index_granularity: u64) -> Self {
        StoreCatalog {
            format_version: FORMAT_VERSION,
            index_granularity,
            streams: Vec::new(),
        }
    }

    pub fn stream_by_name(&self, name: &str) -> Option<&StreamMetadata> {
        self.streams.iter().find(|s| s.name == name)
    }

    pub fn stream(&self, id: u32) -> Option<&StreamMetadata> {
        self.streams.get(id as usize)
    }

    /// Checks structural invariants: dense ids from 0, unique names, and
    /// count/range consistency per stream.
    pub fn validate(&self) -> Result<()> {
        for (idx, s) in self.streams.iter().enumerate() {
            if s.id as usize != idx {
                return Err(StoreError::InvalidStore(format!(
                    "stream ids must be dense from 0; found id {} at position {idx}",
                    s.id
                )));
            }
            if self.streams.iter().filter(|t| t.name == s.name).count() != 1 {
                return Err(StoreError::InvalidStore(format!(
                    "duplicate stream name {:?}",
                    s.name
                )));
            }
            let empty = s.message_count == 0;
            if empty != (s.first_originating.is_none() && s.last_originating.is_none()) {
                return Err(StoreError::InvalidStore(format!(
                    "stream {:?}: message count and originating range disagree",
                    s.name
                )));
            }
            if let (Some(first), Some(last)) = (s.first_originating, s.last_originating) {
                if first > last {
                    return Err(StoreError::InvalidStore(format!(
                        "stream {:?}: first originating after last",
                        s.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let catalog: StoreCatalog = serde_json::from_str(&text)
            .map_err(|e| StoreError::InvalidStore(format!("catalog parse error: {e}")))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("catalog serializes");
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_json_shape() {
        let catalog = StoreCatalog {
            format_version: FORMAT_VERSION,
            index_granularity: 64,
            streams: vec![StreamMetadata {
                id: 0,
                name: "imu".into(),
                codec: Codec::F64,
                message_count: 2,
                first_originating: Some(Timestamp::from_ns(5)),
                last_originating: Some(Timestamp::from_ns(9)),
                closed: true,
            }],
        };
        let json = serde_json::to_value(&catalog).unwrap();
        assert_eq!(json["format_version"], 1);
        assert_eq!(json["index_granularity"], 64);
        assert_eq!(json["streams"][0]["codec"], "f64");
        assert_eq!(json["streams"][0]["first_originating"], 5);
        let back: StoreCatalog = serde_json::from_value(json).unwrap();
        assert_eq!(back, catalog);
    }

    #[test]
    fn validation_rejects_sparse_ids() {
        let catalog = StoreCatalog {
            format_version: FORMAT_VERSION,
            index_granularity: 64,
            streams: vec![StreamMetadata {
                id: 3,
                name: "x".into(),
                codec: Codec::Bytes,
                message_count: 0,
                first_originating: None,
                last_originating: None,
                closed: false,
            }],
        };
        assert!(catalog.validate().is_err());
    }
}
