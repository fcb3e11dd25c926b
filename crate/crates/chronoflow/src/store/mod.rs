//! Bit-exact on-disk stores: a human-readable JSON catalog plus binary data
//! and index files, with time-range seeking, replay sources, store sinks,
//! crop/concat tooling, and dataset grouping.
//!
//! A store is a directory containing `catalog.json`, `data.bin`, and
//! `index.bin`. All binary integers are little-endian; the first 8 bytes of
//! both binary files are the ASCII magic `CHRONOF1`.

mod catalog;
mod codec;
mod dataset;
mod reader;
mod replay;
mod sink;
mod tools;
mod writer;

pub use catalog::{StoreCatalog, StreamMetadata};
pub use codec::{Codec, Encodable, Value};
pub use dataset::{Dataset, Session};
pub use reader::{StoreReader, TruncationInfo};
pub use replay::ReplaySource;
pub use sink::{StoreSink, StoreSinkBuilder};
pub use tools::{concat, crop};
pub use writer::StoreWriter;

use crate::time::EnvelopeViolation;

/// First 8 bytes of `data.bin` and `index.bin`.
pub const MAGIC: &[u8; 8] = b"CHRONOF1";

/// Fixed frame header: stream id (u32), sequence (u64), originating (i64),
/// creation (i64), payload length (u32).
pub const FRAME_HEADER_LEN: usize = 4 + 8 + 8 + 8 + 4;

/// Fixed index record: stream id (u32), originating (i64), byte offset (u64).
pub const INDEX_ENTRY_LEN: usize = 4 + 8 + 8;

/// Catalog format version written by this implementation.
pub const FORMAT_VERSION: u32 = 1;

/// Default per-stream index granularity (messages per index entry).
pub const DEFAULT_INDEX_GRANULARITY: u64 = 64;

pub const CATALOG_FILE: &str = "catalog.json";
pub const DATA_FILE: &str = "data.bin";
pub const INDEX_FILE: &str = "index.bin";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown stream: {0}")]
    UnknownStream(String),
    #[error("envelope contract violation: {0}")]
    EnvelopeViolation(EnvelopeViolation),
    #[error("stream is closed")]
    StreamClosed,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt frame at offset {offset}: {reason}")]
    CorruptFrame { offset: u64, reason: String },
    #[error("originating ranges overlap: {0}")]
    OverlappingRanges(String),
    #[error("stream schemas do not match: {0}")]
    SchemaMismatch(String),
    #[error("codec error: {0}")]
    Codec(String),
    #[error("not a valid store: {0}")]
    InvalidStore(String),
}

pub type Result<T> = std::result::Result<T, StoreError>;
