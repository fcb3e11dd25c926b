//! Store reader: time-range queries accelerated by the sparse index, safe
//! against truncated tails (a crash mid-append), and instrumented so tests
//! can bound seek cost in frames inspected.

use super::{
    Result, StoreCatalog, StoreError, CATALOG_FILE, DATA_FILE, FRAME_HEADER_LEN, INDEX_ENTRY_LEN,
    INDEX_FILE, MAGIC,
};
use crate::time::{Envelope, Timestamp};
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub stream_id: u32,
    pub originating: Timestamp,
    pub offset: u64,
}

/// A store whose final frame was cut short (crash during append). All
/// complete frames remain readable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationInfo {
    /// Offset of the first incomplete frame.
    pub at_offset: u64,
    /// Bytes lost past the last complete frame.
    pub trailing_bytes: u64,
}

pub struct StoreReader {
    dir: PathBuf,
    catalog: StoreCatalog,
    data: File,
    data_len: u64,
    index: Vec<IndexEntry>,
    frames_inspected: u64,
    truncation: Option<TruncationInfo>,
}

struct FrameHeader {
    stream_id: u32,
    sequence: u64,
    originating: Timestamp,
    creation: Timestamp,
    payload_len: u32,
}

impl StoreReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let catalog = StoreCatalog::load(&dir.join(CATALOG_FILE))?;
        let mut data = File::open(dir.join(DATA_FILE))?;
        let data_len = data.metadata()?.len();
        check_magic(&mut data, "data.bin")?;

        let mut index_file = File::open(dir.join(INDEX_FILE))?;
        check_magic(&mut index_file, "index.bin")?;
        let mut raw = Vec::new();
        index_file.read_to_end(&mut raw)?;
        // tolerate a torn final record (crash mid-write)
        let whole = raw.len() - raw.len() % INDEX_ENTRY_LEN;
        let mut index = Vec::with_capacity(whole / INDEX_ENTRY_LEN);
        for record in raw[..whole].chunks_exact(INDEX_ENTRY_LEN) {
            index.push(IndexEntry {
                stream_id: u32::from_le_bytes(record[0..4].try_into().unwrap()),
                originating: Timestamp::from_ns(i64::from_le_bytes(
                    record[4..12].try_into().unwrap(),
                )),
                offset: u64::from_le_bytes(record[12..20].try_into().unwrap()),
            });
        }

        let mut reader = StoreReader {
            dir: dir.to_path_buf(),
            catalog,
            data,
            data_len,
            index,
            frames_inspected: 0,
            truncation: None,
        };
        reader.check_tail()?;
        Ok(reader)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn catalog(&self) -> &StoreCatalog {
        &self.catalog
    }

    /// Frame headers read since opening; seek-cost instrumentation.
    pub fn frames_inspected(&self) -> u64 {
        self.frames_inspected
    }

    /// Whether a truncated tail has been detected.
    pub fn truncation(&self) -> Option<TruncationInfo> {
        self.truncation
    }

    pub fn stream_id(&self, name: &str) -> Result<u32> {
        self.catalog
            .stream_by_name(name)
            .map(|s| s.id)
            .ok_or_else(|| StoreError::UnknownStream(name.to_string()))
    }

    /// Walks forward from the last indexed frame to detect a torn tail
    /// without scanning the whole file.
    fn check_tail(&mut self) -> Result<()> {
        let start = self
            .index
            .iter()
            .map(|e| e.offset)
            .max()
            .unwrap_or(MAGIC.len() as u64);
        let mut offset = start;
        while offset < self.data_len {
            match self.read_header(offset)? {
                Some(header) => {
                    offset += FRAME_HEADER_LEN as u64 + header.payload_len as u64;
                }
                None => break, // truncation recorded by read_header
            }
        }
        Ok(())
    }

    /// Reads the frame header at `offset`. Returns `None` (and records the
    /// truncation) when the frame extends past end-of-file.
    fn read_header(&mut self, offset: u64) -> Result<Option<FrameHeader>> {
        if offset + FRAME_HEADER_LEN as u64 > self.data_len {
            self.truncation = Some(TruncationInfo {
                at_offset: offset,
                trailing_bytes: self.data_len - offset,
            });
            return Ok(None);
        }
        self.frames_inspected += 1;
        let mut header = [0u8; FRAME_HEADER_LEN];
        self.data.seek(SeekFrom::Start(offset))?;
        self.data.read_exact(&mut header)?;
        let parsed = FrameHeader {
            stream_id: u32::from_le_bytes(header[0..4].try_into().unwrap()),
            sequence: u64::from_le_bytes(header[4..12].try_into().unwrap()),
            originating: Timestamp::from_ns(i64::from_le_bytes(header[12..20].try_into().unwrap())),
            creation: Timestamp::from_ns(i64::from_le_bytes(header[20..28].try_into().unwrap())),
            payload_len: u32::from_le_bytes(header[28..32].try_into().unwrap()),
        };
        if self.catalog.stream(parsed.stream_id).is_none() {
            return Err(StoreError::CorruptFrame {
                offset,
                reason: format!("unknown stream id {}", parsed.stream_id),
            });
        }
        if offset + FRAME_HEADER_LEN as u64 + parsed.payload_len as u64 > self.data_len {
            self.truncation = Some(TruncationInfo {
                at_offset: offset,
                trailing_bytes: self.data_len - offset,
            });
            return Ok(None);
        }
        Ok(Some(parsed))
    }

    /// Starting offset for a range scan: the latest index entry of this
    /// stream at or before `from` (the scan begins within one index
    /// granularity of the first hit).
    fn seek_start(&self, stream: u32, from: Timestamp) -> u64 {
        self.index
            .iter()
            .filter(|e| e.stream_id == stream && e.originating <= from)
            .map(|e| e.offset)
            .max()
            .unwrap_or(MAGIC.len() as u64)
    }

    /// Exactly the messages of `stream` with originating time in
    /// `[from, to]`, in sequence order, with byte-identical payloads.
    pub fn read_range(
        &mut self,
        stream: u32,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<(Envelope, Vec<u8>)>> {
        if self.catalog.stream(stream).is_none() {
            return Err(StoreError::UnknownStream(format!("id {stream}")));
        }
        let mut out = Vec::new();
        let mut offset = self.seek_start(stream, from);
        while offset < self.data_len {
            let Some(header) = self.read_header(offset)? else {
                break;
            };
            let body_offset = offset + FRAME_HEADER_LEN as u64;
            let next = body_offset + header.payload_len as u64;
            if header.stream_id == stream {
                if header.originating > to {
                    break;
                }
                if header.originating >= from {
                    let mut payload = vec![0u8; header.payload_len as usize];
                    self.data.seek(SeekFrom::Start(body_offset))?;
                    self.data.read_exact(&mut payload)?;
                    out.push((
                        Envelope::new(
                            header.stream_id,
                            header.sequence,
                            header.originating,
                            header.creation,
                        ),
                        payload,
                    ));
                }
            }
            offset = next;
        }
        Ok(out)
    }

    /// Every message of a stream, in sequence order.
    pub fn read_all(&mut self, stream: u32) -> Result<Vec<(Envelope, Vec<u8>)>> {
        self.read_range(stream, Timestamp::MIN, Timestamp::MAX)
    }

    /// Full sequential scan of every complete frame in the data file, in file
    /// order (interleaved across streams). Used by crop/concat and fidelity
    /// checks.
    pub fn scan_all(&mut self) -> Result<Vec<(Envelope, Vec<u8>)>> {
        let mut out = Vec::new();
        let mut offset = MAGIC.len() as u64;
        while offset < self.data_len {
            let Some(header) = self.read_header(offset)? else {
                break;
            };
            let body_offset = offset + FRAME_HEADER_LEN as u64;
            let mut payload = vec![0u8; header.payload_len as usize];
            self.data.seek(SeekFrom::Start(body_offset))?;
            self.data.read_exact(&mut payload)?;
            out.push((
                Envelope::new(
                    header.stream_id,
                    header.sequence,
                    header.originating,
                    header.creation,
                ),
                payload,
            ));
            offset = body_offset + header.payload_len as u64;
        }
        Ok(out)
    }
}

fn check_magic(file: &mut File, name: &str) -> Result<()> {
    let mut magic = [0u8; 8];
    match file.read_exact(&mut magic) {
        Ok(()) if &magic == MAGIC => Ok(()),
        Ok(()) => Err(StoreError::InvalidStore(format!(
            "{name} carries wrong magic bytes"
        ))),
        Err(_) => Err(StoreError::InvalidStore(format!(
            "{name} is too short for the magic header"
        ))),
    }
}
