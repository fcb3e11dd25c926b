//! Append-only store writer. One writer per store; frames are visible to
//! live readers as soon as they are flushed, and only complete frames are
//! ever observed (readers tolerate a partial tail).

use super::{
    Result, StoreCatalog, StoreError, StreamMetadata, CATALOG_FILE, DATA_FILE,
    DEFAULT_INDEX_GRANULARITY, FRAME_HEADER_LEN, INDEX_FILE, MAGIC,
};
use super::Codec;
use crate::time::{validate_envelope, Envelope, Timestamp};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

struct WriterStream {
    meta: StreamMetadata,
    last: Option<Envelope>,
    last_indexed_sequence: Option<u64>,
    last_frame_offset: Option<u64>,
}

pub struct StoreWriter {
    dir: PathBuf,
    data: BufWriter<File>,
    index: BufWriter<File>,
    offset: u64,
    granularity: u64,
    streams: Vec<WriterStream>,
    closed: bool,
}

impl StoreWriter {
    /// Creates a new store directory. Fails if one already exists at `dir`.
    pub fn create(dir: &Path) -> Result<Self> {
        Self::create_with_granularity(dir, DEFAULT_INDEX_GRANULARITY)
    }

    pub fn create_with_granularity(dir: &Path, granularity: u64) -> Result<Self> {
        if granularity == 0 {
            return Err(StoreError::InvalidStore(
                "index granularity must be at least 1".into(),
            ));
        }
        std::fs::create_dir_all(dir)?;
        let mut data = BufWriter::new(
            OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(dir.join(DATA_FILE))?,
        );
        let mut index = BufWriter::new(
            OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(dir.join(INDEX_FILE))?,
        );
        data.write_all(MAGIC)?;
        index.write_all(MAGIC)?;
        let writer = StoreWriter {
            dir: dir.to_path_buf(),
            data,
            index,
            offset: MAGIC.len() as u64,
            granularity,
            streams: Vec::new(),
            closed: false,
        };
        writer.write_catalog()?;
        Ok(writer)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn granularity(&self) -> u64 {
        self.granularity
    }

    /// Registers a stream; ids are dense from 0 in registration order.
    pub fn add_stream(&mut self, name: &str, codec: Codec) -> Result<u32> {
        if self.streams.iter().any(|s| s.meta.name == name) {
            return Err(StoreError::SchemaMismatch(format!(
                "stream {name:?} already exists"
            )));
        }
        let id = self.streams.len() as u32;
        self.streams.push(WriterStream {
            meta: StreamMetadata {
                id,
                name: name.to_string(),
                codec,
                message_count: 0,
                first_originating: None,
                last_originating: None,
                closed: false,
            },
            last: None,
            last_indexed_sequence: None,
            last_frame_offset: None,
        });
        self.write_catalog()?;
        Ok(id)
    }

    /// Appends one frame. The envelope's sequence and timestamps are
    /// validated against the stream's previous frame; its stream id field is
    /// replaced by the store's stream id.
    pub fn append(&mut self, stream: u32, envelope: &Envelope, payload: &[u8]) -> Result<()> {
        let slot = self
            .streams
            .get_mut(stream as usize)
            .ok_or_else(|| StoreError::UnknownStream(format!("id {stream}")))?;
        if slot.meta.closed {
            return Err(StoreError::StreamClosed);
        }
        let env = Envelope::new(
            stream,
            envelope.sequence,
            envelope.originating,
            envelope.creation,
        );
        validate_envelope(slot.last.as_ref(), &env).map_err(StoreError::EnvelopeViolation)?;
        if payload.len() > u32::MAX as usize {
            return Err(StoreError::Codec("payload exceeds u32 length".into()));
        }

        let frame_offset = self.offset;
        let mut header = [0u8; FRAME_HEADER_LEN];
        header[0..4].copy_from_slice(&env.stream_id.to_le_bytes());
        header[4..12].copy_from_slice(&env.sequence.to_le_bytes());
        header[12..20].copy_from_slice(&env.originating.as_ns().to_le_bytes());
        header[20..28].copy_from_slice(&env.creation.as_ns().to_le_bytes());
        header[28..32].copy_from_slice(&(payload.len() as u32).to_le_bytes());
        self.data.write_all(&header)?;
        self.data.write_all(payload)?;
        self.offset += (FRAME_HEADER_LEN + payload.len()) as u64;

        let indexed = env.sequence % self.granularity == 0;
        if indexed {
            write_index_entry(&mut self.index, stream, env.originating, frame_offset)?;
        }
        let slot = &mut self.streams[stream as usize];
        if indexed {
            slot.last_indexed_sequence = Some(env.sequence);
        }
        slot.meta.message_count += 1;
        if slot.meta.first_originating.is_none() {
            slot.meta.first_originating = Some(env.originating);
        }
        slot.meta.last_originating = Some(env.originating);
        slot.last = Some(env);
        slot.last_frame_offset = Some(frame_offset);
        Ok(())
    }

    /// Makes everything written so far visible to live readers.
    pub fn flush(&mut self) -> Result<()> {
        self.data.flush()?;
        self.index.flush()?;
        Ok(())
    }

    /// Closes one stream: the final message gains an index entry (for
    /// end-range seeks) and the stream stops accepting appends.
    pub fn close_stream(&mut self, stream: u32) -> Result<()> {
        let slot = self
            .streams
            .get_mut(stream as usize)
            .ok_or_else(|| StoreError::UnknownStream(format!("id {stream}")))?;
        if slot.meta.closed {
            return Ok(());
        }
        slot.meta.closed = true;
        let final_entry = match (slot.last, slot.last_frame_offset) {
            (Some(last), Some(offset)) if slot.last_indexed_sequence != Some(last.sequence) => {
                slot.last_indexed_sequence = Some(last.sequence);
                Some((last.originating, offset))
            }
            _ => None,
        };
        if let Some((originating, offset)) = final_entry {
            write_index_entry(&mut self.index, stream, originating, offset)?;
        }
        Ok(())
    }

    /// Finishes the store: closes all streams and writes the catalog.
    pub fn close(mut self) -> Result<StoreCatalog> {
        for stream in 0..self.streams.len() as u32 {
            self.close_stream(stream)?;
        }
        self.closed = true;
        self.flush()?;
        self.write_catalog()?;
        Ok(self.catalog())
    }

    pub fn catalog(&self) -> StoreCatalog {
        StoreCatalog {
            format_version: super::FORMAT_VERSION,
            index_granularity: self.granularity,
            streams: self.streams.iter().map(|s| s.meta.clone()).collect(),
        }
    }

    fn write_catalog(&self) -> Result<()> {
        self.catalog().save(&self.dir.join(CATALOG_FILE))
    }
}

fn write_index_entry(
    out: &mut BufWriter<File>,
    stream: u32,
    originating: Timestamp,
    offset: u64,
) -> Result<()> {
    let mut entry = [0u8; super::INDEX_ENTRY_LEN];
    entry[0..4].copy_from_slice(&stream.to_le_bytes());
    entry[4..12].copy_from_slice(&originating.as_ns().to_le_bytes());
    entry[12..20].copy_from_slice(&offset.to_le_bytes());
    out.write_all(&entry)?;
    Ok(())
}
