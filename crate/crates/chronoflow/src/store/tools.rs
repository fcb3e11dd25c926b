//! Offline store surgery: crop a time range into a new store, or concatenate
//! time-ordered stores. Both rebuild catalogs and renumber sequences densely
//! from 0, preserving originating and creation times and payload bytes.

use super::{Result, StoreError, StoreReader, StoreWriter};
use crate::time::{Envelope, Timestamp};
use std::path::Path;

/// Copies, per stream, exactly the frames with originating time in
/// `[from, to]` into a fresh store at `dst`.
pub fn crop(src: &Path, from: Timestamp, to: Timestamp, dst: &Path) -> Result<()> {
    let mut reader = StoreReader::open(src)?;
    let mut writer =
        StoreWriter::create_with_granularity(dst, reader.catalog().index_granularity)?;
    let streams: Vec<(u32, String, super::Codec)> = reader
        .catalog()
        .streams
        .iter()
        .map(|s| (s.id, s.name.clone(), s.codec))
        .collect();
    for (id, name, codec) in &streams {
        let dst_id = writer.add_stream(name, *codec)?;
        let mut sequence = 0u64;
        for (env, payload) in reader.read_range(*id, from, to)? {
            let stamped = Envelope::new(dst_id, sequence, env.originating, env.creation);
            writer.append(dst_id, &stamped, &payload)?;
            sequence += 1;
        }
    }
    writer.close()?;
    Ok(())
}

/// Concatenates stores with identical stream schemas into `dst`. Per stream,
/// originating ranges must strictly increase across the input list.
pub fn concat(srcs: &[&Path], dst: &Path) -> Result<()> {
    if srcs.is_empty() {
        return Err(StoreError::InvalidStore("nothing to concatenate".into()));
    }
    let mut readers: Vec<StoreReader> = srcs.iter().map(|p| StoreReader::open(p)).collect::<Result<_>>()?;

    // schema check: same stream names and codecs, in the same id order
    let reference: Vec<(String, super::Codec)> = readers[0]
        .catalog()
        .streams
        .iter()
        .map(|s| (s.name.clone(), s.codec))
        .collect();
    for (idx, reader) in readers.iter().enumerate().skip(1) {
        let schema: Vec<(String, super::Codec)> = reader
            .catalog()
            .streams
            .iter()
            .map(|s| (s.name.clone(), s.codec))
            .collect();
        if schema != reference {
            return Err(StoreError::SchemaMismatch(format!(
                "store #{idx} does not match the first store's streams"
            )));
        }
    }

    // range check before writing anything
    for (stream_idx, (name, _)) in reference.iter().enumerate() {
        let mut prev_last: Option<Timestamp> = None;
        for (idx, reader) in readers.iter().enumerate() {
            let meta = &reader.catalog().streams[stream_idx];
            if let (Some(prev), Some(first)) = (prev_last, meta.first_originating) {
                if first <= prev {
                    return Err(StoreError::OverlappingRanges(format!(
                        "stream {name:?}: store #{idx} starts at or before the previous store's end"
                    )));
                }
            }
            if meta.last_originating.is_some() {
                prev_last = meta.last_originating;
            }
        }
    }

    let granularity = readers[0].catalog().index_granularity;
    let mut writer = StoreWriter::create_with_granularity(dst, granularity)?;
    for (name, codec) in &reference {
        writer.add_stream(name, *codec)?;
    }
    for (stream_idx, _) in reference.iter().enumerate() {
        let dst_id = stream_idx as u32;
        let mut sequence = 0u64;
        for reader in &mut readers {
            let src_id = reader.catalog().streams[stream_idx].id;
            for (env, payload) in reader.read_all(src_id)? {
                let stamped = Envelope::new(dst_id, sequence, env.originating, env.creation);
                writer.append(dst_id, &stamped, &payload)?;
                sequence += 1;
            }
        }
    }
    writer.close()?;
    Ok(())
}
