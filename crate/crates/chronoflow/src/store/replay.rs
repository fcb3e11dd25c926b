//! Replay persisted streams as a pipeline source.
//!
//! Messages are emitted with their ORIGINAL originating timestamps and fresh
//! creation timestamps, in the global (originating, stream, sequence) order.
//! Live runs pace emission against the virtual clock (or flat out at max
//! speed); deterministic runs drive the source through the pull interface.

use super::{Codec, Result, StoreError, StoreReader, Value};
use crate::graph::{Component, EmissionKey, PortRegistry, PullSource};
use crate::sched::runtime::Ctx;
use crate::time::{ReplayDescriptor, Timestamp};
use std::path::{Path, PathBuf};

struct ReplayStream {
    name: String,
    codec: Codec,
    /// (originating, payload bytes), strictly increasing.
    messages: Vec<(Timestamp, Vec<u8>)>,
    cursor: usize,
    stream_id: u32,
}

/// Source component that re-emits selected streams of one store (or a chain
/// of time-ordered partitions).
pub struct ReplaySource {
    streams: Vec<ReplayStream>,
    decode: bool,
    window: (Timestamp, Option<Timestamp>),
}

impl ReplaySource {
    /// Opens a single store, selecting all streams (decoded to their codec
    /// types).
    pub fn open(dir: &Path, replay: &ReplayDescriptor) -> Result<Self> {
        Self::open_with(std::slice::from_ref(&dir.to_path_buf()), None, replay, true)
    }

    /// Full control: chained partitions, an optional stream-name selection,
    /// and raw (`Vec<u8>`) vs decoded payload ports.
    pub fn open_with(
        partitions: &[PathBuf],
        selection: Option<&[String]>,
        replay: &ReplayDescriptor,
        decode: bool,
    ) -> Result<Self> {
        if partitions.is_empty() {
            return Err(StoreError::InvalidStore("no store paths given".into()));
        }
        let mut readers: Vec<StoreReader> = partitions
            .iter()
            .map(|p| StoreReader::open(p))
            .collect::<Result<_>>()?;

        let names: Vec<String> = match selection {
            Some(names) => names.to_vec(),
            None => readers[0]
                .catalog()
                .streams
                .iter()
                .map(|s| s.name.clone())
                .collect(),
        };

        let mut streams = Vec::new();
        for name in &names {
            let codec = readers[0]
                .catalog()
                .stream_by_name(name)
                .ok_or_else(|| StoreError::UnknownStream(name.clone()))?
                .codec;
            let mut messages: Vec<(Timestamp, Vec<u8>)> = Vec::new();
            for reader in &mut readers {
                let meta = reader
                    .catalog()
                    .stream_by_name(name)
                    .ok_or_else(|| StoreError::UnknownStream(name.clone()))?;
                if meta.codec != codec {
                    return Err(StoreError::SchemaMismatch(format!(
                        "stream {name:?} changes codec across partitions"
                    )));
                }
                let id = meta.id;
                for (env, payload) in reader.read_all(id)? {
                    if let Some(last) = messages.last() {
                        if env.originating <= last.0 {
                            return Err(StoreError::OverlappingRanges(format!(
                                "stream {name:?} does not advance across partitions"
                            )));
                        }
                    }
                    messages.push((env.originating, payload));
                }
            }
            messages.retain(|(t, _)| {
                *t >= replay.start && replay.end.map_or(true, |end| *t < end)
            });
            streams.push(ReplayStream {
                name: name.clone(),
                codec,
                messages,
                cursor: 0,
                stream_id: 0,
            });
        }
        Ok(ReplaySource {
            streams,
            decode,
            window: (replay.start, replay.end),
        })
    }

    pub fn stream_names(&self) -> Vec<&str> {
        self.streams.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn message_count(&self, port: usize) -> usize {
        self.streams[port].messages.len()
    }

    pub fn codec(&self, port: usize) -> Codec {
        self.streams[port].codec
    }

    fn post_message(&self, ctx: &mut Ctx<'_>, port: usize, t: Timestamp, payload: &[u8]) {
        let stream = &self.streams[port];
        if !self.decode {
            ctx.post(port, t, payload.to_vec());
            return;
        }
        match stream.codec.decode(payload) {
            Ok(Value::F64(v)) => ctx.post(port, t, v),
            Ok(Value::I64(v)) => ctx.post(port, t, v),
            Ok(Value::Bool(v)) => ctx.post(port, t, v),
            Ok(Value::Utf8(v)) => ctx.post(port, t, v),
            Ok(Value::Bytes(v)) => ctx.post(port, t, v),
            Ok(Value::Json(v)) => ctx.post(port, t, v),
            Err(e) => {
                let env = crate::time::Envelope::new(stream.stream_id, 0, t, t);
                ctx.report_error(0, &env, format!("replay decode failed: {e}"));
            }
        }
    }

    fn min_pending(&self) -> Option<(Timestamp, usize)> {
        // smallest (originating, port); ports align with ascending stream ids
        let mut best: Option<(Timestamp, usize)> = None;
        for (idx, s) in self.streams.iter().enumerate() {
            if let Some((t, _)) = s.messages.get(s.cursor) {
                if best.map_or(true, |(bt, _)| *t < bt) {
                    best = Some((*t, idx));
                }
            }
        }
        best
    }
}

impl Component for ReplaySource {
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.mark_source();
        for stream in &self.streams {
            let ty = if self.decode {
                stream.codec.port_type()
            } else {
                crate::message::PortType::of::<Vec<u8>>()
            };
            reg.output_of(&stream.name, ty);
        }
    }

    fn earliest_emission(&self) -> Option<Timestamp> {
        self.streams
            .iter()
            .filter_map(|s| s.messages.first().map(|(t, _)| *t))
            .min()
    }

    fn on_start(&mut self, ctx: &mut Ctx<'_>) {
        for (port, stream) in self.streams.iter_mut().enumerate() {
            stream.stream_id = ctx.stream_id(port);
        }
        if ctx.deterministic() {
            return;
        }

        // Live replay runs on its own thread, paced by the pipeline clock.
        // The messages move out of self; emission order and payloads are
        // already fixed, so the component state is no longer needed.
        let streams: Vec<(usize, ReplayStream)> = self
            .streams
            .iter_mut()
            .enumerate()
            .map(|(port, s)| {
                (
                    port,
                    ReplayStream {
                        name: s.name.clone(),
                        codec: s.codec,
                        messages: std::mem::take(&mut s.messages),
                        cursor: 0,
                        stream_id: s.stream_id,
                    },
                )
            })
            .collect();
        let decode = self.decode;
        let clock = ctx.clock_handle();
        let done = ctx.completion_handle();
        let outputs: Vec<RawOutput> = streams
            .iter()
            .map(|(port, s)| RawOutput::new(ctx, *port, s.codec, decode))
            .collect();
        let _ = self.window;

        std::thread::Builder::new()
            .name("chronoflow-replay".into())
            .spawn(move || {
                let mut cursors = vec![0usize; streams.len()];
                loop {
                    if done.stop_requested() {
                        break;
                    }
                    let mut best: Option<(Timestamp, usize)> = None;
                    for (idx, (_, s)) in streams.iter().enumerate() {
                        if let Some((t, _)) = s.messages.get(cursors[idx]) {
                            if best.map_or(true, |(bt, _)| *t < bt) {
                                best = Some((*t, idx));
                            }
                        }
                    }
                    let Some((t, idx)) = best else { break };
                    clock.wait_until(t);
                    let (_, s) = &streams[idx];
                    let payload = &s.messages[cursors[idx]].1;
                    if outputs[idx].post(t, payload).is_err() {
                        break;
                    }
                    cursors[idx] += 1;
                }
                for out in &outputs {
                    out.close();
                }
                done.complete();
            })
            .expect("spawn replay source");
    }

    fn as_pull_source(&mut self) -> Option<&mut dyn PullSource> {
        Some(self)
    }
}

impl PullSource for ReplaySource {
    fn peek(&mut self) -> Option<EmissionKey> {
        let (t, idx) = self.min_pending()?;
        let s = &self.streams[idx];
        Some((t, s.stream_id, s.cursor as u64))
    }

    fn emit_next(&mut self, ctx: &mut Ctx<'_>) {
        let Some((t, idx)) = self.min_pending() else {
            return;
        };
        let payload = self.streams[idx].messages[self.streams[idx].cursor].1.clone();
        self.post_message(ctx, idx, t, &payload);
        self.streams[idx].cursor += 1;
    }
}

/// Typed blocking output handles for the live replay thread, one per stream,
/// pre-resolved to the codec's payload type.
enum RawOutput {
    Raw(crate::ThreadOutput<Vec<u8>>),
    F64(crate::ThreadOutput<f64>, Codec),
    I64(crate::ThreadOutput<i64>, Codec),
    Bool(crate::ThreadOutput<bool>, Codec),
    Utf8(crate::ThreadOutput<String>, Codec),
    Bytes(crate::ThreadOutput<Vec<u8>>),
    Json(crate::ThreadOutput<serde_json::Value>, Codec),
}

impl RawOutput {
    fn new(ctx: &Ctx<'_>, port: usize, codec: Codec, decode: bool) -> Self {
        if !decode {
            return RawOutput::Raw(ctx.thread_output(port));
        }
        match codec {
            Codec::F64 => RawOutput::F64(ctx.thread_output(port), codec),
            Codec::I64 => RawOutput::I64(ctx.thread_output(port), codec),
            Codec::Bool => RawOutput::Bool(ctx.thread_output(port), codec),
            Codec::Utf8 => RawOutput::Utf8(ctx.thread_output(port), codec),
            Codec::Bytes => RawOutput::Bytes(ctx.thread_output(port)),
            Codec::Json => RawOutput::Json(ctx.thread_output(port), codec),
        }
    }

    fn post(&self, t: Timestamp, payload: &[u8]) -> std::result::Result<(), crate::PostError> {
        match self {
            RawOutput::Raw(out) | RawOutput::Bytes(out) => out.post(t, payload.to_vec()),
            RawOutput::F64(out, codec) => match codec.decode(payload) {
                Ok(Value::F64(v)) => out.post(t, v),
                _ => Ok(()),
            },
            RawOutput::I64(out, codec) => match codec.decode(payload) {
                Ok(Value::I64(v)) => out.post(t, v),
                _ => Ok(()),
            },
            RawOutput::Bool(out, codec) => match codec.decode(payload) {
                Ok(Value::Bool(v)) => out.post(t, v),
                _ => Ok(()),
            },
            RawOutput::Utf8(out, codec) => match codec.decode(payload) {
                Ok(Value::Utf8(v)) => out.post(t, v),
                _ => Ok(()),
            },
            RawOutput::Json(out, codec) => match codec.decode(payload) {
                Ok(Value::Json(v)) => out.post(t, v),
                _ => Ok(()),
            },
        }
    }

    fn close(&self) {
        match self {
            RawOutput::Raw(out) | RawOutput::Bytes(out) => out.close(),
            RawOutput::F64(out, _) => out.close(),
            RawOutput::I64(out, _) => out.close(),
            RawOutput::Bool(out, _) => out.close(),
            RawOutput::Utf8(out, _) => out.close(),
            RawOutput::Json(out, _) => out.close(),
        }
    }
}
