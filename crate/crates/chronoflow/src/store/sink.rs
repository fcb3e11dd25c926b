//! Persisting streams from a running pipeline into a store.
//!
//! The sink re-stamps sequences densely per store stream (deliveries on a
//! lossy edge may skip upstream sequence numbers) while preserving
//! originating and creation times, so persisted streams always satisfy the
//! envelope contract.

use super::{Codec, Encodable, Result, StoreWriter};
use crate::graph::{Component, PortRegistry};
use crate::message::PortType;
use crate::sched::runtime::Ctx;
use crate::time::Envelope;
use crate::Payload;
use std::path::Path;

struct SinkPort {
    name: String,
    codec: Codec,
    ty: PortType,
    encode: Box<dyn Fn(&Payload) -> Vec<u8> + Send>,
    store_stream: u32,
    next_sequence: u64,
}

/// Configures a [`StoreSink`]: one typed input port per persisted stream.
pub struct StoreSinkBuilder {
    writer: StoreWriter,
    ports: Vec<SinkPort>,
}

impl StoreSinkBuilder {
    pub fn create(dir: &Path) -> Result<Self> {
        Ok(StoreSinkBuilder {
            writer: StoreWriter::create(dir)?,
            ports: Vec::new(),
        })
    }

    pub fn create_with_granularity(dir: &Path, granularity: u64) -> Result<Self> {
        Ok(StoreSinkBuilder {
            writer: StoreWriter::create_with_granularity(dir, granularity)?,
            ports: Vec::new(),
        })
    }

    /// Adds a stream persisted from payloads of `T`'s canonical codec.
    pub fn stream<T: Encodable>(mut self, name: &str) -> Result<Self> {
        let store_stream = self.writer.add_stream(name, T::CODEC)?;
        self.ports.push(SinkPort {
            name: name.to_string(),
            codec: T::CODEC,
            ty: PortType::of::<T>(),
            encode: Box::new(|payload| payload.get::<T>().to_bytes()),
            store_stream,
            next_sequence: 0,
        });
        Ok(self)
    }

    /// Adds a stream persisted from raw `Vec<u8>` payloads under an explicit
    /// codec tag (fidelity copies).
    pub fn stream_raw(mut self, name: &str, codec: Codec) -> Result<Self> {
        let store_stream = self.writer.add_stream(name, codec)?;
        self.ports.push(SinkPort {
            name: name.to_string(),
            codec,
            ty: PortType::of::<Vec<u8>>(),
            encode: Box::new(|payload| payload.get::<Vec<u8>>().clone()),
            store_stream,
            next_sequence: 0,
        });
        Ok(self)
    }

    pub fn build(self) -> StoreSink {
        StoreSink {
            writer: Some(self.writer),
            ports: self.ports,
        }
    }
}

/// Component with one receiver per persisted stream; closes the store when
/// all inputs have closed.
pub struct StoreSink {
    writer: Option<StoreWriter>,
    ports: Vec<SinkPort>,
}

impl Component for StoreSink {
    fn register(&mut self, reg: &mut PortRegistry) {
        for port in &self.ports {
            reg.input_of(&port.name, port.ty);
        }
    }

    fn on_message(&mut self, port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let slot = &mut self.ports[port];
        let bytes = (slot.encode)(&payload);
        let stamped = Envelope::new(
            slot.store_stream,
            slot.next_sequence,
            env.originating,
            env.creation,
        );
        let Some(writer) = self.writer.as_mut() else {
            return;
        };
        match writer.append(slot.store_stream, &stamped, &bytes) {
            Ok(()) => {
                slot.next_sequence += 1;
            }
            Err(e) => {
                let _ = slot.codec;
                ctx.report_error(port, env, format!("append failed: {e}"));
            }
        }
    }

    fn on_closed(&mut self, port: usize, _ctx: &mut Ctx<'_>) {
        let stream = self.ports[port].store_stream;
        if let Some(writer) = self.writer.as_mut() {
            let _ = writer.close_stream(stream);
            let _ = writer.flush();
        }
    }

    fn on_final(&mut self, _ctx: &mut Ctx<'_>) {
        if let Some(writer) = self.writer.take() {
            let _ = writer.close();
        }
    }
}
