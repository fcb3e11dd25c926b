//! Reproducible fan-in: every message from every input, emitted in the total
//! order (originating, input index, sequence).
//!
//! A message is released only once every other input has either buffered
//! something, advanced past its time, or closed — the certainty condition
//! that makes the interleave a function of stream contents. Inputs may carry
//! equal originating times (ties break by input index), so zip outputs skip
//! the strict per-stream monotonicity check.

use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, Timestamp};
use crate::Payload;
use std::collections::VecDeque;
use std::marker::PhantomData;

struct Input<A> {
    buffer: VecDeque<(Timestamp, A)>,
    max_seen: Option<Timestamp>,
    closed: bool,
}

pub struct Zip<A> {
    inputs: Vec<Input<A>>,
    _marker: PhantomData<fn(A)>,
}

impl<A> Zip<A> {
    pub fn new(input_count: usize) -> Self {
        assert!(input_count >= 1, "zip needs at least one input");
        Zip {
            inputs: (0..input_count)
                .map(|_| Input {
                    buffer: VecDeque::new(),
                    max_seen: None,
                    closed: false,
                })
                .collect(),
            _marker: PhantomData,
        }
    }

    fn emit_ready(&mut self, ctx: &mut Ctx<'_>)
    where
        A: Clone + Send + Sync + 'static,
    {
        loop {
            // smallest buffered head by (originating, input index)
            let mut head: Option<(Timestamp, usize)> = None;
            for (idx, input) in self.inputs.iter().enumerate() {
                if let Some((t, _)) = input.buffer.front() {
                    if head.map_or(true, |(ht, _)| *t < ht) {
                        head = Some((*t, idx));
                    }
                }
            }
            let Some((t, idx)) = head else { return };

            // certainty: no other input can still produce a message before t
            let safe = self.inputs.iter().enumerate().all(|(j, input)| {
                j == idx
                    || !input.buffer.is_empty()
                    || input.closed
                    || input.max_seen.map_or(false, |m| m >= t)
            });
            if !safe {
                return;
            }
            let (_, value) = self.inputs[idx].buffer.pop_front().unwrap();
            ctx.post(0, t, value);
        }
    }
}

impl<A> Component for Zip<A>
where
    A: Clone + Send + Sync + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        for idx in 0..self.inputs.len() {
            reg.input::<A>(&format!("in{idx}"));
        }
        reg.output::<A>("out");
        reg.mark_unordered_outputs();
    }

    fn on_message(&mut self, port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let input = &mut self.inputs[port];
        input
            .buffer
            .push_back((env.originating, payload.into_value::<A>()));
        input.max_seen = Some(env.originating);
        self.emit_ready(ctx);
    }

    fn on_closed(&mut self, port: usize, ctx: &mut Ctx<'_>) {
        self.inputs[port].closed = true;
        self.emit_ready(ctx);
    }
}
