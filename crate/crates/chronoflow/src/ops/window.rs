//! Sliding windows over a stream, by count or by originating-time span.

use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, TimeSpan, Timestamp};
use crate::Payload;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::marker::PhantomData;

/// Window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSpec {
    /// Sliding window of the last `k` messages; one output per input once `k`
    /// inputs have been seen.
    ByCount(usize),
    /// All messages with originating time in `[t − span, t]`, one output per
    /// input at originating time `t`.
    ByTime(TimeSpan),
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            WindowSpec::ByCount(k) if *k == 0 => Err("window count must be at least 1".into()),
            WindowSpec::ByTime(span) if span.is_negative() => {
                Err("window span must be non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

pub struct Window<A> {
    spec: WindowSpec,
    buffer: VecDeque<(Timestamp, A)>,
    _marker: PhantomData<fn(A)>,
}

impl<A> Window<A> {
    pub fn new(spec: WindowSpec) -> Self {
        Window {
            spec,
            buffer: VecDeque::new(),
            _marker: PhantomData,
        }
    }
}

impl<A> Component for Window<A>
where
    A: Clone + Send + Sync + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("in");
        reg.output::<Vec<A>>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let t = env.originating;
        self.buffer.push_back((t, payload.into_value::<A>()));
        match self.spec {
            WindowSpec::ByCount(k) => {
                if self.buffer.len() > k {
                    self.buffer.pop_front();
                }
                if self.buffer.len() == k {
                    let window: Vec<A> = self.buffer.iter().map(|(_, v)| v.clone()).collect();
                    ctx.post(0, t, window);
                }
            }
            WindowSpec::ByTime(span) => {
                let horizon = Timestamp::from_ns(t.as_ns().saturating_sub(span.as_ns()));
                while self
                    .buffer
                    .front()
                    .map_or(false, |(ts, _)| *ts < horizon)
                {
                    self.buffer.pop_front();
                }
                let window: Vec<A> = self.buffer.iter().map(|(_, v)| v.clone()).collect();
                ctx.post(0, t, window);
            }
        }
    }
}
