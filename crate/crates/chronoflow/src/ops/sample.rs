//! Resampling onto a regular grid anchored at the first input message.
//!
//! Each grid point is resolved against the input with the interpolator's
//! certainty rules, so outputs are reproducible. The grid ends at the last
//! input's originating time; matches are emitted at the grid time.

use super::interp::{interpolate, Decision, Interpolator};
use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, TimeSpan, Timestamp};
use crate::Payload;
use std::marker::PhantomData;

pub struct Sample<A> {
    interval: TimeSpan,
    ip: Interpolator,
    times: Vec<Timestamp>,
    values: Vec<A>,
    max_seen: Option<Timestamp>,
    closed: bool,
    next_query: Option<Timestamp>,
    exhausted: bool,
    _marker: PhantomData<fn(A)>,
}

impl<A: Clone> Sample<A> {
    pub fn new(interval: TimeSpan, ip: Interpolator) -> Self {
        assert!(interval.as_ns() > 0, "sample interval must be positive");
        Sample {
            interval,
            ip,
            times: Vec::new(),
            values: Vec::new(),
            max_seen: None,
            closed: false,
            next_query: None,
            exhausted: false,
            _marker: PhantomData,
        }
    }

    fn resolve(&mut self, ctx: &mut Ctx<'_>)
    where
        A: Clone + Send + Sync + 'static,
    {
        while !self.exhausted {
            let Some(query) = self.next_query else { return };
            if self.closed {
                // grid is capped at the final input's originating time
                if self.max_seen.map_or(true, |last| query > last) {
                    self.exhausted = true;
                    return;
                }
            }
            match interpolate(&self.times, self.max_seen, self.closed, query, &self.ip) {
                Decision::InsufficientData => return,
                Decision::Match(idx) => {
                    let value = self.values[idx].clone();
                    ctx.post(0, query, value);
                    self.advance(query);
                }
                Decision::NoMatch => {
                    self.advance(query);
                }
            }
        }
    }

    fn advance(&mut self, query: Timestamp) {
        self.prune(query);
        match query.checked_add(self.interval) {
            Ok(next) => self.next_query = Some(next),
            Err(_) => self.exhausted = true,
        }
    }

    fn prune(&mut self, query: Timestamp) {
        let cut = match self.ip {
            Interpolator::LastBefore => {
                match self.times.partition_point(|ts| *ts <= query) {
                    0 => 0,
                    at_or_before => at_or_before - 1,
                }
            }
            _ => {
                let horizon = self.ip.prune_before(query);
                self.times.partition_point(|ts| *ts < horizon)
            }
        };
        if cut > 0 {
            self.times.drain(..cut);
            self.values.drain(..cut);
        }
    }
}

impl<A> Component for Sample<A>
where
    A: Clone + Send + Sync + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("in");
        reg.output::<A>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let t = env.originating;
        if self.next_query.is_none() {
            self.next_query = Some(t);
        }
        self.times.push(t);
        self.values.push(payload.into_value::<A>());
        self.max_seen = Some(t);
        self.resolve(ctx);
    }

    fn on_closed(&mut self, _port: usize, ctx: &mut Ctx<'_>) {
        self.closed = true;
        self.resolve(ctx);
    }
}
