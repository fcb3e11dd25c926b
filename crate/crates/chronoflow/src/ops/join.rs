//! Reproducible stream fusion: pair each primary message with a secondary
//! value chosen by an interpolator, acting only on final decisions.
//!
//! Primaries resolve strictly in order (head-of-line), so outputs are ordered
//! by primary originating time and the fused message speaks for the primary's
//! world moment. Unmatched primaries are dropped and surface in the primary
//! edge's drop counter.

use super::interp::{interpolate, Decision, Interpolator};
use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, Timestamp};
use crate::Payload;
use std::collections::VecDeque;
use std::marker::PhantomData;

pub const PRIMARY_PORT: usize = 0;
pub const SECONDARY_PORT: usize = 1;

/// Buffered fusion state for one join instance.
pub struct JoinState<A, B> {
    pending_primaries: VecDeque<(Timestamp, A)>,
    secondary_times: Vec<Timestamp>,
    secondary_values: Vec<B>,
    secondary_max_seen: Option<Timestamp>,
    secondary_closed: bool,
}

impl<A, B: Clone> JoinState<A, B> {
    pub fn new() -> Self {
        JoinState {
            pending_primaries: VecDeque::new(),
            secondary_times: Vec::new(),
            secondary_values: Vec::new(),
            secondary_max_seen: None,
            secondary_closed: false,
        }
    }

    pub fn push_primary(&mut self, t: Timestamp, value: A) {
        debug_assert!(self
            .pending_primaries
            .back()
            .map_or(true, |(last, _)| *last < t));
        self.pending_primaries.push_back((t, value));
    }

    pub fn push_secondary(&mut self, t: Timestamp, value: B) {
        debug_assert!(self.secondary_times.last().map_or(true, |last| *last < t));
        self.secondary_times.push(t);
        self.secondary_values.push(value);
        self.secondary_max_seen = Some(match self.secondary_max_seen {
            Some(m) => m.max(t),
            None => t,
        });
    }

    pub fn close_secondary(&mut self) {
        self.secondary_closed = true;
    }

    /// Resolves pending primaries in order while decisions are final.
    pub fn resolve(&mut self, ip: &Interpolator) -> Vec<(Timestamp, A, Option<B>)> {
        let mut out = Vec::new();
        while let Some((t, _)) = self.pending_primaries.front() {
            let t = *t;
            let decision = interpolate(
                &self.secondary_times,
                self.secondary_max_seen,
                self.secondary_closed,
                t,
                ip,
            );
            match decision {
                Decision::InsufficientData => break,
                Decision::Match(idx) => {
                    let value = self.secondary_values[idx].clone();
                    let (_, primary) = self.pending_primaries.pop_front().unwrap();
                    self.prune(t, ip);
                    out.push((t, primary, Some(value)));
                }
                Decision::NoMatch => {
                    let (_, primary) = self.pending_primaries.pop_front().unwrap();
                    self.prune(t, ip);
                    out.push((t, primary, None));
                }
            }
        }
        out
    }

    /// Discards buffered secondaries that can no longer match any later
    /// primary (all later queries have time > `t`).
    fn prune(&mut self, t: Timestamp, ip: &Interpolator) {
        let cut = match ip {
            Interpolator::LastBefore => {
                // keep the latest item at or before t, plus everything after
                match self.secondary_times.partition_point(|ts| *ts <= t) {
                    0 => 0,
                    at_or_before => at_or_before - 1,
                }
            }
            _ => {
                let horizon = ip.prune_before(t);
                self.secondary_times.partition_point(|ts| *ts < horizon)
            }
        };
        if cut > 0 {
            self.secondary_times.drain(..cut);
            self.secondary_values.drain(..cut);
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending_primaries.len()
    }

    pub fn buffered_len(&self) -> usize {
        self.secondary_times.len()
    }
}

/// The join operator component: primary on port 0, secondary on port 1,
/// fused `(A, B)` pairs out.
pub struct Join<A, B> {
    state: JoinState<A, B>,
    ip: Interpolator,
    _marker: PhantomData<fn(A, B)>,
}

impl<A, B: Clone> Join<A, B> {
    pub fn new(ip: Interpolator) -> Self {
        Join {
            state: JoinState::new(),
            ip,
            _marker: PhantomData,
        }
    }

    fn flush(&mut self, ctx: &mut Ctx<'_>)
    where
        A: Clone + Send + Sync + 'static,
        B: Clone + Send + Sync + 'static,
    {
        for (t, primary, matched) in self.state.resolve(&self.ip) {
            match matched {
                Some(secondary) => ctx.post(0, t, (primary, secondary)),
                None => ctx.mark_input_dropped(PRIMARY_PORT),
            }
        }
    }
}

impl<A, B> Component for Join<A, B>
where
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("primary");
        reg.input::<B>("secondary");
        reg.output::<(A, B)>("out");
    }

    fn on_message(&mut self, port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        match port {
            PRIMARY_PORT => {
                self.state
                    .push_primary(env.originating, payload.into_value::<A>());
            }
            SECONDARY_PORT => {
                self.state
                    .push_secondary(env.originating, payload.into_value::<B>());
            }
            _ => unreachable!("join has two inputs"),
        }
        self.flush(ctx);
    }

    fn on_closed(&mut self, port: usize, ctx: &mut Ctx<'_>) {
        if port == SECONDARY_PORT {
            self.state.close_secondary();
            self.flush(ctx);
        }
    }
}
