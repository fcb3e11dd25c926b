//! Arrival-order fan-in. Outputs interleave in whatever order messages reach
//! the merge, tagged with their source index and original envelope.
//!
//! Per-input relative order is preserved, but the interleave across inputs is
//! explicitly NOT reproducible between runs — use zip when reproducibility
//! matters. Merge outputs carry the input's originating time, so across the
//! merged stream originating times can go backwards; merged streams cannot
//! feed time-synchronized operators or stores.

use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::Envelope;
use crate::Payload;
use std::marker::PhantomData;

/// A merged message: the value plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagged<A> {
    pub source: usize,
    pub envelope: Envelope,
    pub value: A,
}

pub struct Merge<A> {
    input_count: usize,
    _marker: PhantomData<fn(A)>,
}

impl<A> Merge<A> {
    pub fn new(input_count: usize) -> Self {
        assert!(input_count >= 1, "merge needs at least one input");
        Merge {
            input_count,
            _marker: PhantomData,
        }
    }
}

impl<A> Component for Merge<A>
where
    A: Clone + Send + Sync + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        for idx in 0..self.input_count {
            reg.input::<A>(&format!("in{idx}"));
        }
        reg.output::<Tagged<A>>("out");
        reg.mark_unordered_outputs();
    }

    fn on_message(&mut self, port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        ctx.post(
            0,
            env.originating,
            Tagged {
                source: port,
                envelope: *env,
                value: payload.into_value::<A>(),
            },
        );
    }
}
