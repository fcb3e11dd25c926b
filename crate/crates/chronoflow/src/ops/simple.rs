//! Element-wise operators: map, filter, aggregate.
//!
//! All of them copy the input's originating time onto their outputs; only the
//! payload (and dense output sequence) changes. A handler that panics is
//! reported on the pipeline error channel and its input message counted as
//! dropped; the stream continues.

use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::Envelope;
use crate::Payload;
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};

pub struct Map<A, B, F> {
    f: F,
    _marker: PhantomData<fn(A) -> B>,
}

impl<A, B, F> Map<A, B, F> {
    pub fn new(f: F) -> Self {
        Map {
            f,
            _marker: PhantomData,
        }
    }
}

impl<A, B, F> Component for Map<A, B, F>
where
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
    F: FnMut(&A) -> B + Send + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("in");
        reg.output::<B>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let input = payload.get::<A>();
        match catch_unwind(AssertUnwindSafe(|| (self.f)(input))) {
            Ok(output) => ctx.post(0, env.originating, output),
            Err(panic) => ctx.report_error(0, env, panic_detail("map", &panic)),
        }
    }
}

pub struct Filter<A, P> {
    pred: P,
    _marker: PhantomData<fn(A)>,
}

impl<A, P> Filter<A, P> {
    pub fn new(pred: P) -> Self {
        Filter {
            pred,
            _marker: PhantomData,
        }
    }
}

impl<A, P> Component for Filter<A, P>
where
    A: Clone + Send + Sync + 'static,
    P: FnMut(&A) -> bool + Send + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("in");
        reg.output::<A>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let keep = {
            let input = payload.get::<A>();
            match catch_unwind(AssertUnwindSafe(|| (self.pred)(input))) {
                Ok(keep) => keep,
                Err(panic) => {
                    ctx.report_error(0, env, panic_detail("filter", &panic));
                    return;
                }
            }
        };
        if keep {
            ctx.post(0, env.originating, payload.into_value::<A>());
        }
    }
}

pub struct Aggregate<A, S, F> {
    state: S,
    step: F,
    _marker: PhantomData<fn(A)>,
}

impl<A, S, F> Aggregate<A, S, F> {
    pub fn new(seed: S, step: F) -> Self {
        Aggregate {
            state: seed,
            step,
            _marker: PhantomData,
        }
    }
}

impl<A, S, F> Component for Aggregate<A, S, F>
where
    A: Clone + Send + Sync + 'static,
    S: Clone + Send + Sync + 'static,
    F: FnMut(S, &A) -> S + Send + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<A>("in");
        reg.output::<S>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let input = payload.get::<A>();
        let current = self.state.clone();
        match catch_unwind(AssertUnwindSafe(|| (self.step)(current, input))) {
            Ok(next) => {
                self.state = next.clone();
                ctx.post(0, env.originating, next);
            }
            Err(panic) => ctx.report_error(0, env, panic_detail("aggregate", &panic)),
        }
    }
}

pub(crate) fn panic_detail(op: &str, panic: &Box<dyn std::any::Any + Send>) -> String {
    let text = if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    };
    format!("{op} handler panicked: {text}")
}
