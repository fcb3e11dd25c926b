//! Dynamic per-key subflows: the first occurrence of a key instantiates a
//! flow for it at runtime; later messages with the same key route to the same
//! flow. Outputs are re-tagged with the key and interleave in input order,
//! which — because flows emit synchronously at the current input time — is
//! exactly the reproducible (originating, flow index, sequence) order.

use crate::graph::{Component, PortRegistry};
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, Timestamp};
use crate::Payload;
use std::collections::HashMap;
use std::hash::Hash;
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// A per-key stream transform: one input in, at most one output out, produced
/// synchronously. Stateful flows capture their state.
pub struct KeyFlow<A, B> {
    step: Box<dyn FnMut(Timestamp, A) -> Option<B> + Send>,
}

impl<A: 'static, B: 'static> KeyFlow<A, B> {
    pub fn new(step: impl FnMut(Timestamp, A) -> Option<B> + Send + 'static) -> Self {
        KeyFlow {
            step: Box::new(step),
        }
    }

    /// Element-wise transform.
    pub fn map(mut f: impl FnMut(A) -> B + Send + 'static) -> Self {
        KeyFlow::new(move |_, a| Some(f(a)))
    }

    /// Keep-or-drop, then transform.
    pub fn filter_map(mut f: impl FnMut(A) -> Option<B> + Send + 'static) -> Self {
        KeyFlow::new(move |_, a| f(a))
    }

    /// Running fold; emits the accumulated state after every input.
    pub fn aggregate<S>(
        seed: S,
        mut step: impl FnMut(S, A) -> S + Send + 'static,
        mut finish: impl FnMut(&S) -> B + Send + 'static,
    ) -> Self
    where
        S: Clone + Send + 'static,
    {
        let mut state = seed;
        KeyFlow::new(move |_, a| {
            state = step(state.clone(), a);
            Some(finish(&state))
        })
    }

    fn push(&mut self, t: Timestamp, value: A) -> Option<B> {
        (self.step)(t, value)
    }
}

pub struct ParallelByKey<K, A, B, F> {
    factory: F,
    flows: HashMap<K, usize>,
    instances: Vec<KeyFlow<A, B>>,
    _marker: PhantomData<fn(K, A) -> B>,
}

impl<K, A, B, F> ParallelByKey<K, A, B, F>
where
    F: FnMut(&K) -> KeyFlow<A, B>,
{
    pub fn new(factory: F) -> Self {
        ParallelByKey {
            factory,
            flows: HashMap::new(),
            instances: Vec::new(),
            _marker: PhantomData,
        }
    }

    /// Number of subflows instantiated so far.
    pub fn instantiated(&self) -> usize {
        self.instances.len()
    }
}

impl<K, A, B, F> Component for ParallelByKey<K, A, B, F>
where
    K: Eq + Hash + Clone + Send + Sync + 'static,
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
    F: FnMut(&K) -> KeyFlow<A, B> + Send + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<(K, A)>("in");
        reg.output::<(K, B)>("out");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, ctx: &mut Ctx<'_>) {
        let (key, value) = payload.into_value::<(K, A)>();
        let idx = match self.flows.get(&key) {
            Some(idx) => *idx,
            None => {
                let flow = match catch_unwind(AssertUnwindSafe(|| (self.factory)(&key))) {
                    Ok(flow) => flow,
                    Err(panic) => {
                        ctx.report_error(0, env, super::simple::panic_detail("factory", &panic));
                        return;
                    }
                };
                let idx = self.instances.len();
                self.instances.push(flow);
                self.flows.insert(key.clone(), idx);
                idx
            }
        };
        if let Some(output) = self.instances[idx].push(env.originating, value) {
            ctx.post(0, env.originating, (key, output));
        }
    }
}
