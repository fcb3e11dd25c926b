//! The stream operator library: transforms, windows, certainty-gated fusion,
//! reproducible and arrival-order fan-in, resampling, and dynamic per-key
//! subflows.
//!
//! Each operator is a component under the scheduler's per-component
//! exclusion, so operator state needs no locking. Operator functions must be
//! pure with respect to shared state.

mod interp;
mod join;
mod merge;
mod parallel;
mod sample;
mod simple;
mod window;
mod zip;

pub use interp::{interpolate, Decision, Interpolator};
pub use join::{Join, JoinState};
pub use merge::{Merge, Tagged};
pub use parallel::{KeyFlow, ParallelByKey};
pub use sample::Sample;
pub use simple::{Aggregate, Filter, Map};
pub use window::{Window, WindowSpec};
pub use zip::Zip;

use crate::graph::{EmitterRef, GraphError, Pipeline};
use crate::sched::DeliveryPolicy;
use crate::time::TimeSpan;
use std::hash::Hash;

/// One output per input: `f` applied to the payload, originating time kept.
pub fn map<A, B, F>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<A>,
    f: F,
) -> Result<EmitterRef<B>, GraphError>
where
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
    F: FnMut(&A) -> B + Send + 'static,
{
    let node = p.add(name, Map::new(f))?;
    p.connect(input, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<B>(0)
}

/// Keeps payloads satisfying `pred`; sequences renumber densely.
pub fn filter<A, P>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<A>,
    pred: P,
) -> Result<EmitterRef<A>, GraphError>
where
    A: Clone + Send + Sync + 'static,
    P: FnMut(&A) -> bool + Send + 'static,
{
    let node = p.add(name, Filter::new(pred))?;
    p.connect(input, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<A>(0)
}

/// Running fold; emits the accumulated value after every input.
pub fn aggregate<A, S, F>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<A>,
    seed: S,
    step: F,
) -> Result<EmitterRef<S>, GraphError>
where
    A: Clone + Send + Sync + 'static,
    S: Clone + Send + Sync + 'static,
    F: FnMut(S, &A) -> S + Send + 'static,
{
    let node = p.add(name, Aggregate::new(seed, step))?;
    p.connect(input, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<S>(0)
}

/// Sliding windows by count or time span.
pub fn window<A>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<A>,
    spec: WindowSpec,
) -> Result<EmitterRef<Vec<A>>, GraphError>
where
    A: Clone + Send + Sync + 'static,
{
    spec.validate().map_err(GraphError::InvalidPolicy)?;
    let node = p.add(name, Window::<A>::new(spec))?;
    p.connect(input, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<Vec<A>>(0)
}

/// Certainty-gated fusion of a primary and a secondary stream.
pub fn join<A, B>(
    p: &mut Pipeline,
    name: &str,
    primary: &EmitterRef<A>,
    secondary: &EmitterRef<B>,
    ip: Interpolator,
) -> Result<EmitterRef<(A, B)>, GraphError>
where
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
{
    ip.validate().map_err(GraphError::InvalidPolicy)?;
    let node = p.add(name, Join::<A, B>::new(ip))?;
    p.connect(primary, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    p.connect(secondary, &node.input::<B>(1)?, DeliveryPolicy::Unlimited)?;
    node.output::<(A, B)>(0)
}

/// Reproducible total-order interleave of same-typed streams.
pub fn zip<A>(
    p: &mut Pipeline,
    name: &str,
    inputs: &[EmitterRef<A>],
) -> Result<EmitterRef<A>, GraphError>
where
    A: Clone + Send + Sync + 'static,
{
    let node = p.add(name, Zip::<A>::new(inputs.len()))?;
    for (idx, input) in inputs.iter().enumerate() {
        p.connect(input, &node.input::<A>(idx)?, DeliveryPolicy::Unlimited)?;
    }
    node.output::<A>(0)
}

/// Arrival-order interleave with source tagging (not reproducible).
pub fn merge<A>(
    p: &mut Pipeline,
    name: &str,
    inputs: &[EmitterRef<A>],
) -> Result<EmitterRef<Tagged<A>>, GraphError>
where
    A: Clone + Send + Sync + 'static,
{
    let node = p.add(name, Merge::<A>::new(inputs.len()))?;
    for (idx, input) in inputs.iter().enumerate() {
        p.connect(input, &node.input::<A>(idx)?, DeliveryPolicy::Unlimited)?;
    }
    node.output::<Tagged<A>>(0)
}

/// Regular-grid resampling with certainty-gated interpolation.
pub fn sample<A>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<A>,
    interval: TimeSpan,
    ip: Interpolator,
) -> Result<EmitterRef<A>, GraphError>
where
    A: Clone + Send + Sync + 'static,
{
    if interval.as_ns() <= 0 {
        return Err(GraphError::InvalidPolicy(
            "sample interval must be positive".into(),
        ));
    }
    ip.validate().map_err(GraphError::InvalidPolicy)?;
    let node = p.add(name, Sample::<A>::new(interval, ip))?;
    p.connect(input, &node.input::<A>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<A>(0)
}

/// Dynamic per-key subflows over a keyed stream.
pub fn parallel_by_key<K, A, B, F>(
    p: &mut Pipeline,
    name: &str,
    input: &EmitterRef<(K, A)>,
    factory: F,
) -> Result<EmitterRef<(K, B)>, GraphError>
where
    K: Eq + Hash + Clone + Send + Sync + 'static,
    A: Clone + Send + Sync + 'static,
    B: Clone + Send + Sync + 'static,
    F: FnMut(&K) -> KeyFlow<A, B> + Send + 'static,
{
    let node = p.add(name, ParallelByKey::new(factory))?;
    p.connect(input, &node.input::<(K, A)>(0)?, DeliveryPolicy::Unlimited)?;
    node.output::<(K, B)>(0)
}
