//! Shared test fixtures: independent oracles (brute-force references the
//! implementations are checked against), random stream generators, and store
//! builders.
//!
//! Everything here is deliberately naive — full scans over full logs — and
//! never calls into the code paths it is used to verify.

#![allow(dead_code)]

use chronoflow::ops::Interpolator;
use chronoflow::store::{Codec, StoreWriter, Value};
use chronoflow::time::{Envelope, TimeSpan, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::Path;

pub fn ts(ns: i64) -> Timestamp {
    Timestamp::from_ns(ns)
}

pub fn span(ns: i64) -> TimeSpan {
    TimeSpan::from_ns(ns)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Strictly increasing random originating times.
pub fn random_times(rng: &mut StdRng, len: usize, start: i64, max_step: i64) -> Vec<Timestamp> {
    let mut t = start;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        t += rng.gen_range(1..=max_step);
        out.push(Timestamp::from_ns(t));
    }
    out
}

/// Closed-world nearest/exact/last-before matching over full logs: the
/// definition applied directly, used as the join oracle.
pub fn oracle_match(
    secondary_times: &[Timestamp],
    t: Timestamp,
    ip: &Interpolator,
) -> Option<usize> {
    match ip {
        Interpolator::Exact => secondary_times.iter().position(|s| *s == t),
        Interpolator::Nearest(tolerance) => {
            let tol = tolerance.as_ns() as i128;
            let mut best: Option<(usize, i128)> = None;
            for (idx, s) in secondary_times.iter().enumerate() {
                let d = (s.as_ns() as i128 - t.as_ns() as i128).abs();
                if d <= tol && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((idx, d));
                }
            }
            best.map(|(idx, _)| idx)
        }
        Interpolator::LastBefore => {
            let mut best = None;
            for (idx, s) in secondary_times.iter().enumerate() {
                if *s <= t {
                    best = Some(idx);
                }
            }
            best
        }
    }
}

/// Offline join over complete logs: for each primary, the interpolator
/// definition decides the pair (or drop). This is what a reproducible join
/// must equal, independent of arrival timing.
pub fn oracle_join<A: Clone, B: Clone>(
    primary: &[(Timestamp, A)],
    secondary: &[(Timestamp, B)],
    ip: &Interpolator,
) -> Vec<(Timestamp, A, B)> {
    let times: Vec<Timestamp> = secondary.iter().map(|(t, _)| *t).collect();
    let mut out = Vec::new();
    for (t, a) in primary {
        if let Some(idx) = oracle_match(&times, *t, ip) {
            out.push((*t, a.clone(), secondary[idx].1.clone()));
        }
    }
    out
}

/// Brute-force sliding count windows over the full log.
pub fn oracle_window_count<A: Clone>(log: &[(Timestamp, A)], k: usize) -> Vec<(Timestamp, Vec<A>)> {
    let mut out = Vec::new();
    for end in 0..log.len() {
        if end + 1 >= k {
            let window: Vec<A> = log[end + 1 - k..=end].iter().map(|(_, v)| v.clone()).collect();
            out.push((log[end].0, window));
        }
    }
    out
}

/// Brute-force interval scan: all items with originating in [t − span, t].
pub fn oracle_window_time<A: Clone>(
    log: &[(Timestamp, A)],
    span: TimeSpan,
) -> Vec<(Timestamp, Vec<A>)> {
    let mut out = Vec::new();
    for (t, _) in log {
        let low = t.as_ns().saturating_sub(span.as_ns());
        let window: Vec<A> = log
            .iter()
            .filter(|(s, _)| s.as_ns() >= low && s <= t)
            .map(|(_, v)| v.clone())
            .collect();
        out.push((*t, window));
    }
    out
}

/// Brute-force regular-grid sampling with the closed-world matcher; grid
/// anchored at the first message, capped at the last.
pub fn oracle_sample<A: Clone>(
    log: &[(Timestamp, A)],
    interval: TimeSpan,
    ip: &Interpolator,
) -> Vec<(Timestamp, A)> {
    let Some(first) = log.first().map(|(t, _)| *t) else {
        return Vec::new();
    };
    let last = log.last().map(|(t, _)| *t).unwrap();
    let times: Vec<Timestamp> = log.iter().map(|(t, _)| *t).collect();
    let mut out = Vec::new();
    let mut q = first;
    while q <= last {
        if let Some(idx) = oracle_match(&times, q, ip) {
            out.push((q, log[idx].1.clone()));
        }
        match q.checked_add(interval) {
            Ok(next) => q = next,
            Err(_) => break,
        }
    }
    out
}

/// Total-order zip of several logs by (originating, input index, sequence).
pub fn oracle_zip<A: Clone>(inputs: &[Vec<(Timestamp, A)>]) -> Vec<(Timestamp, usize, A)> {
    let mut all: Vec<(Timestamp, usize, u64, A)> = Vec::new();
    for (idx, log) in inputs.iter().enumerate() {
        for (seq, (t, v)) in log.iter().enumerate() {
            all.push((*t, idx, seq as u64, v.clone()));
        }
    }
    all.sort_by_key(|(t, idx, seq, _)| (*t, *idx, *seq));
    all.into_iter().map(|(t, idx, _, v)| (t, idx, v)).collect()
}

/// Writes one stream of encoded values into a fresh store.
pub fn build_store(dir: &Path, streams: &[(&str, Codec, Vec<(Timestamp, Value)>)]) {
    let mut writer = StoreWriter::create(dir).expect("create store");
    let ids: Vec<u32> = streams
        .iter()
        .map(|(name, codec, _)| writer.add_stream(name, *codec).expect("add stream"))
        .collect();
    // interleave frames across streams in global time order, like a real run
    let mut cursors = vec![0usize; streams.len()];
    let mut sequences = vec![0u64; streams.len()];
    loop {
        let mut best: Option<(Timestamp, usize)> = None;
        for (idx, (_, _, log)) in streams.iter().enumerate() {
            if let Some((t, _)) = log.get(cursors[idx]) {
                if best.map_or(true, |(bt, _)| *t < bt) {
                    best = Some((*t, idx));
                }
            }
        }
        let Some((t, idx)) = best else { break };
        let (_, codec, log) = &streams[idx];
        let payload = codec.encode(&log[cursors[idx]].1).expect("encode");
        let env = Envelope::new(ids[idx], sequences[idx], t, t);
        writer.append(ids[idx], &env, &payload).expect("append");
        cursors[idx] += 1;
        sequences[idx] += 1;
    }
    writer.close().expect("close store");
}

/// A store with one f64 stream on a fixed grid.
pub fn build_f64_store(dir: &Path, name: &str, count: usize, start: i64, step: i64) {
    let log: Vec<(Timestamp, Value)> = (0..count)
        .map(|i| {
            (
                Timestamp::from_ns(start + step * i as i64),
                Value::F64(i as f64 * 0.5),
            )
        })
        .collect();
    build_store(dir, &[(name, Codec::F64, log)]);
}
