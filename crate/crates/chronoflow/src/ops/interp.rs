//! Certainty-gated interpolation: selecting a secondary-stream value for a
//! query time, together with the predicate that tells when the selection can
//! no longer be changed by future messages.
//!
//! This gating is what makes stream fusion reproducible: a join only acts on
//! final decisions, so its output depends on stream contents alone, never on
//! arrival timing.

use crate::time::{TimeSpan, Timestamp};
use serde::{Deserialize, Serialize};

/// Rule for matching a secondary value to a query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolator {
    /// Match only a value at exactly the query time.
    Exact,
    /// Match the value closest in time within the tolerance; equidistant
    /// candidates resolve to the earlier one.
    Nearest(TimeSpan),
    /// Match the latest value at or before the query time (unbounded
    /// look-back).
    LastBefore,
}

impl Interpolator {
    pub fn validate(&self) -> Result<(), String> {
        if let Interpolator::Nearest(tolerance) = self {
            if tolerance.is_negative() {
                return Err("nearest tolerance must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Retention horizon after finalizing a query at `t`: buffered secondary
    /// items strictly before the horizon can never match a later query.
    pub(crate) fn prune_before(&self, t: Timestamp) -> Timestamp {
        match self {
            Interpolator::Exact => t,
            Interpolator::Nearest(tolerance) => {
                Timestamp::from_ns(t.as_ns().saturating_sub(tolerance.as_ns()))
            }
            // LastBefore keeps exactly one item at or before t; handled by the
            // caller since it is positional, not a time horizon.
            Interpolator::LastBefore => t,
        }
    }
}

/// Outcome of interpolating a query time against the secondary buffer.
///
/// `Match`/`NoMatch` are final: no strictly-increasing continuation of the
/// secondary stream can change them. `InsufficientData` means the decision
/// must wait for more secondary input (or stream close).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Final match with the buffered item at this index.
    Match(usize),
    /// Final: no secondary value can ever match this query.
    NoMatch,
    /// Not yet decidable.
    InsufficientData,
}

/// Resolves query time `t` against the currently buffered secondary items.
///
/// `times` must be strictly increasing; `max_seen` is the largest originating
/// time the secondary stream has produced so far (buffered or not), and
/// `closed` marks end-of-stream, which finalizes every decision.
pub fn interpolate(
    times: &[Timestamp],
    max_seen: Option<Timestamp>,
    closed: bool,
    t: Timestamp,
    ip: &Interpolator,
) -> Decision {
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
    match ip {
        Interpolator::Exact => {
            if let Ok(idx) = times.binary_search(&t) {
                return Decision::Match(idx);
            }
            if closed || max_seen.map_or(false, |m| m >= t) {
                Decision::NoMatch
            } else {
                Decision::InsufficientData
            }
        }
        Interpolator::Nearest(tolerance) => {
            let tol = tolerance.as_ns() as i128;
            let mut best: Option<(usize, i128)> = None;
            for (idx, ts) in times.iter().enumerate() {
                let distance = (ts.as_ns() as i128 - t.as_ns() as i128).abs();
                if distance <= tol {
                    // strict improvement only: ties keep the earlier item
                    if best.map_or(true, |(_, d)| distance < d) {
                        best = Some((idx, distance));
                    }
                }
            }
            match best {
                Some((idx, d_best)) => {
                    let later_cannot_be_closer = max_seen
                        .map_or(false, |m| m.as_ns() as i128 - t.as_ns() as i128 >= d_best);
                    if closed || later_cannot_be_closer {
                        Decision::Match(idx)
                    } else {
                        Decision::InsufficientData
                    }
                }
                None => {
                    let out_of_reach = max_seen
                        .map_or(false, |m| m.as_ns() as i128 >= t.as_ns() as i128 + tol);
                    if closed || out_of_reach {
                        Decision::NoMatch
                    } else {
                        Decision::InsufficientData
                    }
                }
            }
        }
        Interpolator::LastBefore => {
            let final_now = closed || max_seen.map_or(false, |m| m > t);
            if !final_now {
                return Decision::InsufficientData;
            }
            let candidate = match times.binary_search(&t) {
                Ok(idx) => Some(idx),
                Err(0) => None,
                Err(insert) => Some(insert - 1),
            };
            match candidate {
                Some(idx) => Decision::Match(idx),
                None => Decision::NoMatch,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(ns: i64) -> Timestamp {
        Timestamp::from_ns(ns)
    }

    fn times(ns: &[i64]) -> Vec<Timestamp> {
        ns.iter().copied().map(Timestamp::from_ns).collect()
    }

    #[test]
    fn exact_matches_equal_time() {
        let buf = times(&[10, 20]);
        assert_eq!(
            interpolate(&buf, Some(ts(20)), false, ts(10), &Interpolator::Exact),
            Decision::Match(0)
        );
    }

    #[test]
    fn exact_is_not_final_until_reached() {
        let buf = times(&[10]);
        assert_eq!(
            interpolate(&buf, Some(ts(10)), false, ts(15), &Interpolator::Exact),
            Decision::InsufficientData
        );
        assert_eq!(
            interpolate(&buf, Some(ts(15)), false, ts(15), &Interpolator::Exact),
            Decision::NoMatch
        );
    }

    #[test]
    fn nearest_final_when_later_cannot_be_closer() {
        let buf = times(&[8, 14]);
        // d(8)=2, d(14)=4; max_seen-t = 4 >= 2 so the decision is final
        assert_eq!(
            interpolate(
                &buf,
                Some(ts(14)),
                false,
                ts(10),
                &Interpolator::Nearest(TimeSpan::from_ns(5))
            ),
            Decision::Match(0)
        );
    }

    #[test]
    fn nearest_waits_for_possible_closer_message() {
        let buf = times(&[8]);
        // a future message at 11 would be closer than 8
        assert_eq!(
            interpolate(
                &buf,
                Some(ts(8)),
                false,
                ts(10),
                &Interpolator::Nearest(TimeSpan::from_ns(5))
            ),
            Decision::InsufficientData
        );
    }

    #[test]
    fn nearest_no_match_when_out_of_reach() {
        let buf = times(&[8]);
        // 8 is out of tolerance and max_seen 12 >= 10+1: final NoMatch
        assert_eq!(
            interpolate(
                &buf,
                Some(ts(12)),
                false,
                ts(10),
                &Interpolator::Nearest(TimeSpan::from_ns(1))
            ),
            Decision::NoMatch
        );
    }

    #[test]
    fn nearest_tie_resolves_to_earlier() {
        let buf = times(&[8, 12]);
        assert_eq!(
            interpolate(
                &buf,
                Some(ts(20)),
                false,
                ts(10),
                &Interpolator::Nearest(TimeSpan::from_ns(5))
            ),
            Decision::Match(0)
        );
    }

    #[test]
    fn last_before_picks_latest_at_or_before() {
        let buf = times(&[8, 14]);
        assert_eq!(
            interpolate(&buf, Some(ts(14)), false, ts(10), &Interpolator::LastBefore),
            Decision::Match(0)
        );
        // not final until a message strictly after t has been seen
        assert_eq!(
            interpolate(&buf[..1], Some(ts(8)), false, ts(10), &Interpolator::LastBefore),
            Decision::InsufficientData
        );
        // closed finalizes
        assert_eq!(
            interpolate(&buf[..1], Some(ts(8)), true, ts(10), &Interpolator::LastBefore),
            Decision::Match(0)
        );
    }

    #[test]
    fn last_before_no_match_when_nothing_precedes() {
        let buf = times(&[14]);
        assert_eq!(
            interpolate(&buf, Some(ts(14)), false, ts(10), &Interpolator::LastBefore),
            Decision::NoMatch
        );
    }

    #[test]
    fn closed_stream_finalizes_everything() {
        let buf = times(&[]);
        assert_eq!(
            interpolate(&buf, None, true, ts(10), &Interpolator::Exact),
            Decision::NoMatch
        );
        assert_eq!(
            interpolate(
                &buf,
                None,
                true,
                ts(10),
                &Interpolator::Nearest(TimeSpan::from_ns(100))
            ),
            Decision::NoMatch
        );
    }
}
