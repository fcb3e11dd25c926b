//! Timestamps, durations, message envelopes, and the real/virtual clock model.
//!
//! Every message in the system carries two times: the *originating* time at
//! which its content entered the pipeline from the world, and the *creation*
//! time at which the carrying message value was produced. All synchronization
//! is defined over originating times, which are strictly increasing per
//! stream.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Nanoseconds since the Unix epoch (UTC), full signed 64-bit range.
///
/// Arithmetic never wraps silently; operations that can overflow return
/// [`TimeError::TimeOverflow`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const MIN: Timestamp = Timestamp(i64::MIN);
    pub const MAX: Timestamp = Timestamp(i64::MAX);

    pub const fn from_ns(ns: i64) -> Self {
        Timestamp(ns)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub fn checked_add(self, span: TimeSpan) -> Result<Timestamp, TimeError> {
        self.0
            .checked_add(span.as_ns())
            .map(Timestamp)
            .ok_or(TimeError::TimeOverflow)
    }

    pub fn checked_sub(self, span: TimeSpan) -> Result<Timestamp, TimeError> {
        self.0
            .checked_sub(span.as_ns())
            .map(Timestamp)
            .ok_or(TimeError::TimeOverflow)
    }

    /// Signed span from `earlier` to `self` (negative when `self` precedes it).
    pub fn span_since(self, earlier: Timestamp) -> Result<TimeSpan, TimeError> {
        self.0
            .checked_sub(earlier.0)
            .map(TimeSpan::from_ns)
            .ok_or(TimeError::TimeOverflow)
    }

    /// Saturating difference, for diagnostics paths where an error would be noise.
    pub fn saturating_span_since(self, earlier: Timestamp) -> TimeSpan {
        TimeSpan::from_ns(self.0.saturating_sub(earlier.0))
    }

    /// Current wall-clock time.
    pub fn wall_now() -> Timestamp {
        use std::time::{SystemTime, UNIX_EPOCH};
        match SystemTime::now().duration_since(UNIX_EPOCH) {
            Ok(d) => Timestamp(d.as_nanos().min(i64::MAX as u128) as i64),
            Err(e) => Timestamp(-(e.duration().as_nanos().min(i64::MAX as u128) as i64)),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// A length of time in nanoseconds.
///
/// Spans may be negative in intermediate arithmetic; tolerance and window
/// parameters require non-negative values, which their constructors enforce.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TimeSpan(i64);

impl TimeSpan {
    pub const ZERO: TimeSpan = TimeSpan(0);
    pub const MAX: TimeSpan = TimeSpan(i64::MAX);

    pub const fn from_ns(ns: i64) -> Self {
        TimeSpan(ns)
    }

    pub const fn from_micros(us: i64) -> Self {
        TimeSpan(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        TimeSpan(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        TimeSpan(s * 1_000_000_000)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub const fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> TimeSpan {
        TimeSpan(self.0.saturating_abs())
    }

    pub fn checked_add(self, other: TimeSpan) -> Result<TimeSpan, TimeError> {
        self.0
            .checked_add(other.0)
            .map(TimeSpan)
            .ok_or(TimeError::TimeOverflow)
    }

    pub fn checked_mul(self, k: i64) -> Result<TimeSpan, TimeError> {
        self.0
            .checked_mul(k)
            .map(TimeSpan)
            .ok_or(TimeError::TimeOverflow)
    }

    pub fn to_std(self) -> std::time::Duration {
        std::time::Duration::from_nanos(self.0.max(0) as u64)
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Errors raised by time arithmetic and clock queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("timestamp arithmetic overflowed the signed 64-bit range")]
    TimeOverflow,
    #[error("operation is not supported by this clock mode")]
    UnsupportedMode,
    #[error("speed must be a positive rational")]
    InvalidSpeed,
    #[error("wall time precedes the clock's wall origin")]
    WallBeforeOrigin,
}

/// Replay pacing rate: a positive rational multiplier, or unpaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speed {
    /// Virtual time advances `num/den` nanoseconds per wall nanosecond.
    Ratio { num: u32, den: u32 },
    /// No pacing: run as fast as compute allows.
    Max,
}

impl Speed {
    pub const REAL_TIME: Speed = Speed::Ratio { num: 1, den: 1 };

    pub fn ratio(num: u32, den: u32) -> Result<Speed, TimeError> {
        if num == 0 || den == 0 {
            return Err(TimeError::InvalidSpeed);
        }
        Ok(Speed::Ratio { num, den })
    }

    /// Approximates a positive float as a rational with nanosecond resolution.
    pub fn from_f64(speed: f64) -> Result<Speed, TimeError> {
        if !speed.is_finite() || speed <= 0.0 {
            return Err(TimeError::InvalidSpeed);
        }
        let scaled = (speed * 1e9).round();
        if scaled < 1.0 || scaled > u32::MAX as f64 {
            return Err(TimeError::InvalidSpeed);
        }
        let mut num = scaled as u32;
        let mut den = 1_000_000_000u32;
        let g = gcd(num, den);
        num /= g;
        den /= g;
        Ok(Speed::Ratio { num, den })
    }

    pub fn is_max(self) -> bool {
        matches!(self, Speed::Max)
    }

    /// Scales a non-negative wall span into virtual time, truncating toward zero.
    pub fn scale(self, wall: TimeSpan) -> Result<TimeSpan, TimeError> {
        match self {
            Speed::Max => Err(TimeError::UnsupportedMode),
            Speed::Ratio { num, den } => {
                let scaled = (wall.as_ns() as i128 * num as i128) / den as i128;
                if scaled > i64::MAX as i128 || scaled < i64::MIN as i128 {
                    return Err(TimeError::TimeOverflow);
                }
                Ok(TimeSpan::from_ns(scaled as i64))
            }
        }
    }

    /// Inverse scaling: the wall span needed for a given virtual span.
    /// Rounds up so pacing never runs ahead of the target.
    pub fn wall_for(self, virtual_span: TimeSpan) -> Result<TimeSpan, TimeError> {
        match self {
            Speed::Max => Ok(TimeSpan::ZERO),
            Speed::Ratio { num, den } => {
                let v = virtual_span.as_ns().max(0) as i128;
                let wall = (v * den as i128 + num as i128 - 1) / num as i128;
                if wall > i64::MAX as i128 {
                    return Err(TimeError::TimeOverflow);
                }
                Ok(TimeSpan::from_ns(wall as i64))
            }
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// A pipeline clock description: real wall time, or a virtual clock that maps
/// wall time linearly onto replayed time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clock {
    Real,
    Virtual {
        /// Virtual time at clock start.
        virtual_origin: Timestamp,
        /// Wall time at clock start.
        wall_origin: Timestamp,
        speed: Speed,
    },
}

impl Clock {
    /// Maps a wall-clock reading onto virtual time:
    /// `virtual_origin + speed * (wall - wall_origin)`, truncated toward zero.
    ///
    /// Real-mode clocks and unpaced (`Speed::Max`) clocks have no linear map
    /// and report [`TimeError::UnsupportedMode`].
    pub fn virtual_now(&self, wall: Timestamp) -> Result<Timestamp, TimeError> {
        match self {
            Clock::Real => Err(TimeError::UnsupportedMode),
            Clock::Virtual {
                virtual_origin,
                wall_origin,
                speed,
            } => {
                if wall < *wall_origin {
                    return Err(TimeError::WallBeforeOrigin);
                }
                let delta = wall.span_since(*wall_origin)?;
                let scaled = speed.scale(delta)?;
                virtual_origin.checked_add(scaled)
            }
        }
    }
}

/// How a run replays persisted streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayDescriptor {
    pub start: Timestamp,
    /// Exclusive upper bound on originating times; `None` replays to the end.
    pub end: Option<Timestamp>,
    pub speed: Speed,
    /// Serializes delivery into a single totally-ordered lane so repeated
    /// replays are bit-identical.
    pub deterministic: bool,
}

impl ReplayDescriptor {
    pub fn new(
        start: Timestamp,
        end: Option<Timestamp>,
        speed: Speed,
        deterministic: bool,
    ) -> Result<Self, TimeError> {
        if let Some(end) = end {
            if start >= end {
                return Err(TimeError::TimeOverflow);
            }
        }
        Ok(ReplayDescriptor {
            start,
            end,
            speed,
            deterministic,
        })
    }

    /// Unbounded, unpaced, deterministic replay — the batch-processing default.
    pub fn batch() -> Self {
        ReplayDescriptor {
            start: Timestamp::MIN,
            end: None,
            speed: Speed::Max,
            deterministic: true,
        }
    }

    /// Unbounded replay paced at the given speed, without the deterministic lane.
    pub fn paced(speed: Speed) -> Self {
        ReplayDescriptor {
            start: Timestamp::MIN,
            end: None,
            speed,
            deterministic: false,
        }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && self.end.map_or(true, |end| t < end)
    }
}

/// Per-message metadata carried alongside every payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Envelope {
    /// Pipeline-wide emitter identifier, dense from 0 in registration order.
    pub stream_id: u32,
    /// Per-stream counter, dense from 0.
    pub sequence: u64,
    /// When the content entered the pipeline from the world.
    pub originating: Timestamp,
    /// When this message value was produced by its emitter.
    pub creation: Timestamp,
}

impl Envelope {
    pub fn new(stream_id: u32, sequence: u64, originating: Timestamp, creation: Timestamp) -> Self {
        Envelope {
            stream_id,
            sequence,
            originating,
            creation,
        }
    }
}

/// Ways a message can break the per-stream envelope contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeViolation {
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("originating time {got} does not strictly increase past {last}")]
    NonMonotoneOriginating { last: Timestamp, got: Timestamp },
    #[error("creation time {creation} precedes originating time {originating}")]
    CreationBeforeOriginating {
        originating: Timestamp,
        creation: Timestamp,
    },
}

/// Checks `next` against the stream contract relative to the previously
/// emitted envelope: dense sequences from 0, strictly increasing originating
/// times, and originating ≤ creation.
///
/// Every emitter runs this on post; violating messages are rejected rather
/// than silently reordered, which is what makes joins reproducible.
pub fn validate_envelope(
    prev: Option<&Envelope>,
    next: &Envelope,
) -> Result<(), EnvelopeViolation> {
    let expected_seq = match prev {
        None => 0,
        Some(p) => {
            debug_assert_eq!(p.stream_id, next.stream_id, "envelopes from different streams");
            p.sequence + 1
        }
    };
    if next.sequence != expected_seq {
        return Err(EnvelopeViolation::SequenceGap {
            expected: expected_seq,
            got: next.sequence,
        });
    }
    if let Some(p) = prev {
        if next.originating <= p.originating {
            return Err(EnvelopeViolation::NonMonotoneOriginating {
                last: p.originating,
                got: next.originating,
            });
        }
    }
    if next.creation < next.originating {
        return Err(EnvelopeViolation::CreationBeforeOriginating {
            originating: next.originating,
            creation: next.creation,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(ns: i64) -> Timestamp {
        Timestamp::from_ns(ns)
    }

    #[test]
    fn virtual_now_identity_pacing() {
        let t = ts(1_700_000_000_000_000_000);
        let clock = Clock::Virtual {
            virtual_origin: t,
            wall_origin: t,
            speed: Speed::REAL_TIME,
        };
        let wall = t.checked_add(TimeSpan::from_secs(5)).unwrap();
        assert_eq!(
            clock.virtual_now(wall).unwrap(),
            t.checked_add(TimeSpan::from_secs(5)).unwrap()
        );
    }

    #[test]
    fn virtual_now_double_speed() {
        let clock = Clock::Virtual {
            virtual_origin: ts(0),
            wall_origin: ts(0),
            speed: Speed::ratio(2, 1).unwrap(),
        };
        assert_eq!(
            clock.virtual_now(ts(5_000_000_000)).unwrap(),
            ts(10_000_000_000)
        );
    }

    #[test]
    fn virtual_now_truncates_toward_zero() {
        let clock = Clock::Virtual {
            virtual_origin: ts(100),
            wall_origin: ts(0),
            speed: Speed::ratio(1, 2).unwrap(),
        };
        // 100 + trunc(5 * 1/2) = 100 + 2
        assert_eq!(clock.virtual_now(ts(5)).unwrap(), ts(102));
    }

    #[test]
    fn virtual_now_rejects_real_mode() {
        assert_eq!(
            Clock::Real.virtual_now(ts(0)),
            Err(TimeError::UnsupportedMode)
        );
    }

    #[test]
    fn virtual_now_overflow_is_an_error() {
        let clock = Clock::Virtual {
            virtual_origin: Timestamp::MAX,
            wall_origin: ts(0),
            speed: Speed::REAL_TIME,
        };
        assert_eq!(clock.virtual_now(ts(1)), Err(TimeError::TimeOverflow));
    }

    #[test]
    fn speed_zero_is_invalid() {
        assert_eq!(Speed::ratio(0, 1), Err(TimeError::InvalidSpeed));
        assert_eq!(Speed::ratio(1, 0), Err(TimeError::InvalidSpeed));
        assert_eq!(Speed::from_f64(0.0), Err(TimeError::InvalidSpeed));
        assert_eq!(Speed::from_f64(-1.0), Err(TimeError::InvalidSpeed));
    }

    #[test]
    fn first_envelope_must_start_at_zero() {
        let e = Envelope::new(0, 0, ts(10), ts(10));
        assert!(validate_envelope(None, &e).is_ok());
        let e1 = Envelope::new(0, 1, ts(10), ts(10));
        assert_eq!(
            validate_envelope(None, &e1),
            Err(EnvelopeViolation::SequenceGap {
                expected: 0,
                got: 1
            })
        );
    }

    #[test]
    fn originating_must_strictly_increase() {
        let prev = Envelope::new(0, 4, ts(100), ts(100));
        let next = Envelope::new(0, 5, ts(100), ts(101));
        assert_eq!(
            validate_envelope(Some(&prev), &next),
            Err(EnvelopeViolation::NonMonotoneOriginating {
                last: ts(100),
                got: ts(100)
            })
        );
    }

    #[test]
    fn sequence_gap_is_rejected() {
        let prev = Envelope::new(0, 4, ts(100), ts(100));
        let next = Envelope::new(0, 6, ts(101), ts(101));
        assert_eq!(
            validate_envelope(Some(&prev), &next),
            Err(EnvelopeViolation::SequenceGap {
                expected: 5,
                got: 6
            })
        );
    }

    #[test]
    fn creation_before_originating_is_rejected() {
        let e = Envelope::new(0, 0, ts(10), ts(9));
        assert_eq!(
            validate_envelope(None, &e),
            Err(EnvelopeViolation::CreationBeforeOriginating {
                originating: ts(10),
                creation: ts(9)
            })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Difference of two virtual readings stays within 1ns of the
            // exact rational scaling of the wall delta.
            #[test]
            fn virtual_now_rounding_property(
                num in 1u32..1000,
                den in 1u32..1000,
                w1 in 0i64..1_000_000_000,
                w2 in 0i64..1_000_000_000,
            ) {
                let (w1, w2) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
                let clock = Clock::Virtual {
                    virtual_origin: Timestamp::from_ns(0),
                    wall_origin: Timestamp::from_ns(0),
                    speed: Speed::ratio(num, den).unwrap(),
                };
                let v1 = clock.virtual_now(Timestamp::from_ns(w1)).unwrap().as_ns();
                let v2 = clock.virtual_now(Timestamp::from_ns(w2)).unwrap().as_ns();
                let exact = (w2 - w1) as f64 * num as f64 / den as f64;
                let diff = (v2 - v1) as f64;
                prop_assert!((diff - exact).abs() <= 1.0 + 1e-6);
            }

            // validate_envelope over a whole sequence agrees with a direct
            // check of all three invariants over the log.
            #[test]
            fn envelope_validator_matches_brute_force(
                seqs in proptest::collection::vec((0u64..6, -5i64..50, 0i64..8), 1..40)
            ) {
                let mut envelopes = Vec::new();
                let mut seq = 0u64;
                let mut orig = 0i64;
                for (seq_jitter, orig_step, creat_off) in seqs {
                    // jitter occasionally perturbs the sequence / monotonicity
                    let s = if seq_jitter == 0 && seq > 0 { seq - 1 } else { seq };
                    orig += orig_step;
                    envelopes.push(Envelope::new(
                        7,
                        s,
                        Timestamp::from_ns(orig),
                        Timestamp::from_ns(orig + creat_off - 2),
                    ));
                    seq += 1;
                }

                let incremental = {
                    let mut prev: Option<Envelope> = None;
                    let mut ok = true;
                    for e in &envelopes {
                        if validate_envelope(prev.as_ref(), e).is_err() {
                            ok = false;
                            break;
                        }
                        prev = Some(*e);
                    }
                    ok
                };

                let brute = {
                    let mut ok = true;
                    for (i, e) in envelopes.iter().enumerate() {
                        if e.sequence != i as u64 {
                            ok = false;
                        }
                        if e.creation < e.originating {
                            ok = false;
                        }
                        if i > 0 && e.originating <= envelopes[i - 1].originating {
                            ok = false;
                        }
                        if !ok {
                            break;
                        }
                    }
                    ok
                };

                prop_assert_eq!(incremental, brute);
            }
        }
    }
}
