//! Discrete-event core: the virtual clock, the event calendar and the run loop
//! that drives the dispatch policies.

mod sim;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{JobId, ModelError, VmId};
use crate::policies::PolicyError;

pub use sim::{run, run_level, run_sweep, run_with, RunOptions, TraceEntry};

/// Milliseconds per hour; the factor applied to scenario files declared in hours.
pub const MS_PER_HOUR: f64 = 3_600_000.0;

/// Default cap on processed events before a run is declared runaway.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event at t={at} is before the current clock t={now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("event count exceeded the safety cap of {cap}")]
    HorizonExceeded { cap: u64 },
    #[error("{0} job(s) never reached a terminal state")]
    Unfinished(usize),
    #[error("scaling the submitted volume needs at least one user base")]
    NoTraffic,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// A point on the simulated time axis, in milliseconds.
///
/// Always finite and non-negative, which makes the total order over the
/// underlying float well defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics if `ms` is negative or not finite.
    pub fn from_ms(ms: f64) -> Self {
        Self::try_from_ms(ms).unwrap_or_else(|| panic!("invalid simulation time {ms}"))
    }

    pub fn try_from_ms(ms: f64) -> Option<Self> {
        // `+ 0.0` folds -0.0 into +0.0 so equal instants compare equal.
        (ms.is_finite() && ms >= 0.0).then_some(SimTime(ms + 0.0))
    }

    pub fn as_ms(self) -> f64 {
        self.0
    }

    /// The instant `duration_ms` after `self`.
    pub fn after(self, duration_ms: f64) -> Self {
        Self::from_ms(self.0 + duration_ms)
    }

    /// Elapsed milliseconds from `earlier` to `self`, clamped at zero.
    pub fn since(self, earlier: SimTime) -> f64 {
        (self.0 - earlier.0).max(0.0)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// What happens when an event fires. Datacenters are addressed by index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    JobArrival { job: JobId },
    /// A VM pulls its next job, if it is idle and one is available.
    JobStart { dc: usize, vm: VmId },
    JobFinish { dc: usize, vm: VmId, job: JobId },
    /// `None` is the periodic tick covering every datacenter.
    MigrationCheck { dc: Option<usize> },
    DeadlineExpiry { job: JobId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(pub u64);

/// Pending events ordered by `(fire_at, seq)`; equal times pop in insertion order.
#[derive(Debug, Default)]
pub struct EventCalendar {
    heap: BinaryHeap<Reverse<Event>>,
    now: SimTime,
    next_seq: u64,
}

impl EventCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::PastEvent {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { fire_at, seq, kind }));
        Ok(EventHandle(seq))
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        Some(ev)
    }

    pub fn advance_to(&mut self, t: SimTime) -> Result<(), EngineError> {
        if t < self.now {
            return Err(EngineError::PastEvent { at: t, now: self.now });
        }
        self.now = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick() -> EventKind {
        EventKind::MigrationCheck { dc: None }
    }

    #[test]
    fn single_event_pops_its_handle() {
        let mut cal = EventCalendar::new();
        let h1 = cal.schedule(SimTime::from_ms(5.0), tick()).unwrap();
        let ev = cal.pop().unwrap();
        assert_eq!(EventHandle(ev.seq), h1);
        assert_eq!(cal.now(), SimTime::from_ms(5.0));
        assert!(cal.pop().is_none());
    }

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut cal = EventCalendar::new();
        let a = cal
            .schedule(SimTime::from_ms(5.0), EventKind::DeadlineExpiry { job: JobId(1) })
            .unwrap();
        let b = cal
            .schedule(SimTime::from_ms(5.0), EventKind::DeadlineExpiry { job: JobId(2) })
            .unwrap();
        assert_eq!(cal.pop().unwrap().seq, a.0);
        assert_eq!(cal.pop().unwrap().seq, b.0);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut cal = EventCalendar::new();
        cal.advance_to(SimTime::from_ms(10.0)).unwrap();
        let err = cal.schedule(SimTime::from_ms(7.0), tick()).unwrap_err();
        assert!(matches!(err, EngineError::PastEvent { .. }));
        assert!(cal.is_empty());
    }

    #[test]
    fn negative_zero_is_zero() {
        assert_eq!(SimTime::from_ms(-0.0), SimTime::ZERO);
        assert!(SimTime::try_from_ms(-1.0).is_none());
        assert!(SimTime::try_from_ms(f64::NAN).is_none());
    }

    proptest::proptest! {
        #[test]
        fn popped_times_never_decrease(times in proptest::collection::vec(0u32..1000, 1..200)) {
            let mut cal = EventCalendar::new();
            for t in &times {
                cal.schedule(SimTime::from_ms(*t as f64), tick()).unwrap();
            }
            let mut last = (SimTime::ZERO, 0u64);
            let mut first = true;
            while let Some(ev) = cal.pop() {
                if !first {
                    proptest::prop_assert!((ev.fire_at, ev.seq) > last);
                }
                first = false;
                last = (ev.fire_at, ev.seq);
            }
        }
    }
}
