//! Discrete-event engine: integer microsecond clock, a (time, insertion)
//! ordered queue with cancellation, and a seeded random source.
//!
//! The engine is generic over its payload and has no notion of what the
//! events mean. Callers drive it with [`Engine::run_until`] and a handler,
//! or pull events one at a time with [`Engine::pop_until`] when they need to
//! inspect state between events.

mod rng;

pub use rng::RandomSource;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_us(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_us(self) -> u64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

/// Panics on underflow; use [`SimTime::checked_sub`] when the order is not known.
impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ms", self.as_ms_f64())
    }
}

/// Identifies the component an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

/// Returned by [`Engine::schedule`]; used to cancel the event later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub fire_time: SimTime,
    pub target: EntityId,
    pub payload: P,
    /// Insertion sequence number; breaks ties between equal fire times.
    pub tiebreak: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {requested} but the clock is already at {now}")]
    ScheduledInPast { requested: SimTime, now: SimTime },
    #[error("cannot run until {requested}: the clock is already at {now}")]
    RunBackwards { requested: SimTime, now: SimTime },
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.tiebreak == other.0.tiebreak
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap, so the ordering is reversed to pop the earliest
// (fire_time, tiebreak) first.
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_time, other.0.tiebreak).cmp(&(self.0.fire_time, self.0.tiebreak))
    }
}

/// Single-threaded event loop.
pub struct Engine<P> {
    now: SimTime,
    next_tiebreak: u64,
    queue: BinaryHeap<Queued<P>>,
    pending: HashSet<u64>,
    processed: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_tiebreak: 0,
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Total events delivered to handlers since construction.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of events that are scheduled and not cancelled.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        target: EntityId,
        payload: P,
    ) -> Result<EventHandle, SimError> {
        if fire_time < self.now {
            return Err(SimError::ScheduledInPast {
                requested: fire_time,
                now: self.now,
            });
        }
        let tiebreak = self.next_tiebreak;
        self.next_tiebreak += 1;
        self.pending.insert(tiebreak);
        self.queue.push(Queued(Event {
            fire_time,
            target,
            payload,
            tiebreak,
        }));
        Ok(EventHandle(tiebreak))
    }

    /// Schedules `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, target: EntityId, payload: P) -> EventHandle {
        self.schedule(self.now + delay, target, payload)
            .expect("relative schedule cannot be in the past")
    }

    /// Returns whether the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Fire time of the earliest live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.discard_cancelled();
        self.queue.peek().map(|q| q.0.fire_time)
    }

    /// Removes and returns the next live event if it fires at or before
    /// `t_end`, advancing the clock to its fire time. Leaves the clock
    /// untouched when nothing is due.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        self.discard_cancelled();
        if self.queue.peek()?.0.fire_time > t_end {
            return None;
        }
        let Queued(event) = self.queue.pop()?;
        self.pending.remove(&event.tiebreak);
        debug_assert!(event.fire_time >= self.now);
        self.now = event.fire_time;
        self.processed += 1;
        Some(event)
    }

    /// Moves the clock forward without processing anything. Fails if a live
    /// event would be skipped or if `t` is in the past.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), SimError> {
        if t < self.now {
            return Err(SimError::RunBackwards {
                requested: t,
                now: self.now,
            });
        }
        if let Some(next) = self.peek_time() {
            if next < t {
                return Err(SimError::RunBackwards {
                    requested: next,
                    now: t,
                });
            }
        }
        self.now = t;
        Ok(())
    }

    /// Processes every event with `fire_time <= t_end` in (time, insertion)
    /// order, then sets the clock to `t_end`. The handler may schedule and
    /// cancel through the engine reference it receives.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize, SimError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.now {
            return Err(SimError::RunBackwards {
                requested: t_end,
                now: self.now,
            });
        }
        let mut count = 0;
        while let Some(event) = self.pop_until(t_end) {
            handler(self, event);
            count += 1;
        }
        self.now = t_end;
        Ok(count)
    }

    fn discard_cancelled(&mut self) {
        while let Some(top) = self.queue.peek() {
            if self.pending.contains(&top.0.tiebreak) {
                break;
            }
            self.queue.pop();
        }
    }
}
