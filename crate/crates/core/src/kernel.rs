//! Virtual-time event scheduler.
//!
//! Time is kept in whole microseconds. Events are ordered by `(fire_at, seq)`
//! where `seq` is assigned at schedule time, so simultaneous events fire in
//! the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in virtual time, in microseconds since the start of the run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1_000_000)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Microseconds elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;

    fn add(self, us: u64) -> Timestamp {
        Timestamp(self.0 + us)
    }
}

impl Sub<u64> for Timestamp {
    type Output = Timestamp;

    fn sub(self, us: u64) -> Timestamp {
        Timestamp(self.0 - us)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    InThePast { at: Timestamp, now: Timestamp },
}

/// Handle returned by [`Scheduler::schedule`], used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    slot: u32,
    generation: u32,
}

/// An event popped from the queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired<E> {
    pub fire_at: Timestamp,
    pub seq: u64,
    pub payload: E,
}

#[derive(Debug, PartialEq, Eq)]
struct Entry {
    fire_at: Timestamp,
    seq: u64,
    slot: u32,
    generation: u32,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
struct Slot<E> {
    generation: u32,
    payload: Option<E>,
}

/// Single-threaded discrete-event scheduler.
///
/// Payloads live in a slab indexed by the handle; the heap only carries
/// ordering keys. Cancelling empties the slab slot, and the stale heap key is
/// discarded when it reaches the top.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: Timestamp,
    next_seq: u64,
    heap: BinaryHeap<Entry>,
    slots: Vec<Slot<E>>,
    free: Vec<u32>,
    pending: usize,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: Timestamp::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            free: Vec::new(),
            pending: 0,
        }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Number of scheduled, not yet fired or cancelled events.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn schedule(&mut self, fire_at: Timestamp, payload: E) -> Result<EventHandle, ScheduleError> {
        if fire_at < self.now {
            return Err(ScheduleError::InThePast {
                at: fire_at,
                now: self.now,
            });
        }
        let slot = match self.free.pop() {
            Some(idx) => {
                let s = &mut self.slots[idx as usize];
                s.payload = Some(payload);
                idx
            }
            None => {
                self.slots.push(Slot {
                    generation: 0,
                    payload: Some(payload),
                });
                (self.slots.len() - 1) as u32
            }
        };
        let generation = self.slots[slot as usize].generation;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_at,
            seq,
            slot,
            generation,
        });
        self.pending += 1;
        Ok(EventHandle { slot, generation })
    }

    /// Removes a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        match self.slots.get_mut(handle.slot as usize) {
            Some(s) if s.generation == handle.generation && s.payload.is_some() => {
                s.payload = None;
                self.release(handle.slot);
                self.pending -= 1;
                true
            }
            _ => false,
        }
    }

    fn release(&mut self, slot: u32) {
        let s = &mut self.slots[slot as usize];
        s.generation = s.generation.wrapping_add(1);
        self.free.push(slot);
    }

    /// Time of the earliest live event, if any.
    pub fn peek_time(&mut self) -> Option<Timestamp> {
        self.discard_stale();
        self.heap.peek().map(|e| e.fire_at)
    }

    fn discard_stale(&mut self) {
        while let Some(top) = self.heap.peek() {
            let s = &self.slots[top.slot as usize];
            if s.generation == top.generation && s.payload.is_some() {
                break;
            }
            self.heap.pop();
        }
    }

    /// Pops the next event with `fire_at <= limit`, advancing the clock to it.
    pub fn pop_until(&mut self, limit: Timestamp) -> Option<Fired<E>> {
        self.discard_stale();
        let top = self.heap.peek()?;
        if top.fire_at > limit {
            return None;
        }
        let entry = self.heap.pop().expect("peeked");
        let payload = self.slots[entry.slot as usize]
            .payload
            .take()
            .expect("live entry has a payload");
        self.release(entry.slot);
        self.pending -= 1;
        debug_assert!(entry.fire_at >= self.now);
        self.now = entry.fire_at;
        Some(Fired {
            fire_at: entry.fire_at,
            seq: entry.seq,
            payload,
        })
    }

    /// Fires every event with `fire_at <= limit` in order, then sets the clock
    /// to `limit`. The handler may schedule and cancel further events.
    pub fn run_until<F>(&mut self, limit: Timestamp, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, Fired<E>),
    {
        let mut fired = 0;
        while let Some(ev) = self.pop_until(limit) {
            handler(self, ev);
            fired += 1;
        }
        if limit > self.now {
            self.now = limit;
        }
        fired
    }
}
