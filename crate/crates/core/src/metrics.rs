//! Deterministic operation counters.
//!
//! Counters are thread-local so a measured section only sees the work done
//! on the calling thread. Wrap the section in [`measure`] to get the delta.

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Counts of the primitive operations that dominate protocol cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounts {
    /// Modular exponentiations in the prime-order group.
    pub group_exps: u64,
    /// SHA-256 invocations.
    pub hash_calls: u64,
    /// Bytes fed into SHA-256.
    pub bytes_hashed: u64,
    /// Proof or per-item verification checks.
    pub verify_calls: u64,
    /// AEAD seal/open calls.
    pub aead_calls: u64,
}

impl OpCounts {
    pub fn is_zero(&self) -> bool {
        *self == OpCounts::default()
    }

    /// Compact `key=value` rendering used in CSV cells.
    pub fn to_cell(&self) -> String {
        format!(
            "exp={};hash={};bytes={};verify={};aead={}",
            self.group_exps, self.hash_calls, self.bytes_hashed, self.verify_calls, self.aead_calls
        )
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_cell())
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            group_exps: self.group_exps + rhs.group_exps,
            hash_calls: self.hash_calls + rhs.hash_calls,
            bytes_hashed: self.bytes_hashed + rhs.bytes_hashed,
            verify_calls: self.verify_calls + rhs.verify_calls,
            aead_calls: self.aead_calls + rhs.aead_calls,
        }
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: OpCounts) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(iter: I) -> OpCounts {
        iter.fold(OpCounts::default(), Add::add)
    }
}

thread_local! {
    static COUNTS: Cell<OpCounts> = const { Cell::new(OpCounts {
        group_exps: 0,
        hash_calls: 0,
        bytes_hashed: 0,
        verify_calls: 0,
        aead_calls: 0,
    }) };
}

fn bump(f: impl FnOnce(&mut OpCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

pub(crate) fn record_exp() {
    bump(|c| c.group_exps += 1);
}

pub(crate) fn record_hash(bytes: usize) {
    bump(|c| {
        c.hash_calls += 1;
        c.bytes_hashed += bytes as u64;
    });
}

pub(crate) fn record_verify() {
    bump(|c| c.verify_calls += 1);
}

pub(crate) fn record_aead() {
    bump(|c| c.aead_calls += 1);
}

/// Current counter values on this thread.
pub fn snapshot() -> OpCounts {
    COUNTS.with(Cell::get)
}

fn delta(after: OpCounts, before: OpCounts) -> OpCounts {
    OpCounts {
        group_exps: after.group_exps - before.group_exps,
        hash_calls: after.hash_calls - before.hash_calls,
        bytes_hashed: after.bytes_hashed - before.bytes_hashed,
        verify_calls: after.verify_calls - before.verify_calls,
        aead_calls: after.aead_calls - before.aead_calls,
    }
}

/// Cost of one measured section.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cost {
    pub ops: OpCounts,
    pub wall: Duration,
}

impl Cost {
    pub fn wall_ms(&self) -> f64 {
        self.wall.as_secs_f64() * 1e3
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            ops: self.ops + rhs.ops,
            wall: self.wall + rhs.wall,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), Add::add)
    }
}

/// Runs `f` and returns its result with the ops and wall time it consumed.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, Cost) {
    let before = snapshot();
    let start = Instant::now();
    let out = f();
    let wall = start.elapsed();
    let ops = delta(snapshot(), before);
    (out, Cost { ops, wall })
}
