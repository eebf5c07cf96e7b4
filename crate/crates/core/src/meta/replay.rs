use std::collections::VecDeque;

use super::lstm::LstmState;
use crate::{Error, Result};

/// A step that lowered the cost, kept so a later meta-iteration can restart
/// near it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub delta_cost: f64,
    pub hidden: LstmState,
}

/// Bounded deque; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ReplayEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be at least 1"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }

    /// Only strict improvements are accepted; callers are expected to gate.
    pub fn push(&mut self, entry: ReplayEntry) -> Result<()> {
        if !(entry.delta_cost > 0.0 && entry.delta_cost.is_finite()) {
            return Err(Error::config(format!(
                "replay entries need a positive cost decrease, got {}",
                entry.delta_cost
            )));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    /// Entry with the largest decrease, latest wins ties.
    pub fn sample(&self) -> Option<&ReplayEntry> {
        let mut best: Option<&ReplayEntry> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.delta_cost >= b.delta_cost) {
                best = Some(e);
            }
        }
        best
    }
}
