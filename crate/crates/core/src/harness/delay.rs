//! The τ-slot delay between the SPs and the InP.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::sync::Arc;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::online_precoder::PrecoderSet;
use crate::virtualization::Demand;

/// Holds the last `τ+1` (channel, demand) pairs. At slot `t` the only
/// observation handed out is the one of slot `t − τ`. Every access is logged
/// as `(t, slot read)` so tests can check causality.
#[derive(Debug)]
pub struct DelayBuffer {
    tau: usize,
    ring: VecDeque<(Arc<ChannelState>, Arc<Demand>)>,
    access_log: RefCell<Vec<(usize, usize)>>,
}

impl DelayBuffer {
    pub fn new(tau: usize) -> Self {
        Self {
            tau,
            ring: VecDeque::with_capacity(tau + 1),
            access_log: RefCell::new(Vec::new()),
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Latest slot pushed, 0 when empty.
    pub fn current_slot(&self) -> usize {
        self.ring.back().map_or(0, |(c, _)| c.t)
    }

    /// Pushes slot `t`'s pair; slots must arrive in order.
    pub fn push(&mut self, channel: Arc<ChannelState>, demand: Arc<Demand>) -> Result<()> {
        let t = channel.t;
        if t != self.current_slot() + 1 || demand.t != t {
            return Err(Error::Invariant(format!(
                "delay buffer expected slot {}, got channel {} and demand {}",
                self.current_slot() + 1,
                t,
                demand.t
            )));
        }
        self.ring.push_back((channel, demand));
        while self.ring.len() > self.tau + 1 {
            self.ring.pop_front();
        }
        Ok(())
    }

    /// `(H_{t−τ}, D_{t−τ})` for the current slot `t`; `None` while `t ≤ τ`.
    pub fn observed(&self) -> Option<(&ChannelState, &Demand)> {
        let t = self.current_slot();
        if t <= self.tau {
            return None;
        }
        let (c, d) = self.ring.front()?;
        debug_assert_eq!(c.t, t - self.tau);
        self.access_log.borrow_mut().push((t, c.t));
        Some((c, d))
    }

    pub fn access_log(&self) -> Vec<(usize, usize)> {
        self.access_log.borrow().clone()
    }

    /// Accesses that read a slot later than `t − τ`.
    pub fn causality_violations(&self) -> usize {
        self.access_log
            .borrow()
            .iter()
            .filter(|(t, s)| s + self.tau > *t)
            .count()
    }
}

/// The last `τ` precoder sets of one scheme: `V_{t−τ}, …, V_{t−1}`.
#[derive(Debug, Clone)]
pub struct PrecoderHistory {
    tau: usize,
    sets: VecDeque<PrecoderSet>,
}

impl PrecoderHistory {
    pub fn new(tau: usize) -> Self {
        Self {
            tau,
            sets: VecDeque::with_capacity(tau + 1),
        }
    }

    pub fn push(&mut self, set: PrecoderSet) {
        self.sets.push_back(set);
        while self.sets.len() > self.tau {
            self.sets.pop_front();
        }
    }

    /// `(V_{t−τ}, V_{t−1})` for the slot after the newest stored set.
    pub fn delayed_and_prev(&self) -> Result<(&PrecoderSet, &PrecoderSet)> {
        match (self.sets.front(), self.sets.back()) {
            (Some(d), Some(p)) if self.sets.len() == self.tau => Ok((d, p)),
            _ => Err(Error::Invariant(format!(
                "precoder history holds {} of {} slots",
                self.sets.len(),
                self.tau
            ))),
        }
    }
}
