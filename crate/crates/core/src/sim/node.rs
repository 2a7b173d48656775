use rand::Rng;

use crate::mac::{Deferral, StageSchedule};

/// Per-node MAC state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Packets buffered, head-of-line included.
    pub queue_len: u32,
    /// Current backoff stage, `1..=m`.
    pub stage: usize,
    /// Backoff counter; the node transmits in a slot that starts with `bc = 0`.
    pub bc: u32,
    /// Deferral counter: busy slots still tolerated at this stage.
    pub dc: Deferral,
    /// When the head-of-line packet started service, µs.
    pub service_start: f64,
}

/// What a waiting node did in response to a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reaction {
    CountedDown,
    Deferred,
}

impl NodeState {
    pub fn idle(queue_len: u32) -> Self {
        NodeState {
            queue_len,
            stage: 1,
            bc: 0,
            dc: Deferral::Infinite,
            service_start: 0.0,
        }
    }

    /// Enters `stage` with a fresh backoff draw and a reset deferral counter.
    pub fn enter_stage<R: Rng>(&mut self, stage: usize, schedule: &StageSchedule, rng: &mut R) {
        let s = schedule.stage(stage);
        self.stage = stage;
        self.bc = rng.gen_range(0..=s.window);
        self.dc = s.deferral;
    }

    /// Stage advance after a collision or a defer.
    pub fn fail<R: Rng>(&mut self, schedule: &StageSchedule, rng: &mut R) {
        let next = schedule.next_stage(self.stage);
        self.enter_stage(next, schedule, rng);
    }

    /// Reaction of a backlogged, non-transmitting node (`bc >= 1`) to a slot.
    ///
    /// The backoff counter runs down on busy slots as well as idle ones; a
    /// busy slot overheard with the deferral counter at zero triggers a defer,
    /// which redraws the backoff instead of decrementing it.
    pub fn observe<R: Rng>(&mut self, busy: bool, schedule: &StageSchedule, rng: &mut R) -> Reaction {
        debug_assert!(self.bc >= 1);
        if busy {
            match self.dc {
                Deferral::Finite(0) => {
                    self.fail(schedule, rng);
                    return Reaction::Deferred;
                }
                Deferral::Finite(k) => self.dc = Deferral::Finite(k - 1),
                Deferral::Infinite => {}
            }
        }
        self.bc -= 1;
        Reaction::CountedDown
    }
}
