use num_traits::Zero;

use crate::rational::Rational;

/// Priority under EDF^(k): lexicographically smaller is more urgent.
///
/// Privileged jobs (rank < k) form class 0 and are ordered among
/// themselves by rank; all other jobs are class 1, ordered by absolute
/// deadline. Rank then job index break remaining ties.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PriorityKey {
    pub class: u8,
    pub deadline: Rational,
    pub task: usize,
    pub job: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Job {
    /// 1-based density rank of the generating task.
    pub task: usize,
    /// 1-based index among the task's jobs.
    pub index: u64,
    pub arrival: Rational,
    pub abs_deadline: Rational,
    pub wcet: Rational,
    pub acet: Rational,
    /// Work completed so far, in speed-1 units.
    pub executed: Rational,
    pub speed: Option<Rational>,
    pub speed_changes: u32,
    /// Set once the reclaiming step has strictly lowered the speed.
    pub mote_applied: bool,
    pub dispatched_once: bool,
    pub completed: bool,
}

impl Job {
    pub fn new(
        task: usize,
        index: u64,
        arrival: Rational,
        abs_deadline: Rational,
        wcet: Rational,
        acet: Rational,
    ) -> Job {
        Job {
            task,
            index,
            arrival,
            abs_deadline,
            wcet,
            acet,
            executed: Rational::zero(),
            speed: None,
            speed_changes: 0,
            mote_applied: false,
            dispatched_once: false,
            completed: false,
        }
    }

    pub fn remaining_work(&self) -> Rational {
        &self.acet - &self.executed
    }

    /// Work left in the worst case (`C_i` minus work done); the only
    /// residue an on-line policy may rely on.
    pub fn worst_case_residue(&self) -> Rational {
        if self.completed {
            Rational::zero()
        } else {
            &self.wcet - &self.executed
        }
    }
}

pub fn priority_key(job: &Job, k_opt: usize) -> PriorityKey {
    if job.task < k_opt {
        PriorityKey {
            class: 0,
            deadline: Rational::zero(),
            task: job.task,
            job: job.index,
        }
    } else {
        PriorityKey {
            class: 1,
            deadline: job.abs_deadline.clone(),
            task: job.task,
            job: job.index,
        }
    }
}
