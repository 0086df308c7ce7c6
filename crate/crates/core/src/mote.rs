//! On-line slack reclaiming for EDF^(k): per-job initial speeds, the
//! contention horizon `t_next`, and the speed-reduction step applied when a
//! job is allocated to a processor.
//!
//! When job `J` of task `u` is placed on processor `P` at time `t`, the
//! number of processors other jobs may need at `t' >= t` is bounded by the
//! tasks (other than `u`) whose current job may still be running at `t'`,
//! plus every task that may release a job by `t'`. Until that count reaches
//! `m`, `P` belongs to `J` alone, so `J` may be slowed down to finish its
//! worst-case residue exactly when `P` could first be needed (or at its
//! deadline, whichever is earlier).

use num_traits::Zero;

use crate::analysis::OfflineResult;
use crate::error::{Error, Result};
use crate::power::PlatformSpec;
use crate::rational::{int, Instant, Rational};
use crate::sim::job::Job;
use crate::task::TaskSystem;

/// Per-task state seen by the contention bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskContention {
    /// `T_i`.
    pub period: Rational,
    /// `D_i` (relative).
    pub deadline: Rational,
    /// `B_i(t)`: release time of the task's latest job, `-T_i` if none yet.
    pub last_release: Rational,
    /// Remaining worst-case work of the latest job (speed-1 units); zero
    /// when that job has completed or none was released.
    pub residue: Rational,
}

impl TaskContention {
    /// Earliest instant the task may release its next job.
    pub fn next_arrival(&self) -> Rational {
        &self.last_release + &self.period
    }

    pub fn current_deadline(&self) -> Rational {
        &self.last_release + &self.deadline
    }

    pub fn is_active(&self) -> bool {
        self.residue > Rational::zero()
    }
}

/// Snapshot taken when a job of task `subject` is allocated at `now`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContentionView {
    pub now: Rational,
    pub m: usize,
    /// 1-based rank of the task whose job is being allocated.
    pub subject: usize,
    /// Indexed by rank - 1.
    pub tasks: Vec<TaskContention>,
}

impl ContentionView {
    pub fn n(&self) -> usize {
        self.tasks.len()
    }
}

/// Lower bound on the processors free at `at` when ignoring the subject's
/// job; may be negative.
pub fn pi(view: &ContentionView, at: &Rational) -> i64 {
    let mut free = view.m as i64;
    for (idx, task) in view.tasks.iter().enumerate() {
        if *at >= task.next_arrival() {
            free -= 1;
        }
        let pot_active =
            idx + 1 != view.subject && task.is_active() && view.now <= *at && *at < task.current_deadline();
        if pot_active {
            free -= 1;
        }
    }
    free
}

/// Earliest `t' >= now` at which the bound reaches zero; infinite when
/// there are more processors than tasks.
///
/// The bound only changes at possible arrivals and at deadlines of other
/// active jobs. All changes sharing a timestamp are applied before the
/// bound is tested: an arrival counts at its instant and a deadline
/// releases its processor at its instant. Cost is `O(n log n)`.
pub fn next_contention(view: &ContentionView) -> Instant {
    if view.m > view.n() {
        return Instant::Infinity;
    }
    let mut free = view.m as i64;
    let mut changes: Vec<(Rational, i64)> = Vec::with_capacity(2 * view.n());
    for (idx, task) in view.tasks.iter().enumerate() {
        let arrival = task.next_arrival();
        if arrival <= view.now {
            free -= 1;
        } else {
            changes.push((arrival, -1));
        }
        if idx + 1 != view.subject && task.is_active() {
            let deadline = task.current_deadline();
            if deadline > view.now {
                free -= 1;
                changes.push((deadline, 1));
            }
        }
    }
    if free <= 0 {
        return Instant::At(view.now.clone());
    }
    changes.sort_unstable_by(|a, b| a.0.cmp(&b.0));

    let mut i = 0;
    while i < changes.len() {
        let at = &changes[i].0;
        let mut j = i;
        while j < changes.len() && changes[j].0 == *at {
            free += changes[j].1;
            j += 1;
        }
        if free <= 0 {
            return Instant::At(at.clone());
        }
        i = j;
    }
    unreachable!("with m <= n every possible arrival eventually exhausts the processors")
}

/// Speed assigned to a job of task `rank` when it is released: `λ_rank`
/// for privileged tasks, otherwise the EDF^(k_opt) term
/// `λ_k + λ_sum(τ^(k+1)) / (m - k + 1)`. Raised to `s_min` and, on a
/// discrete platform, to the next operating point.
pub fn initial_speed(
    ts: &TaskSystem,
    offline: &OfflineResult,
    platform: &PlatformSpec,
    rank: usize,
) -> Result<Rational> {
    let k = offline.k_opt;
    let raw = if offline.is_privileged(rank) {
        ts.density(rank).clone()
    } else {
        ts.density(k) + ts.suffix_density_sum(k + 1)? / int((platform.m - k + 1) as i64)
    };
    platform.admissible(&raw)
}

/// Speed for `job` after the reduction step at `now`:
/// `max{s_min, min{s, w / (min{D, t_next} - now)}}` with `w` the
/// worst-case residue, then raised to an operating point on discrete
/// platforms. Never exceeds the job's current speed.
pub fn reduce_speed(job: &Job, now: &Rational, t_next: &Instant, platform: &PlatformSpec) -> Result<Rational> {
    let current = job
        .speed
        .as_ref()
        .ok_or_else(|| Error::Contract("job has no speed assigned".into()))?;
    let end = match t_next {
        Instant::At(t) if *t < job.abs_deadline => t,
        _ => &job.abs_deadline,
    };
    let window = end - now;
    if window <= Rational::zero() {
        return Err(Error::Contract(format!(
            "no execution window left for task {} job {} at {now}",
            job.task, job.index
        )));
    }
    let residue = job.worst_case_residue();
    if residue <= Rational::zero() {
        return Err(Error::Contract("reduction requested for a finished job".into()));
    }
    let stretched = std::cmp::min(current.clone(), residue / window);
    platform.admissible(&stretched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::offline_speed;
    use crate::power::PowerModel;
    use crate::rational::ratio;
    use crate::task::TaskSpec;

    fn tc(period: i64, deadline: i64, last_release: i64, residue: Rational) -> TaskContention {
        TaskContention {
            period: int(period),
            deadline: int(deadline),
            last_release: int(last_release),
            residue,
        }
    }

    /// Three tasks, three processors, all active at t = 0 with deadlines
    /// 7, 9, 12 and earliest next arrivals 18, 15, 21.
    pub(crate) fn three_task_view() -> ContentionView {
        ContentionView {
            now: int(0),
            m: 3,
            subject: 3,
            tasks: vec![tc(18, 7, 0, int(2)), tc(15, 9, 0, int(3)), tc(21, 12, 0, int(1))],
        }
    }

    #[test]
    fn three_task_scenario() {
        let view = three_task_view();
        // Two other jobs hold processors until their deadlines.
        assert_eq!(pi(&view, &int(0)), 1);
        assert_eq!(pi(&view, &int(8)), 2);
        assert_eq!(pi(&view, &int(10)), 3);
        assert_eq!(pi(&view, &int(16)), 2);
        let t_next = next_contention(&view);
        assert_eq!(t_next, Instant::At(int(21)));
        assert_eq!(pi(&view, &int(21)), 0);
        // Just before, one processor remains.
        assert_eq!(pi(&view, &int(20)), 1);
    }

    #[test]
    fn all_released_now() {
        // n tasks all released at t = 5, subject active: Π(t, t) = m - (n - 1).
        let view = ContentionView {
            now: int(5),
            m: 4,
            subject: 2,
            tasks: (0..3).map(|_| tc(10, 8, 5, int(1))).collect(),
        };
        assert_eq!(pi(&view, &int(5)), 4 - 2);
        // m > n: infinite horizon.
        assert_eq!(next_contention(&view), Instant::Infinity);
    }

    #[test]
    fn single_task_single_processor() {
        let view = ContentionView {
            now: int(3),
            m: 1,
            subject: 1,
            tasks: vec![tc(10, 6, 2, int(1))],
        };
        assert_eq!(next_contention(&view), Instant::At(int(12)));
    }

    #[test]
    fn past_due_arrival_counts_immediately() {
        // Task 2 may release at any time from 4 on; with m = 1 the processor
        // is contended right away.
        let view = ContentionView {
            now: int(6),
            m: 1,
            subject: 1,
            tasks: vec![tc(10, 10, 6, int(1)), tc(4, 4, 0, int(0))],
        };
        assert_eq!(next_contention(&view), Instant::At(int(6)));
    }

    #[test]
    fn coincident_deadline_and_arrival_cancel() {
        // m = 2: other job's deadline at 5 coincides with task 3's arrival.
        let view = ContentionView {
            now: int(0),
            m: 2,
            subject: 1,
            tasks: vec![tc(20, 20, 0, int(1)), tc(10, 5, 0, int(1)), tc(5, 5, 0, int(0))],
        };
        // At 0: 2 - 1 (task 2 active) = 1. At 5: +1 (deadline) -1 (arrival) = 1.
        // At 10: task 2 arrival -> 0.
        assert_eq!(next_contention(&view), Instant::At(int(10)));
    }

    fn worked_system() -> TaskSystem {
        TaskSystem::normalize(vec![
            TaskSpec::new(1, int(6), int(10), int(10)).unwrap(),
            TaskSpec::new(2, int(5), int(10), int(10)).unwrap(),
            TaskSpec::new(3, int(1), int(10), int(10)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn initial_speed_examples() {
        let ts = worked_system();
        let platform = PlatformSpec::continuous(2, ratio(291, 1000)).unwrap();
        let off = offline_speed(&ts, 2, &platform.s_min).unwrap();
        assert_eq!(off.k_opt, 2);
        assert_eq!(initial_speed(&ts, &off, &platform, 1).unwrap(), ratio(3, 5));
        assert_eq!(initial_speed(&ts, &off, &platform, 2).unwrap(), ratio(3, 5));
        assert_eq!(initial_speed(&ts, &off, &platform, 3).unwrap(), ratio(3, 5));

        let discrete = PlatformSpec::discrete(2, PowerModel::tm5400()).unwrap();
        let off = offline_speed(&ts, 2, &discrete.s_min).unwrap();
        assert_eq!(initial_speed(&ts, &off, &discrete, 2).unwrap(), ratio(714, 1000));

        // k_opt = 1: every task starts at s_ol.
        let off = OfflineResult {
            speed: ratio(9, 10),
            k_opt: 1,
            unclamped: ratio(9, 10),
        };
        for rank in 1..=3 {
            assert_eq!(initial_speed(&ts, &off, &platform, rank).unwrap(), ratio(9, 10));
        }
    }

    fn job(wcet: i64, deadline: i64, speed: Rational) -> Job {
        let mut j = Job::new(1, 1, int(0), int(deadline), int(wcet), int(wcet));
        j.speed = Some(speed);
        j
    }

    #[test]
    fn reduce_speed_examples() {
        let p = PlatformSpec::continuous(2, ratio(291, 1000)).unwrap();
        let j = job(2, 10, ratio(3, 5));
        assert_eq!(
            reduce_speed(&j, &int(0), &Instant::At(int(5)), &p).unwrap(),
            ratio(2, 5)
        );

        let j = job(2, 4, int(1));
        assert_eq!(reduce_speed(&j, &int(0), &Instant::Infinity, &p).unwrap(), ratio(1, 2));

        let j = job(1, 10, int(1));
        assert_eq!(
            reduce_speed(&j, &int(0), &Instant::Infinity, &p).unwrap(),
            ratio(291, 1000)
        );

        // Never raises the speed.
        let j = job(8, 10, ratio(1, 2));
        assert_eq!(
            reduce_speed(&j, &int(0), &Instant::At(int(4)), &p).unwrap(),
            ratio(1, 2)
        );

        // Window already closed.
        let j = job(2, 4, int(1));
        assert!(matches!(
            reduce_speed(&j, &int(4), &Instant::Infinity, &p),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn reduce_speed_quantizes_upward() {
        let p = PlatformSpec::discrete(2, PowerModel::tm5400()).unwrap();
        let j = job(2, 10, ratio(714, 1000));
        // 2/5 -> 0.429
        assert_eq!(
            reduce_speed(&j, &int(0), &Instant::At(int(5)), &p).unwrap(),
            ratio(429, 1000)
        );
    }
}
