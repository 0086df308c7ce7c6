//! Event-driven global preemptive EDF^(k) scheduling on `m` identical
//! processors with per-job speeds.
//!
//! At each event instant the loop handles, in order: completions, deadline
//! checks, releases, and one dispatch pass. The dispatch pass repeatedly
//! takes the most urgent pending job and places it on the lowest-indexed
//! idle processor; if none is idle and the job outranks the least urgent
//! running job, that job is preempted (ties: highest processor index) and
//! returned to the ready queue.

pub mod job;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::analysis::{edf_min_speed, offline_speed, OfflineResult};
use crate::error::{Error, Result};
use crate::mote::{self, ContentionView, TaskContention};
use crate::power::PlatformSpec;
use crate::rational::{self, Instant, Rational};
use crate::task::{TaskSpec, TaskSystem};

use job::{priority_key, Job, PriorityKey};
use trace::{EventKind, Trace, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Every processor at full speed, plain EDF.
    #[serde(rename = "SMAX")]
    Smax,
    /// Uniform speed from the global EDF density bound, plain EDF.
    #[serde(rename = "OFFLINE_EDF")]
    OfflineEdf,
    /// Uniform speed `s_ol`, EDF^(k_opt).
    #[serde(rename = "OFFLINE_EDFK")]
    OfflineEdfk,
    /// EDF^(k_opt) with per-job initial speeds and on-line reclaiming.
    #[serde(rename = "MOTE")]
    Mote,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smax, Method::OfflineEdf, Method::OfflineEdfk, Method::Mote];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Smax => "SMAX",
            Method::OfflineEdf => "OFFLINE_EDF",
            Method::OfflineEdfk => "OFFLINE_EDFK",
            Method::Mote => "MOTE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown method {s:?}")))
    }
}

/// Which jobs the reclaiming step may slow down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoteScope {
    #[default]
    AllJobs,
    /// Only jobs of tasks outside the privileged set.
    NonPrivileged,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arrivals {
    /// Task `i` releases at `0, T_i, 2 T_i, ...`.
    SynchronousPeriodic,
    /// Release instants per task, indexed by rank - 1.
    Explicit(Vec<Vec<Rational>>),
}

/// Actual execution requirement of job `job` (1-based) of the task at
/// `rank`.
pub trait AcetSource {
    fn acet(&self, rank: usize, task: &TaskSpec, job: u64) -> Rational;
}

/// Every job takes its full WCET.
#[derive(Clone, Copy, Debug, Default)]
pub struct WorstCase;

impl AcetSource for WorstCase {
    fn acet(&self, _rank: usize, task: &TaskSpec, _job: u64) -> Rational {
        task.wcet.clone()
    }
}

impl<F> AcetSource for F
where
    F: Fn(usize, &TaskSpec, u64) -> Rational,
{
    fn acet(&self, rank: usize, task: &TaskSpec, job: u64) -> Rational {
        self(rank, task, job)
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub method: Method,
    pub horizon: Rational,
    pub arrivals: Arrivals,
    pub mote_scope: MoteScope,
}

impl SimConfig {
    /// Synchronous periodic arrivals over one hyperperiod.
    pub fn hyperperiod(ts: &TaskSystem, method: Method) -> Result<SimConfig> {
        Ok(SimConfig {
            method,
            horizon: ts.hyperperiod()?,
            arrivals: Arrivals::SynchronousPeriodic,
            mote_scope: MoteScope::default(),
        })
    }
}

/// Priority rule and speeds a method uses on a given platform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeedPolicy {
    pub method: Method,
    pub k_opt: usize,
    /// Release-time speed per rank (index rank - 1).
    pub initial: Vec<Rational>,
    pub reclaim: bool,
    pub offline: Option<OfflineResult>,
}

impl SpeedPolicy {
    pub fn new(ts: &TaskSystem, platform: &PlatformSpec, method: Method) -> Result<SpeedPolicy> {
        let n = ts.len();
        let uniform = |speed: Rational, k_opt: usize, offline: Option<OfflineResult>| SpeedPolicy {
            method,
            k_opt,
            initial: vec![speed; n],
            reclaim: false,
            offline,
        };
        Ok(match method {
            Method::Smax => uniform(Rational::one(), 1, None),
            Method::OfflineEdf => {
                let bound = edf_min_speed(ts, platform.m)?;
                // With one processor per task every job runs as soon as it
                // is released, so full speed always suffices.
                let speed = if bound > Rational::one() && platform.m >= n {
                    Rational::one()
                } else {
                    platform.admissible(&bound)?
                };
                uniform(speed, 1, None)
            }
            Method::OfflineEdfk => {
                let off = offline_speed(ts, platform.m, &platform.s_min)?;
                uniform(platform.admissible(&off.speed)?, off.k_opt, Some(off))
            }
            Method::Mote => {
                let off = offline_speed(ts, platform.m, &platform.s_min)?;
                let initial = (1..=n)
                    .map(|rank| mote::initial_speed(ts, &off, platform, rank))
                    .collect::<Result<Vec<_>>>()?;
                SpeedPolicy {
                    method,
                    k_opt: off.k_opt,
                    initial,
                    reclaim: true,
                    offline: Some(off),
                }
            }
        })
    }
}

struct Running {
    job: usize,
    since: Rational,
    finish: Rational,
}

struct Engine<'a> {
    ts: &'a TaskSystem,
    platform: &'a PlatformSpec,
    policy: SpeedPolicy,
    scope: MoteScope,
    now: Rational,
    jobs: Vec<Job>,
    keys: Vec<PriorityKey>,
    job_cpu: Vec<Option<usize>>,
    last_release: Vec<Rational>,
    latest_job: Vec<Option<usize>>,
    released: Vec<u64>,
    ready: BTreeSet<(PriorityKey, usize)>,
    cpus: Vec<Option<Running>>,
    events: Vec<TraceEvent>,
}

/// Runs `ts` on `platform` under `cfg.method` over `[0, cfg.horizon]`.
///
/// Releases strictly before the horizon are simulated; deadline misses are
/// logged as events and do not stop the run.
pub fn simulate(ts: &TaskSystem, platform: &PlatformSpec, cfg: &SimConfig, acets: &dyn AcetSource) -> Result<Trace> {
    if ts.is_empty() {
        return Err(Error::EmptySystem);
    }
    platform.validate()?;
    let policy = SpeedPolicy::new(ts, platform, cfg.method)?;
    simulate_with_policy(ts, platform, policy, cfg, acets)
}

/// As [`simulate`], with an explicit speed policy.
pub fn simulate_with_policy(
    ts: &TaskSystem,
    platform: &PlatformSpec,
    policy: SpeedPolicy,
    cfg: &SimConfig,
    acets: &dyn AcetSource,
) -> Result<Trace> {
    let n = ts.len();
    let releases = release_schedule(ts, &cfg.arrivals, &cfg.horizon)?;
    let mut pending: BinaryHeap<Reverse<(Rational, usize, usize)>> = releases
        .iter()
        .enumerate()
        .filter(|(_, times)| !times.is_empty())
        .map(|(r, times)| Reverse((times[0].clone(), r, 0)))
        .collect();
    let mut deadlines: BinaryHeap<Reverse<(Rational, usize)>> = BinaryHeap::new();

    let k_opt = policy.k_opt;
    let mut engine = Engine {
        ts,
        platform,
        policy,
        scope: cfg.mote_scope,
        now: Rational::zero(),
        jobs: Vec::new(),
        keys: Vec::new(),
        job_cpu: Vec::new(),
        last_release: ts.tasks().iter().map(|t| -t.min_interarrival.clone()).collect(),
        latest_job: vec![None; n],
        released: vec![0; n],
        ready: BTreeSet::new(),
        cpus: (0..platform.m).map(|_| None).collect(),
        events: Vec::new(),
    };

    loop {
        let mut next: Option<Rational> = None;
        let mut consider = |t: &Rational| {
            if next.as_ref().is_none_or(|n| t < n) {
                next = Some(t.clone());
            }
        };
        if let Some(Reverse((t, _, _))) = pending.peek() {
            consider(t);
        }
        if let Some(Reverse((t, _))) = deadlines.peek() {
            consider(t);
        }
        for run in engine.cpus.iter().flatten() {
            consider(&run.finish);
        }
        let Some(now) = next else { break };
        if now > cfg.horizon {
            break;
        }
        engine.now = now;

        engine.complete_finished();

        while deadlines.peek().is_some_and(|Reverse((t, _))| *t <= engine.now) {
            let Reverse((t, id)) = deadlines.pop().expect("peeked");
            let job = &engine.jobs[id];
            if !job.completed {
                engine
                    .events
                    .push(TraceEvent::new(t, EventKind::DeadlineMiss, job.task, job.index));
            }
        }

        while pending.peek().is_some_and(|Reverse((t, _, _))| *t == engine.now) {
            let Reverse((_, r, pos)) = pending.pop().expect("peeked");
            let id = engine.release(r + 1, acets)?;
            deadlines.push(Reverse((engine.jobs[id].abs_deadline.clone(), id)));
            if let Some(t) = releases[r].get(pos + 1) {
                pending.push(Reverse((t.clone(), r, pos + 1)));
            }
        }

        engine.dispatch()?;
    }

    let mut trace = Trace::new(cfg.horizon.clone(), platform.m, engine.events);
    trace.k_opt = k_opt;
    Ok(trace)
}

fn release_schedule(ts: &TaskSystem, arrivals: &Arrivals, horizon: &Rational) -> Result<Vec<Vec<Rational>>> {
    match arrivals {
        Arrivals::SynchronousPeriodic => Ok(ts
            .tasks()
            .iter()
            .map(|t| {
                let mut out = Vec::new();
                let mut at = Rational::zero();
                while at < *horizon {
                    out.push(at.clone());
                    at += &t.min_interarrival;
                }
                out
            })
            .collect()),
        Arrivals::Explicit(per_task) => {
            if per_task.len() != ts.len() {
                return Err(Error::MalformedArrivals(format!(
                    "{} arrival lists for {} tasks",
                    per_task.len(),
                    ts.len()
                )));
            }
            for (r, times) in per_task.iter().enumerate() {
                let task = &ts.tasks()[r];
                if times.first().is_some_and(|t| *t < Rational::zero()) {
                    return Err(Error::MalformedArrivals(format!("task {} releases before 0", task.id)));
                }
                for w in times.windows(2) {
                    if &w[1] - &w[0] < task.min_interarrival {
                        return Err(Error::MalformedArrivals(format!(
                            "task {} releases at {} and {}, closer than its period",
                            task.id,
                            rational::format(&w[0]),
                            rational::format(&w[1])
                        )));
                    }
                }
            }
            Ok(per_task
                .iter()
                .map(|times| times.iter().filter(|t| *t < horizon).cloned().collect())
                .collect())
        }
    }
}

impl Engine<'_> {
    fn executed_now(&self, id: usize) -> Rational {
        let job = &self.jobs[id];
        match self.job_cpu[id].and_then(|c| self.cpus[c].as_ref()) {
            Some(run) => {
                &job.executed + job.speed.as_ref().expect("running job has a speed") * (&self.now - &run.since)
            }
            None => job.executed.clone(),
        }
    }

    fn complete_finished(&mut self) {
        for cpu in 0..self.cpus.len() {
            if self.cpus[cpu].as_ref().is_some_and(|r| r.finish == self.now) {
                let run = self.cpus[cpu].take().expect("checked");
                let job = &mut self.jobs[run.job];
                job.executed = job.acet.clone();
                job.completed = true;
                self.job_cpu[run.job] = None;
                self.events
                    .push(TraceEvent::new(self.now.clone(), EventKind::Complete, job.task, job.index).on_cpu(cpu));
            }
        }
    }

    fn release(&mut self, rank: usize, acets: &dyn AcetSource) -> Result<usize> {
        let task = self.ts.task(rank);
        self.released[rank - 1] += 1;
        let index = self.released[rank - 1];
        let acet = acets.acet(rank, task, index);
        if acet <= Rational::zero() || acet > task.wcet {
            return Err(Error::Contract(format!(
                "ACET {} of task {} job {index} outside (0, C]",
                rational::format(&acet),
                task.id
            )));
        }
        let mut job = Job::new(
            rank,
            index,
            self.now.clone(),
            &self.now + &task.deadline,
            task.wcet.clone(),
            acet.clone(),
        );
        job.speed = Some(self.policy.initial[rank - 1].clone());
        let id = self.jobs.len();
        let key = priority_key(&job, self.policy.k_opt);
        self.ready.insert((key.clone(), id));
        self.keys.push(key);
        self.jobs.push(job);
        self.job_cpu.push(None);
        self.last_release[rank - 1] = self.now.clone();
        self.latest_job[rank - 1] = Some(id);
        self.events
            .push(TraceEvent::new(self.now.clone(), EventKind::Release, rank, index).with_work(acet));
        Ok(id)
    }

    fn dispatch(&mut self) -> Result<()> {
        while let Some((key, id)) = self.ready.first().cloned() {
            let cpu = match self.cpus.iter().position(Option::is_none) {
                Some(idle) => idle,
                None => {
                    let (victim_cpu, victim_key) = self
                        .cpus
                        .iter()
                        .enumerate()
                        .map(|(c, r)| (c, &self.keys[r.as_ref().expect("all busy").job]))
                        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
                        .expect("m >= 1");
                    if key >= *victim_key {
                        break;
                    }
                    self.preempt(victim_cpu);
                    victim_cpu
                }
            };
            self.ready.remove(&(key, id));
            self.allocate(id, cpu)?;
        }
        Ok(())
    }

    fn preempt(&mut self, cpu: usize) {
        let run = self.cpus[cpu].take().expect("preempting a busy cpu");
        let job = &mut self.jobs[run.job];
        let speed = job.speed.clone().expect("running job has a speed");
        job.executed += speed * (&self.now - &run.since);
        self.job_cpu[run.job] = None;
        self.ready.insert((self.keys[run.job].clone(), run.job));
        self.events
            .push(TraceEvent::new(self.now.clone(), EventKind::Preempt, job.task, job.index).on_cpu(cpu));
    }

    fn contention_view(&self, subject: usize) -> ContentionView {
        let tasks = self
            .ts
            .tasks()
            .iter()
            .enumerate()
            .map(|(r, t)| TaskContention {
                period: t.min_interarrival.clone(),
                deadline: t.deadline.clone(),
                last_release: self.last_release[r].clone(),
                residue: match self.latest_job[r] {
                    Some(id) if !self.jobs[id].completed => &self.jobs[id].wcet - self.executed_now(id),
                    _ => Rational::zero(),
                },
            })
            .collect();
        ContentionView {
            now: self.now.clone(),
            m: self.platform.m,
            subject,
            tasks,
        }
    }

    fn allocate(&mut self, id: usize, cpu: usize) -> Result<()> {
        let mut assigned = Vec::new();
        if !self.jobs[id].dispatched_once {
            let job = &mut self.jobs[id];
            job.dispatched_once = true;
            job.speed_changes = 1;
            assigned.push(job.speed.clone().expect("speed set at release"));
        }

        let mut horizon = None;
        let rank = self.jobs[id].task;
        let in_scope = match self.scope {
            MoteScope::AllJobs => true,
            MoteScope::NonPrivileged => rank >= self.policy.k_opt,
        };
        if self.policy.reclaim && in_scope {
            let t_next = mote::next_contention(&self.contention_view(rank));
            let open_window = match &t_next {
                Instant::At(t) => *t > self.now && self.jobs[id].abs_deadline > self.now,
                Instant::Infinity => self.jobs[id].abs_deadline > self.now,
            };
            if open_window {
                let reduced = mote::reduce_speed(&self.jobs[id], &self.now, &t_next, self.platform)?;
                let job = &mut self.jobs[id];
                if reduced < *job.speed.as_ref().expect("speed set at release") {
                    job.speed = Some(reduced.clone());
                    job.speed_changes += 1;
                    job.mote_applied = true;
                    assigned.push(reduced);
                }
            }
            horizon = Some(t_next);
        }

        let job = &self.jobs[id];
        let speed = job.speed.clone().expect("speed set at release");
        let finish = &self.now + job.remaining_work() / &speed;
        let mut dispatch = TraceEvent::new(self.now.clone(), EventKind::Dispatch, job.task, job.index)
            .on_cpu(cpu)
            .with_speed(speed);
        if let Some(h) = horizon {
            dispatch = dispatch.with_tnext(h);
        }
        self.events.push(dispatch);
        for s in assigned {
            self.events.push(
                TraceEvent::new(self.now.clone(), EventKind::SpeedSet, job.task, job.index)
                    .on_cpu(cpu)
                    .with_speed(s),
            );
        }
        self.job_cpu[id] = Some(cpu);
        self.cpus[cpu] = Some(Running {
            job: id,
            since: self.now.clone(),
            finish,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn system(params: &[(i64, i64, i64)]) -> TaskSystem {
        TaskSystem::normalize(
            params
                .iter()
                .enumerate()
                .map(|(i, &(c, d, t))| TaskSpec::new(i as u32 + 1, int(c), int(d), int(t)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn run(ts: &TaskSystem, platform: &PlatformSpec, method: Method, horizon: i64) -> Trace {
        let cfg = SimConfig {
            method,
            horizon: int(horizon),
            arrivals: Arrivals::SynchronousPeriodic,
            mote_scope: MoteScope::AllJobs,
        };
        simulate(ts, platform, &cfg, &WorstCase).unwrap()
    }

    #[test]
    fn single_task_at_full_speed() {
        let ts = system(&[(2, 4, 4)]);
        let p = PlatformSpec::continuous(1, ratio(1, 10)).unwrap();
        let trace = run(&ts, &p, Method::Smax, 8);
        let segs = trace.busy_segments().unwrap();
        let spans: Vec<_> = segs.iter().map(|s| (s.start.clone(), s.end.clone())).collect();
        assert_eq!(spans, vec![(int(0), int(2)), (int(4), int(6))]);
        assert_eq!(trace.misses(), 0);
    }

    #[test]
    fn lower_priority_job_is_preempted() {
        // m = 1: long job (deadline 10) is preempted by a short-deadline
        // release at 1.
        let ts = system(&[(4, 10, 10), (1, 2, 10)]);
        let p = PlatformSpec::continuous(1, ratio(1, 10)).unwrap();
        let cfg = SimConfig {
            method: Method::Smax,
            horizon: int(10),
            arrivals: Arrivals::Explicit(vec![vec![int(1)], vec![int(0)]]),
            mote_scope: MoteScope::AllJobs,
        };
        // Rank 1 is the (1, 2, 10) task (density 1/2), rank 2 the long one.
        let trace = simulate(&ts, &p, &cfg, &WorstCase).unwrap();
        assert_eq!(trace.count(EventKind::Preempt), 1);
        let done: Vec<_> = trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Complete)
            .map(|e| (e.task, e.time.clone()))
            .collect();
        assert_eq!(done, vec![(1, int(2)), (2, int(5))]);
    }

    #[test]
    fn misses_are_logged_not_fatal() {
        let ts = system(&[(3, 4, 4), (3, 4, 4)]);
        let p = PlatformSpec::continuous(1, ratio(1, 10)).unwrap();
        let trace = run(&ts, &p, Method::Smax, 8);
        assert!(trace.misses() > 0);
    }

    #[test]
    fn malformed_arrivals_are_rejected() {
        let ts = system(&[(1, 4, 4)]);
        let p = PlatformSpec::continuous(1, ratio(1, 10)).unwrap();
        let cfg = SimConfig {
            method: Method::Smax,
            horizon: int(10),
            arrivals: Arrivals::Explicit(vec![vec![int(0), int(3)]]),
            mote_scope: MoteScope::AllJobs,
        };
        assert!(matches!(
            simulate(&ts, &p, &cfg, &WorstCase),
            Err(Error::MalformedArrivals(_))
        ));
    }

    #[test]
    fn worked_system_offline_edfk() {
        // Densities 3/5, 1/2, 1/10 on two processors at s_ol = 3/5.
        let ts = system(&[(3, 5, 5), (4, 8, 8), (1, 10, 10)]);
        let p = PlatformSpec::continuous(2, ratio(291, 1000)).unwrap();
        let policy = SpeedPolicy::new(&ts, &p, Method::OfflineEdfk).unwrap();
        assert_eq!(policy.k_opt, 2);
        assert_eq!(policy.initial, vec![ratio(3, 5); 3]);
        let trace = run(&ts, &p, Method::OfflineEdfk, 40);
        assert_eq!(trace.misses(), 0);
        assert_eq!(trace.k_opt, 2);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("fast".parse::<Method>().is_err());
    }
}
