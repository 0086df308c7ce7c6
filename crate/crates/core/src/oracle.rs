//! Independent checkers used as ground truth by tests and the experiment
//! harness. Nothing here reuses the simulator's bookkeeping: the trace is
//! replayed from its events alone, and the contention bound is recomputed
//! naively.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mote::ContentionView;
use crate::power::{PlatformSpec, SpeedMode};
use crate::rational::{self, serde_q, Instant, Rational};
use crate::sim::trace::{EventKind, Trace};
use crate::sim::{simulate_with_policy, Arrivals, Method, MoteScope, SimConfig, SpeedPolicy, WorstCase};
use crate::task::TaskSystem;

/// Largest hyperperiod [`worst_case_feasibility`] simulates by default.
pub const DEFAULT_HYPERPERIOD_BUDGET: i64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Miss {
    pub task: usize,
    pub job: u64,
    #[serde(with = "serde_q")]
    pub deadline: Rational,
    #[serde(with = "serde_q::option")]
    pub completion: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(with = "serde_q")]
    pub time: Rational,
    pub task: usize,
    pub job: u64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub misses: Vec<Miss>,
    /// Completed jobs whose executed work differs from their ACET.
    pub work_violations: Vec<Finding>,
    /// Running set differs from the highest-priority active jobs, or a
    /// processor idles while a job waits.
    pub priority_violations: Vec<Finding>,
    pub overlap_violations: Vec<Finding>,
    /// Speeds outside `[s_min, 1]` or off the operating points, and speed
    /// changes away from a dispatch.
    pub speed_violations: Vec<Finding>,
    /// Jobs with more than two speed assignments.
    pub speed_change_violations: Vec<Finding>,
    /// Jobs preempted before their recorded contention horizon, or
    /// preempted after their speed was lowered.
    pub non_interference_violations: Vec<Finding>,
    pub ok: bool,
}

impl ValidationReport {
    fn finish(mut self) -> ValidationReport {
        self.ok = self.misses.is_empty()
            && self.work_violations.is_empty()
            && self.priority_violations.is_empty()
            && self.overlap_violations.is_empty()
            && self.speed_violations.is_empty()
            && self.speed_change_violations.is_empty()
            && self.non_interference_violations.is_empty();
        self
    }

    /// One line per finding, for diagnostics.
    pub fn summary(&self) -> String {
        if self.ok {
            return "ok".into();
        }
        let mut lines = Vec::new();
        for m in &self.misses {
            lines.push(format!(
                "miss: task {} job {} deadline {} completion {}",
                m.task,
                m.job,
                rational::format(&m.deadline),
                m.completion
                    .as_ref()
                    .map(rational::format)
                    .unwrap_or_else(|| "none".into())
            ));
        }
        for (label, list) in [
            ("work", &self.work_violations),
            ("priority", &self.priority_violations),
            ("overlap", &self.overlap_violations),
            ("speed", &self.speed_violations),
            ("speed-changes", &self.speed_change_violations),
            ("non-interference", &self.non_interference_violations),
        ] {
            for f in list {
                lines.push(format!(
                    "{label}: t={} task {} job {}: {}",
                    rational::format(&f.time),
                    f.task,
                    f.job,
                    f.detail
                ));
            }
        }
        lines.join("\n")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

type JobId = (usize, u64);

struct JobState {
    deadline: Rational,
    acet: Rational,
    executed: Rational,
    completion: Option<Rational>,
    speed_sets: u32,
    reduced: bool,
    /// Dispatch instant and recorded contention horizon of the current run.
    run_start: Option<Rational>,
    protected_until: Option<Instant>,
}

struct Run {
    job: JobId,
    since: Rational,
    speed: Rational,
}

/// Replays `trace` event by event and checks it against the scheduling
/// contracts of `ts` on `platform` under EDF^(k_opt) priorities.
pub fn validate_trace(
    trace: &Trace,
    ts: &TaskSystem,
    platform: &PlatformSpec,
    k_opt: usize,
) -> Result<ValidationReport> {
    if trace.m != platform.m {
        return Err(Error::MalformedTrace(format!(
            "trace has {} processors, platform {}",
            trace.m, platform.m
        )));
    }
    let mut report = ValidationReport::default();
    let mut jobs: HashMap<JobId, JobState> = HashMap::new();
    let mut cpus: Vec<Option<Run>> = (0..platform.m).map(|_| None).collect();

    let finding = |time: &Rational, (task, job): JobId, detail: String| Finding {
        time: time.clone(),
        task,
        job,
        detail,
    };

    let mut i = 0;
    let events = &trace.events;
    while i < events.len() {
        let now = events[i].time.clone();
        if now > trace.horizon {
            return Err(Error::MalformedTrace(format!(
                "event at {} beyond horizon",
                rational::format(&now)
            )));
        }
        let mut j = i;
        while j < events.len() && events[j].time == now {
            let e = &events[j];
            let id = (e.task, e.job);
            if e.task == 0 || e.task > ts.len() {
                return Err(Error::MalformedTrace(format!("unknown task rank {}", e.task)));
            }
            let cpu = e.cpu;
            if let Some(c) = cpu {
                if c >= platform.m {
                    return Err(Error::MalformedTrace(format!("cpu {c} outside platform")));
                }
            }
            let need_cpu = || cpu.ok_or_else(|| Error::MalformedTrace(format!("{} without cpu", e.kind.as_str())));
            match e.kind {
                EventKind::Release => {
                    let acet = e
                        .work
                        .clone()
                        .ok_or_else(|| Error::MalformedTrace("release without work".into()))?;
                    let state = JobState {
                        deadline: &now + &ts.task(e.task).deadline,
                        acet,
                        executed: Rational::zero(),
                        completion: None,
                        speed_sets: 0,
                        reduced: false,
                        run_start: None,
                        protected_until: None,
                    };
                    if jobs.insert(id, state).is_some() {
                        return Err(Error::MalformedTrace(format!(
                            "task {} job {} released twice",
                            e.task, e.job
                        )));
                    }
                }
                EventKind::Dispatch => {
                    let c = need_cpu()?;
                    let speed = e
                        .speed
                        .clone()
                        .ok_or_else(|| Error::MalformedTrace("dispatch without speed".into()))?;
                    let state = jobs.get_mut(&id).ok_or_else(|| {
                        Error::MalformedTrace(format!("dispatch of unreleased task {} job {}", e.task, e.job))
                    })?;
                    if state.completion.is_some() {
                        return Err(Error::MalformedTrace(format!(
                            "dispatch of finished task {} job {}",
                            e.task, e.job
                        )));
                    }
                    if state.reduced {
                        report.non_interference_violations.push(finding(
                            &now,
                            id,
                            "dispatched again after its speed was lowered".into(),
                        ));
                    }
                    if let Some(prev) = &cpus[c] {
                        report.overlap_violations.push(finding(
                            &now,
                            id,
                            format!("cpu {c} still running task {} job {}", prev.job.0, prev.job.1),
                        ));
                    }
                    if let Some(other) = cpus.iter().position(|r| r.as_ref().is_some_and(|r| r.job == id)) {
                        report
                            .overlap_violations
                            .push(finding(&now, id, format!("already running on cpu {other}")));
                    }
                    check_speed(platform, &speed, &now, id, &mut report);
                    state.run_start = Some(now.clone());
                    state.protected_until = e.tnext.clone();
                    if let Some(prev) = cpus[c].take() {
                        close_run(&mut jobs, prev, &now);
                    }
                    cpus[c] = Some(Run {
                        job: id,
                        since: now.clone(),
                        speed,
                    });
                }
                EventKind::SpeedSet => {
                    let c = need_cpu()?;
                    let speed = e
                        .speed
                        .clone()
                        .ok_or_else(|| Error::MalformedTrace("speed-set without speed".into()))?;
                    let run = cpus[c].take().filter(|r| r.job == id).ok_or_else(|| {
                        Error::MalformedTrace(format!("speed-set for task {} job {} not on cpu {c}", e.task, e.job))
                    })?;
                    // Same-instant assignments replace the dispatch speed.
                    close_run(&mut jobs, run, &now);
                    check_speed(platform, &speed, &now, id, &mut report);
                    let state = jobs.get_mut(&id).expect("running jobs are released");
                    if state.run_start.as_ref() != Some(&now) {
                        report
                            .speed_violations
                            .push(finding(&now, id, "speed changed away from a dispatch".into()));
                    }
                    state.speed_sets += 1;
                    if state.speed_sets == 2 {
                        state.reduced = true;
                    }
                    if state.speed_sets > 2 {
                        report.speed_change_violations.push(finding(
                            &now,
                            id,
                            format!("{} speed assignments", state.speed_sets),
                        ));
                    }
                    cpus[c] = Some(Run {
                        job: id,
                        since: now.clone(),
                        speed,
                    });
                }
                EventKind::Preempt | EventKind::Complete => {
                    let c = need_cpu()?;
                    let run = cpus[c].take().filter(|r| r.job == id).ok_or_else(|| {
                        Error::MalformedTrace(format!(
                            "{} of task {} job {} not running on cpu {c}",
                            e.kind.as_str(),
                            e.task,
                            e.job
                        ))
                    })?;
                    close_run(&mut jobs, run, &now);
                    let state = jobs.get_mut(&id).expect("running jobs are released");
                    if e.kind == EventKind::Complete {
                        state.completion = Some(now.clone());
                        if state.executed != state.acet {
                            report.work_violations.push(finding(
                                &now,
                                id,
                                format!(
                                    "executed {} of {}",
                                    rational::format(&state.executed),
                                    rational::format(&state.acet)
                                ),
                            ));
                        }
                    } else {
                        let start = state.run_start.clone().expect("dispatched");
                        let shielded = match &state.protected_until {
                            Some(Instant::At(h)) => now > start && now < *h,
                            Some(Instant::Infinity) => now > start,
                            None => false,
                        };
                        if shielded || state.reduced {
                            report.non_interference_violations.push(finding(
                                &now,
                                id,
                                "preempted inside its contention horizon".into(),
                            ));
                        }
                        if state.executed >= state.acet {
                            report
                                .work_violations
                                .push(finding(&now, id, "preempted with no work left".into()));
                        }
                    }
                    state.run_start = None;
                }
                EventKind::DeadlineMiss => {}
            }
            j += 1;
        }
        check_priorities(&now, &jobs, &cpus, k_opt, &mut report);
        i = j;
    }

    let horizon = trace.horizon.clone();
    for run in cpus.into_iter().flatten() {
        close_run(&mut jobs, run, &horizon);
    }
    let mut ids: Vec<&JobId> = jobs.keys().collect();
    ids.sort();
    for id in ids {
        let state = &jobs[id];
        if state.completion.is_none() && state.executed > state.acet {
            report.work_violations.push(Finding {
                time: horizon.clone(),
                task: id.0,
                job: id.1,
                detail: "executed beyond its ACET".into(),
            });
        }
        let late = match &state.completion {
            Some(t) => *t > state.deadline,
            None => state.deadline <= horizon,
        };
        if late {
            report.misses.push(Miss {
                task: id.0,
                job: id.1,
                deadline: state.deadline.clone(),
                completion: state.completion.clone(),
            });
        }
    }
    Ok(report.finish())
}

fn close_run(jobs: &mut HashMap<JobId, JobState>, run: Run, now: &Rational) {
    let state = jobs.get_mut(&run.job).expect("running jobs are released");
    state.executed += run.speed * (now - run.since);
}

fn check_speed(platform: &PlatformSpec, speed: &Rational, now: &Rational, id: JobId, report: &mut ValidationReport) {
    let detail = if *speed < platform.s_min || *speed > Rational::one() {
        Some(format!("speed {} outside [s_min, 1]", rational::format(speed)))
    } else if let SpeedMode::Discrete(model) = &platform.speed_mode {
        match model {
            crate::power::PowerModel::Table { rows, .. } if !rows.iter().any(|r| r.speed == *speed) => {
                Some(format!("speed {} is not an operating point", rational::format(speed)))
            }
            _ => None,
        }
    } else {
        None
    };
    if let Some(detail) = detail {
        report.speed_violations.push(Finding {
            time: now.clone(),
            task: id.0,
            job: id.1,
            detail,
        });
    }
}

/// After all events at `now`: every running job must outrank every waiting
/// one, and no processor may idle while a job waits.
fn check_priorities(
    now: &Rational,
    jobs: &HashMap<JobId, JobState>,
    cpus: &[Option<Run>],
    k_opt: usize,
    report: &mut ValidationReport,
) {
    // (class, deadline, rank, index); privileged ranks ignore deadlines.
    let key = |id: &JobId, state: &JobState| {
        if id.0 < k_opt {
            (0u8, Rational::zero(), id.0, id.1)
        } else {
            (1u8, state.deadline.clone(), id.0, id.1)
        }
    };
    let running: BTreeMap<_, JobId> = cpus
        .iter()
        .flatten()
        .map(|r| (key(&r.job, &jobs[&r.job]), r.job))
        .collect();
    let waiting = jobs
        .iter()
        .filter(|(id, s)| s.completion.is_none() && s.executed < s.acet && !running.values().any(|r| r == *id))
        .map(|(id, s)| (key(id, s), *id))
        .min();
    let Some((best_waiting, waiting_id)) = waiting else {
        return;
    };
    if running.len() < cpus.len() {
        report.priority_violations.push(Finding {
            time: now.clone(),
            task: waiting_id.0,
            job: waiting_id.1,
            detail: "waits while a processor idles".into(),
        });
    } else if let Some((worst_running, running_id)) = running.iter().next_back() {
        if best_waiting < *worst_running {
            report.priority_violations.push(Finding {
                time: now.clone(),
                task: waiting_id.0,
                job: waiting_id.1,
                detail: format!(
                    "waits while lower-priority task {} job {} runs",
                    running_id.0, running_id.1
                ),
            });
        }
    }
}

/// Reference contention horizon: evaluates the bound at every candidate
/// instant and returns the earliest one where it is at most zero.
pub fn brute_force_tnext(view: &ContentionView) -> Instant {
    let n = view.tasks.len();
    if view.m > n {
        return Instant::Infinity;
    }
    let busy_at = |t: &Rational| -> i64 {
        let mut claimed = 0i64;
        for (idx, x) in view.tasks.iter().enumerate() {
            if *t >= &x.last_release + &x.period {
                claimed += 1;
            }
            if idx + 1 != view.subject
                && x.residue > Rational::zero()
                && view.now <= *t
                && *t < &x.last_release + &x.deadline
            {
                claimed += 1;
            }
        }
        view.m as i64 - claimed
    };
    let mut candidates = vec![view.now.clone()];
    for (idx, x) in view.tasks.iter().enumerate() {
        candidates.push(std::cmp::max(view.now.clone(), &x.last_release + &x.period));
        if idx + 1 != view.subject && x.residue > Rational::zero() {
            let d = &x.last_release + &x.deadline;
            if d >= view.now {
                candidates.push(d);
            }
        }
    }
    candidates
        .into_iter()
        .filter(|t| busy_at(t) <= 0)
        .min()
        .map(Instant::At)
        .expect("every possible arrival together exhausts m <= n processors")
}

/// Simulates synchronous periodic releases with every job at its WCET and
/// every processor at speed `s` under EDF^(k_opt) for one hyperperiod; true
/// iff no deadline is missed.
pub fn worst_case_feasibility(ts: &TaskSystem, m: usize, s: &Rational, k_opt: usize) -> Result<bool> {
    worst_case_feasibility_within(ts, m, s, k_opt, &rational::int(DEFAULT_HYPERPERIOD_BUDGET))
}

pub fn worst_case_feasibility_within(
    ts: &TaskSystem,
    m: usize,
    s: &Rational,
    k_opt: usize,
    budget: &Rational,
) -> Result<bool> {
    if *s <= Rational::zero() || *s > Rational::one() {
        return Err(Error::InvalidParams(format!(
            "speed {} outside (0, 1]",
            rational::format(s)
        )));
    }
    if k_opt == 0 || k_opt > ts.len() {
        return Err(Error::IndexOutOfRange {
            index: k_opt,
            lo: 1,
            hi: ts.len(),
        });
    }
    let hyperperiod = ts.hyperperiod()?;
    if hyperperiod > *budget {
        return Err(Error::HyperperiodBudget {
            hyperperiod: rational::format(&hyperperiod),
            budget: rational::format(budget),
        });
    }
    let platform = PlatformSpec::continuous(m, s.clone())?;
    let policy = SpeedPolicy {
        method: Method::OfflineEdfk,
        k_opt,
        initial: vec![s.clone(); ts.len()],
        reclaim: false,
        offline: None,
    };
    let cfg = SimConfig {
        method: Method::OfflineEdfk,
        horizon: hyperperiod,
        arrivals: Arrivals::SynchronousPeriodic,
        mote_scope: MoteScope::AllJobs,
    };
    let trace = simulate_with_policy(ts, &platform, policy, &cfg, &WorstCase)?;
    Ok(trace.misses() == 0)
}
