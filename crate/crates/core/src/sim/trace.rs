//! Schedule traces: the timestamped event log of one simulation run.
//!
//! CSV columns, in order:
//! `time,time_decimal,kind,task,job,cpu,speed,speed_decimal,work,tnext`.
//! `task` is the 1-based density rank, `job` the 1-based job index of that
//! task, `cpu` 0-based. Rationals are written as `p/q`; empty cells mean
//! "not applicable".

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, serde_q, Instant, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Release,
    Dispatch,
    Preempt,
    Complete,
    SpeedSet,
    DeadlineMiss,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Release => "release",
            EventKind::Dispatch => "dispatch",
            EventKind::Preempt => "preempt",
            EventKind::Complete => "complete",
            EventKind::SpeedSet => "speed-set",
            EventKind::DeadlineMiss => "deadline-miss",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "release" => EventKind::Release,
            "dispatch" => EventKind::Dispatch,
            "preempt" => EventKind::Preempt,
            "complete" => EventKind::Complete,
            "speed-set" => EventKind::SpeedSet,
            "deadline-miss" => EventKind::DeadlineMiss,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(with = "serde_q")]
    pub time: Rational,
    pub kind: EventKind,
    pub task: usize,
    pub job: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<usize>,
    /// Dispatch and speed-set: the speed assigned.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_q::option")]
    pub speed: Option<Rational>,
    /// Release: the job's actual execution requirement.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_q::option")]
    pub work: Option<Rational>,
    /// Dispatch under the reclaiming policy: the contention horizon computed
    /// for this allocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tnext: Option<Instant>,
}

impl TraceEvent {
    pub fn new(time: Rational, kind: EventKind, task: usize, job: u64) -> TraceEvent {
        TraceEvent {
            time,
            kind,
            task,
            job,
            cpu: None,
            speed: None,
            work: None,
            tnext: None,
        }
    }

    pub fn on_cpu(mut self, cpu: usize) -> Self {
        self.cpu = Some(cpu);
        self
    }

    pub fn with_speed(mut self, speed: Rational) -> Self {
        self.speed = Some(speed);
        self
    }

    pub fn with_work(mut self, work: Rational) -> Self {
        self.work = Some(work);
        self
    }

    pub fn with_tnext(mut self, tnext: Instant) -> Self {
        self.tnext = Some(tnext);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(with = "serde_q")]
    pub horizon: Rational,
    pub m: usize,
    /// Priority parameter the run used (1 = plain EDF).
    #[serde(default = "default_k_opt")]
    pub k_opt: usize,
    pub events: Vec<TraceEvent>,
}

fn default_k_opt() -> usize {
    1
}

/// A job running on one processor at constant speed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub cpu: usize,
    pub task: usize,
    pub job: u64,
    pub start: Rational,
    pub end: Rational,
    pub speed: Rational,
}

pub const CSV_HEADER: &str = "time,time_decimal,kind,task,job,cpu,speed,speed_decimal,work,tnext";

impl Trace {
    pub fn new(horizon: Rational, m: usize, events: Vec<TraceEvent>) -> Trace {
        Trace {
            horizon,
            m,
            k_opt: 1,
            events,
        }
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn misses(&self) -> usize {
        self.count(EventKind::DeadlineMiss)
    }

    /// Busy pieces per processor. A dispatch opens a piece, a preempt or
    /// completion closes it, a later speed-set splits it; pieces still open
    /// at the end of the log are closed at the horizon.
    pub fn busy_segments(&self) -> Result<Vec<Segment>> {
        let mut open: HashMap<usize, Segment> = HashMap::new();
        let mut out = Vec::new();
        let mut last = None::<&Rational>;
        for e in &self.events {
            if last.is_some_and(|t| e.time < *t) {
                return Err(Error::MalformedTrace(format!(
                    "events out of time order at {}",
                    rational::format(&e.time)
                )));
            }
            last = Some(&e.time);
            let cpu_of = |e: &TraceEvent| {
                e.cpu
                    .ok_or_else(|| Error::MalformedTrace(format!("{} event without cpu", e.kind.as_str())))
            };
            match e.kind {
                EventKind::Dispatch => {
                    let cpu = cpu_of(e)?;
                    let speed = e
                        .speed
                        .clone()
                        .ok_or_else(|| Error::MalformedTrace("dispatch without speed".into()))?;
                    if let Some(prev) = open.get(&cpu) {
                        return Err(Error::MalformedTrace(format!(
                            "cpu {cpu} dispatched at {} while running task {} job {}",
                            rational::format(&e.time),
                            prev.task,
                            prev.job
                        )));
                    }
                    open.insert(
                        cpu,
                        Segment {
                            cpu,
                            task: e.task,
                            job: e.job,
                            start: e.time.clone(),
                            end: e.time.clone(),
                            speed,
                        },
                    );
                }
                EventKind::SpeedSet => {
                    let cpu = cpu_of(e)?;
                    let speed = e
                        .speed
                        .clone()
                        .ok_or_else(|| Error::MalformedTrace("speed-set without speed".into()))?;
                    let seg = open
                        .get_mut(&cpu)
                        .filter(|s| s.task == e.task && s.job == e.job)
                        .ok_or_else(|| Error::MalformedTrace(format!("speed-set on idle cpu {cpu}")))?;
                    if seg.start == e.time {
                        seg.speed = speed;
                    } else {
                        let mut done = seg.clone();
                        done.end = e.time.clone();
                        out.push(done);
                        seg.start = e.time.clone();
                        seg.speed = speed;
                    }
                }
                EventKind::Preempt | EventKind::Complete => {
                    let cpu = cpu_of(e)?;
                    let mut seg = open
                        .remove(&cpu)
                        .filter(|s| s.task == e.task && s.job == e.job)
                        .ok_or_else(|| {
                            Error::MalformedTrace(format!(
                                "{} of task {} job {} not running on cpu {cpu}",
                                e.kind.as_str(),
                                e.task,
                                e.job
                            ))
                        })?;
                    seg.end = e.time.clone();
                    if seg.end > seg.start {
                        out.push(seg);
                    }
                }
                EventKind::Release | EventKind::DeadlineMiss => {}
            }
        }
        let mut rest: Vec<Segment> = open.into_values().collect();
        rest.sort_by_key(|s| s.cpu);
        for mut seg in rest {
            seg.end = self.horizon.clone();
            if seg.end > seg.start {
                out.push(seg);
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let q = |r: &Option<Rational>| r.as_ref().map(rational::format).unwrap_or_default();
        let dec = |r: &Option<Rational>| r.as_ref().map(|r| rational::to_f64(r).to_string()).unwrap_or_default();
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                rational::format(&e.time),
                rational::to_f64(&e.time),
                e.kind.as_str(),
                e.task,
                e.job,
                e.cpu.map(|c| c.to_string()).unwrap_or_default(),
                q(&e.speed),
                dec(&e.speed),
                q(&e.work),
                e.tnext.as_ref().map(|t| t.to_string()).unwrap_or_default(),
            );
        }
        out
    }

    /// Parses the CSV produced by [`Trace::to_csv`]; the horizon and
    /// processor count are not part of the CSV and must be supplied.
    pub fn from_csv(text: &str, horizon: Rational, m: usize) -> Result<Trace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::MalformedTrace("missing or unexpected CSV header".into())),
        }
        let mut events = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let bad = |what: &str| Error::MalformedTrace(format!("row {}: {what}", lineno + 1));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 10 {
                return Err(bad("expected 10 columns"));
            }
            let opt_q = |s: &str| -> Result<Option<Rational>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    rational::parse(s).map(Some)
                }
            };
            events.push(TraceEvent {
                time: rational::parse(cells[0])?,
                kind: EventKind::parse(cells[2]).ok_or_else(|| bad("unknown event kind"))?,
                task: cells[3].parse().map_err(|_| bad("bad task"))?,
                job: cells[4].parse().map_err(|_| bad("bad job"))?,
                cpu: if cells[5].is_empty() {
                    None
                } else {
                    Some(cells[5].parse().map_err(|_| bad("bad cpu"))?)
                },
                speed: opt_q(cells[6])?,
                work: opt_q(cells[8])?,
                tnext: if cells[9].is_empty() {
                    None
                } else {
                    Some(Instant::parse(cells[9])?)
                },
            });
        }
        Ok(Trace::new(horizon, m, events))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Trace> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Trace> {
        Trace::from_json(&std::fs::read_to_string(path)?)
    }
}
