//! Sporadic constrained-deadline task systems.
//!
//! A [`TaskSystem`] is always kept in density rank order: rank 1 is the
//! densest task, ties are broken by ascending external id. Every formula in
//! [`crate::analysis`] and [`crate::mote`] addresses tasks by that 1-based
//! rank; the external `id` is carried along only for reporting.

use std::collections::HashSet;
use std::path::Path;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, serde_q, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u32,
    /// Worst-case execution requirement `C_i`, in work units at speed 1.
    #[serde(with = "serde_q")]
    pub wcet: Rational,
    /// Relative deadline `D_i`.
    #[serde(with = "serde_q")]
    pub deadline: Rational,
    /// Minimum inter-arrival time `T_i`.
    #[serde(rename = "period", with = "serde_q")]
    pub min_interarrival: Rational,
}

impl TaskSpec {
    pub fn new(id: u32, wcet: Rational, deadline: Rational, period: Rational) -> Result<Self> {
        let task = TaskSpec {
            id,
            wcet,
            deadline,
            min_interarrival: period,
        };
        task.validate()?;
        Ok(task)
    }

    /// Checks `0 < C <= D <= T`.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidTask {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !self.wcet.is_positive() {
            return fail("wcet must be positive");
        }
        if self.wcet > self.deadline {
            return fail("wcet exceeds the relative deadline");
        }
        if self.deadline > self.min_interarrival {
            return fail("relative deadline exceeds the period (only constrained deadlines are supported)");
        }
        Ok(())
    }

    pub fn density(&self) -> Rational {
        density(self)
    }
}

/// `C_i / D_i`.
pub fn density(task: &TaskSpec) -> Rational {
    &task.wcet / &task.deadline
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSystem {
    tasks: Vec<TaskSpec>,
    densities: Vec<Rational>,
    /// `suffix[i]` = sum of densities of ranks `i+1..=n` (0-based `i`);
    /// `suffix[n]` = 0.
    suffix: Vec<Rational>,
}

impl TaskSystem {
    /// Validates every task and sorts by non-increasing density, ascending
    /// id on ties.
    pub fn normalize(tasks: Vec<TaskSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for task in &tasks {
            task.validate()?;
            if !seen.insert(task.id) {
                return Err(Error::DuplicateId(task.id));
            }
        }
        let mut keyed: Vec<(Rational, TaskSpec)> = tasks.into_iter().map(|t| (density(&t), t)).collect();
        keyed.sort_by(|(da, a), (db, b)| db.cmp(da).then(a.id.cmp(&b.id)));
        let (densities, tasks): (Vec<_>, Vec<_>) = keyed.into_iter().unzip();

        let mut suffix = vec![Rational::zero(); densities.len() + 1];
        for i in (0..densities.len()).rev() {
            suffix[i] = &suffix[i + 1] + &densities[i];
        }
        Ok(TaskSystem {
            tasks,
            densities,
            suffix,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Tasks in rank order (index 0 is rank 1).
    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    /// Task at 1-based density `rank`.
    pub fn task(&self, rank: usize) -> &TaskSpec {
        &self.tasks[rank - 1]
    }

    /// Density of the task at 1-based `rank`.
    pub fn density(&self, rank: usize) -> &Rational {
        &self.densities[rank - 1]
    }

    pub fn densities(&self) -> &[Rational] {
        &self.densities
    }

    /// `λ_sum(τ^(i))`: total density of ranks `i..=n`. `i = n + 1` gives 0.
    pub fn suffix_density_sum(&self, i: usize) -> Result<Rational> {
        if i == 0 || i > self.len() + 1 {
            return Err(Error::IndexOutOfRange {
                index: i,
                lo: 1,
                hi: self.len() + 1,
            });
        }
        Ok(self.suffix[i - 1].clone())
    }

    pub fn density_sum(&self) -> Rational {
        self.suffix[0].clone()
    }

    /// `λ_max`; zero for an empty system.
    pub fn max_density(&self) -> Rational {
        self.densities.first().cloned().unwrap_or_else(Rational::zero)
    }

    /// Least common multiple of all periods.
    pub fn hyperperiod(&self) -> Result<Rational> {
        let mut periods = self.tasks.iter().map(|t| &t.min_interarrival);
        let first = periods.next().ok_or(Error::EmptySystem)?.clone();
        Ok(periods.fold(first, |acc, p| rational::lcm(&acc, p)))
    }

    /// Adds `delta` to every WCET (speed-transition overhead folded into the
    /// execution requirement) and re-normalizes.
    pub fn inflate_wcet(&self, delta: &Rational) -> Result<TaskSystem> {
        if delta.is_negative() {
            return Err(Error::InvalidParams("transition inflation must be non-negative".into()));
        }
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskSpec {
                wcet: &t.wcet + delta,
                ..t.clone()
            })
            .collect();
        TaskSystem::normalize(tasks)
    }

    pub fn from_json(text: &str) -> Result<TaskSystem> {
        let tasks: Vec<TaskSpec> = serde_json::from_str(text)?;
        TaskSystem::normalize(tasks)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TaskSystem> {
        TaskSystem::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.tasks)?)
    }
}
