//! Energy-aware multiprocessor scheduling of sporadic real-time tasks.
//!
//! Exact rational analysis of the minimum common speed under global EDF and
//! its EDF^(k) variant, a discrete-event simulator with on-line slack
//! reclaiming, processor power models and an independent trace validator.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod mote;
pub mod oracle;
pub mod power;
pub mod rational;
pub mod sim;
pub mod task;
pub mod workload;

pub use analysis::{edf_min_speed, edfk_speed, offline_speed, required_processors, OfflineResult};
pub use error::{Error, Result};
pub use power::{energy_of_trace, IdlePolicy, PlatformSpec, PowerModel, SpeedMode};
pub use rational::{Instant, Rational};
pub use sim::trace::{EventKind, Trace, TraceEvent};
pub use sim::{simulate, AcetSource, Method, MoteScope, SimConfig, WorstCase};
pub use task::{TaskSpec, TaskSystem};
pub use workload::{generate, GenParams};
