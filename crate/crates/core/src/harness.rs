//! Batch energy comparison: generate systems, simulate every method on the
//! same releases and execution times, integrate energy per power model and
//! report savings relative to running everything at full speed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{edf_min_speed, offline_speed, required_processors};
use crate::error::{Error, Result};
use crate::oracle::validate_trace;
use crate::power::{energy_of_trace, IdlePolicy, PlatformSpec, PowerModel};
use crate::rational::{self, ratio, serde_q, Rational};
use crate::sim::{simulate, Method, MoteScope, SimConfig};
use crate::task::TaskSystem;
use crate::workload::{generate, mix_seed, GenParams, SeededAcets};

const ACET_SALT: u64 = 0xACE7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedModeChoice {
    /// Operating points of each (table) power model; `s_min` is the
    /// model's lowest speed.
    #[default]
    Discrete,
    /// Any speed in `[s_min, 1]`.
    Continuous,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub report_json: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
    pub plot_data: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gen: GenParams,
    pub systems: usize,
    /// Preset names (`tm5400`, `sa1100`, `cubic`) or JSON model files.
    pub power_models: Vec<String>,
    pub methods: Vec<Method>,
    pub idle_policy: IdlePolicy,
    pub speed_mode: SpeedModeChoice,
    /// Lowest speed in continuous mode.
    #[serde(with = "serde_q")]
    pub s_min: Rational,
    /// Whether reclaiming also slows jobs of the privileged tasks.
    pub mote_privileged: bool,
    /// Added to every WCET to account for speed-transition overhead.
    #[serde(with = "serde_q")]
    pub transition_inflation: Rational,
    /// Replay every trace through the validator; a failing system is
    /// reported and excluded from the averages.
    pub validate: bool,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gen: GenParams::default(),
            systems: 100,
            power_models: vec!["sa1100".into(), "tm5400".into()],
            methods: Method::ALL.to_vec(),
            idle_policy: IdlePolicy::default(),
            speed_mode: SpeedModeChoice::default(),
            s_min: ratio(1, 10),
            mote_privileged: true,
            transition_inflation: Rational::zero(),
            validate: true,
            output: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        if self.systems == 0 {
            return Err(Error::InvalidParams("systems must be positive".into()));
        }
        if self.power_models.is_empty() {
            return Err(Error::InvalidParams("at least one power model is required".into()));
        }
        if !self.methods.contains(&Method::Smax) {
            return Err(Error::InvalidParams("SMAX is required as the savings baseline".into()));
        }
        if self.transition_inflation < Rational::zero() {
            return Err(Error::InvalidParams("transition_inflation must be non-negative".into()));
        }
        for name in &self.power_models {
            let model = PowerModel::resolve(name)?;
            // Tables only price their own operating points.
            if self.speed_mode == SpeedModeChoice::Continuous && matches!(model, PowerModel::Table { .. }) {
                return Err(Error::InvalidParams(format!(
                    "power model {name} has discrete operating points; continuous speeds need an analytic model"
                )));
            }
        }
        Ok(())
    }

    fn mote_scope(&self) -> MoteScope {
        if self.mote_privileged {
            MoteScope::AllJobs
        } else {
            MoteScope::NonPrivileged
        }
    }

    fn platform(&self, m: usize, model: &PowerModel) -> Result<PlatformSpec> {
        let p = match self.speed_mode {
            SpeedModeChoice::Discrete => PlatformSpec::discrete(m, model.clone())?,
            SpeedModeChoice::Continuous => PlatformSpec::continuous(m, self.s_min.clone())?,
        };
        Ok(p.with_idle(self.idle_policy))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub model: String,
    pub method: Method,
    pub energy: f64,
    /// `100 (1 - E / E_SMAX)`.
    pub savings: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: usize,
    pub seed: u64,
    pub n: usize,
    #[serde(with = "serde_q")]
    pub lambda_sum: Rational,
    pub m: usize,
    /// Global EDF density bound (may exceed 1 when `m = n`).
    #[serde(with = "serde_q")]
    pub edf_speed: Rational,
    /// Offline EDF^(k) speed for the first model's `s_min`.
    #[serde(with = "serde_q")]
    pub s_ol: Rational,
    pub k_opt: usize,
    pub energies: Vec<EnergyEntry>,
    /// Set when a simulation failed or a trace did not validate; the row
    /// then carries no energies.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub method: Method,
    pub mean_savings: f64,
    /// Sample standard deviation across systems.
    pub std_savings: f64,
    pub systems: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub seed: u64,
    pub systems: Vec<SystemRow>,
    pub summary: Vec<SummaryRow>,
}

impl EnergyReport {
    pub fn failures(&self) -> impl Iterator<Item = &SystemRow> {
        self.systems.iter().filter(|r| r.error.is_some())
    }

    pub fn mean_savings(&self, model: &str, method: Method) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.model == model && s.method == method)
            .map(|s| s.mean_savings)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<EnergyReport> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per (system, model, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "system,seed,n,lambda_sum,lambda_sum_decimal,m,edf_speed,edf_speed_decimal,s_ol,s_ol_decimal,k_opt,model,method,energy,savings\n",
        );
        for row in &self.systems {
            for e in &row.energies {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    row.system,
                    row.seed,
                    row.n,
                    rational::format(&row.lambda_sum),
                    rational::to_f64(&row.lambda_sum),
                    row.m,
                    rational::format(&row.edf_speed),
                    rational::to_f64(&row.edf_speed),
                    rational::format(&row.s_ol),
                    rational::to_f64(&row.s_ol),
                    row.k_opt,
                    e.model,
                    e.method,
                    e.energy,
                    e.savings
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model,method,mean_savings,std_savings,systems\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.model, s.method, s.mean_savings, s.std_savings, s.systems
            );
        }
        out
    }

    /// Tidy savings table for external plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("system,method,model,savings\n");
        for row in &self.systems {
            for e in &row.energies {
                let _ = writeln!(out, "{},{},{},{}", row.system, e.method, e.model, e.savings);
            }
        }
        out
    }

    /// Writes every output named in `paths`.
    pub fn write_outputs(&self, paths: &OutputPaths) -> Result<()> {
        if let Some(p) = &paths.report_json {
            std::fs::write(p, self.to_json()?)?;
        }
        if let Some(p) = &paths.report_csv {
            std::fs::write(p, self.to_csv())?;
        }
        if let Some(p) = &paths.summary_csv {
            std::fs::write(p, self.summary_csv())?;
        }
        if let Some(p) = &paths.plot_data {
            std::fs::write(p, self.plot_data())?;
        }
        Ok(())
    }
}

/// Runs the whole batch. Systems are processed in parallel on the current
/// rayon pool; the report is assembled in system order and is identical
/// for identical configurations.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<EnergyReport> {
    cfg.validate()?;
    let models = cfg
        .power_models
        .iter()
        .map(|name| PowerModel::resolve(name))
        .collect::<Result<Vec<_>>>()?;
    let systems: Vec<SystemRow> = (0..cfg.systems)
        .into_par_iter()
        .map(|i| run_system(cfg, &models, i))
        .collect::<Result<_>>()?;
    Ok(EnergyReport {
        seed: cfg.gen.seed,
        summary: summarize(cfg, &models, &systems),
        systems,
    })
}

/// Generates and evaluates system `index`. Configuration problems are
/// errors; per-system simulation or validation failures land in the row.
pub fn run_system(cfg: &ExperimentConfig, models: &[PowerModel], index: usize) -> Result<SystemRow> {
    let seed = mix_seed(cfg.gen.seed, index as u64);
    let generated = generate(&cfg.gen.clone().with_seed(seed))?;
    let ts = if cfg.transition_inflation.is_zero() {
        generated
    } else {
        generated.inflate_wcet(&cfg.transition_inflation)?
    };
    let m = required_processors(&ts)?;
    let first = cfg.platform(m, &models[0])?;
    let offline = offline_speed(&ts, m, &first.s_min)?;
    let mut row = SystemRow {
        system: index,
        seed,
        n: ts.len(),
        lambda_sum: ts.density_sum(),
        m,
        edf_speed: edf_min_speed(&ts, m)?,
        s_ol: offline.speed,
        k_opt: offline.k_opt,
        energies: Vec::new(),
        error: None,
    };
    let acets = SeededAcets::new(mix_seed(seed, ACET_SALT), cfg.gen.acet_ratio_range.clone());
    match evaluate(cfg, models, &ts, m, &acets) {
        Ok(energies) => row.energies = energies,
        Err(e) => row.error = Some(e),
    }
    Ok(row)
}

fn evaluate(
    cfg: &ExperimentConfig,
    models: &[PowerModel],
    ts: &TaskSystem,
    m: usize,
    acets: &SeededAcets,
) -> std::result::Result<Vec<EnergyEntry>, String> {
    let mut out = Vec::new();
    for model in models {
        let platform = cfg.platform(m, model).map_err(|e| e.to_string())?;
        let mut energies = Vec::new();
        for &method in &cfg.methods {
            let mut sim = SimConfig::hyperperiod(ts, method).map_err(|e| e.to_string())?;
            sim.mote_scope = cfg.mote_scope();
            let trace =
                simulate(ts, &platform, &sim, acets).map_err(|e| format!("{method} on {}: {e}", model.name()))?;
            if cfg.validate {
                let report = validate_trace(&trace, ts, &platform, trace.k_opt)
                    .map_err(|e| format!("{method} on {}: {e}", model.name()))?;
                if !report.ok {
                    return Err(format!(
                        "{method} on {} failed validation:\n{}",
                        model.name(),
                        report.summary()
                    ));
                }
            }
            let energy = energy_of_trace(&trace, model, &platform).map_err(|e| e.to_string())?;
            energies.push((method, energy));
        }
        let baseline = energies
            .iter()
            .find(|(m, _)| *m == Method::Smax)
            .map(|(_, e)| *e)
            .expect("SMAX is validated to be present");
        for (method, energy) in energies {
            let savings = if method == Method::Smax || baseline == 0.0 {
                0.0
            } else {
                100.0 * (1.0 - energy / baseline)
            };
            out.push(EnergyEntry {
                model: model.name(),
                method,
                energy,
                savings,
            });
        }
    }
    Ok(out)
}

fn summarize(cfg: &ExperimentConfig, models: &[PowerModel], rows: &[SystemRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for model in models {
        let name = model.name();
        for &method in &cfg.methods {
            let values: Vec<f64> = rows
                .iter()
                .flat_map(|r| &r.energies)
                .filter(|e| e.model == name && e.method == method)
                .map(|e| e.savings)
                .collect();
            let (mean, std) = mean_std(&values);
            out.push(SummaryRow {
                model: name.clone(),
                method,
                mean_savings: mean,
                std_savings: std,
                systems: values.len(),
            });
        }
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Convenience for small runs: `systems` systems with default settings.
pub fn quick_config(systems: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        systems,
        gen: GenParams::default().with_seed(seed),
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    fn small(systems: usize) -> ExperimentConfig {
        ExperimentConfig {
            gen: GenParams {
                n_range: (5, 12),
                lambda_sum_range: crate::workload::Interval::new(int(1), int(3)),
                ..GenParams::default().with_seed(11)
            },
            ..quick_config(systems, 11)
        }
    }

    #[test]
    fn smax_only_saves_nothing() {
        let cfg = ExperimentConfig {
            methods: vec![Method::Smax],
            ..small(3)
        };
        let report = run_comparison(&cfg).unwrap();
        for s in &report.summary {
            assert_eq!(s.mean_savings, 0.0);
            assert_eq!(s.systems, 3);
        }
    }

    #[test]
    fn smax_is_required() {
        let cfg = ExperimentConfig {
            methods: vec![Method::Mote],
            ..small(1)
        };
        assert!(matches!(run_comparison(&cfg), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn continuous_speeds_reject_table_models() {
        let mut cfg = ExperimentConfig {
            speed_mode: SpeedModeChoice::Continuous,
            ..small(2)
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidParams(_))));
        cfg.power_models = vec!["cubic".into()];
        let report = run_comparison(&cfg).unwrap();
        assert_eq!(report.failures().count(), 0);
        assert!(report.mean_savings("cubic", Method::Mote).is_some());
    }

    #[test]
    fn report_is_deterministic_and_ordered() {
        let cfg = small(6);
        let a = run_comparison(&cfg).unwrap();
        let b = run_comparison(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.systems.iter().enumerate().all(|(i, r)| r.system == i));
        assert_eq!(a.failures().count(), 0);
    }

    #[test]
    fn report_round_trips_json() {
        let report = run_comparison(&small(2)).unwrap();
        assert_eq!(EnergyReport::from_json(&report.to_json().unwrap()).unwrap(), report);
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let report = EnergyReport {
            seed: 0,
            systems: vec![],
            summary: vec![],
        };
        assert_eq!(report.to_csv().lines().count(), 1);
        assert_eq!(report.plot_data(), "system,method,model,savings\n");
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let cfg = ExperimentConfig::from_json(r#"{"systems": 7, "gen": {"seed": 3}}"#).unwrap();
        assert_eq!(cfg.systems, 7);
        assert_eq!(cfg.gen.seed, 3);
        assert_eq!(cfg.gen.n_range, (5, 40));
        assert_eq!(cfg.methods, Method::ALL.to_vec());
    }
}
