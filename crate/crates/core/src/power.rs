//! Processor speeds, power models and energy integration.

use std::path::Path;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, ratio, serde_q, Rational};
use crate::sim::trace::Trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    /// Clock frequency in MHz.
    pub freq: f64,
    /// Core voltage in V.
    pub volt: f64,
    /// Power as a percentage of the power at full speed.
    pub power: f64,
    #[serde(with = "serde_q")]
    pub speed: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPower {
    pub c0: f64,
    pub c1: f64,
    pub gamma: f64,
}

/// Power as a function of speed: either a table of discrete operating
/// points, or `c0 + c1 * s^gamma` over a continuous speed range.
#[derive(Clone, Debug, PartialEq)]
pub enum PowerModel {
    Table { name: String, rows: Vec<PowerRow> },
    Analytic(AnalyticPower),
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum PowerModelFile {
    Table { name: String, rows: Vec<PowerRow> },
    Analytic { analytic: AnalyticPower },
}

fn row(freq: f64, volt: f64, power: f64, speed: Rational) -> PowerRow {
    PowerRow {
        freq,
        volt,
        power,
        speed,
    }
}

impl PowerModel {
    /// Transmeta Crusoe TM5400 operating points.
    pub fn tm5400() -> PowerModel {
        PowerModel::Table {
            name: "tm5400".into(),
            rows: vec![
                row(200.0, 1.10, 12.70, ratio(286, 1000)),
                row(300.0, 1.25, 24.60, ratio(429, 1000)),
                row(400.0, 1.40, 41.14, ratio(571, 1000)),
                row(500.0, 1.50, 59.03, ratio(714, 1000)),
                row(600.0, 1.60, 80.59, ratio(857, 1000)),
                row(700.0, 1.65, 100.0, Rational::one()),
            ],
        }
    }

    /// Intel StrongARM SA-1100 operating points.
    pub fn sa1100() -> PowerModel {
        PowerModel::Table {
            name: "sa1100".into(),
            rows: vec![
                row(60.0, 0.80, 9.44, ratio(291, 1000)),
                row(75.0, 0.82, 11.8, ratio(364, 1000)),
                row(90.0, 0.90, 15.0, ratio(437, 1000)),
                row(105.0, 0.95, 19.8, ratio(510, 1000)),
                row(120.0, 1.08, 33.0, ratio(583, 1000)),
                row(135.0, 1.10, 33.6, ratio(655, 1000)),
                row(150.0, 1.15, 39.9, ratio(728, 1000)),
                row(165.0, 1.20, 50.0, ratio(801, 1000)),
                row(180.0, 1.30, 63.2, ratio(874, 1000)),
                row(195.0, 1.42, 78.9, ratio(947, 1000)),
                row(206.0, 1.50, 100.0, Rational::one()),
            ],
        }
    }

    /// `c1 * s^3` with `c1 = 100`.
    pub fn cubic() -> PowerModel {
        PowerModel::Analytic(AnalyticPower {
            c0: 0.0,
            c1: 100.0,
            gamma: 3.0,
        })
    }

    /// Built-in models by name: `tm5400`, `sa1100`, `cubic`.
    pub fn preset(name: &str) -> Option<PowerModel> {
        match name {
            "tm5400" => Some(PowerModel::tm5400()),
            "sa1100" => Some(PowerModel::sa1100()),
            "cubic" => Some(PowerModel::cubic()),
            _ => None,
        }
    }

    /// Resolves a preset name, or else reads a JSON model file at that path.
    pub fn resolve(name_or_path: &str) -> Result<PowerModel> {
        match PowerModel::preset(name_or_path) {
            Some(m) => Ok(m),
            None => PowerModel::load(name_or_path),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PowerModel::Table { name, .. } => name.clone(),
            PowerModel::Analytic(_) if *self == PowerModel::cubic() => "cubic".into(),
            PowerModel::Analytic(a) => format!("analytic(c0={},c1={},gamma={})", a.c0, a.c1, a.gamma),
        }
    }

    pub fn from_json(text: &str) -> Result<PowerModel> {
        let model = match serde_json::from_str::<PowerModelFile>(text)? {
            PowerModelFile::Table { name, mut rows } => {
                rows.sort_by(|a, b| a.speed.cmp(&b.speed));
                PowerModel::Table { name, rows }
            }
            PowerModelFile::Analytic { analytic } => PowerModel::Analytic(analytic),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PowerModel> {
        PowerModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = match self.clone() {
            PowerModel::Table { name, rows } => PowerModelFile::Table { name, rows },
            PowerModel::Analytic(analytic) => PowerModelFile::Analytic { analytic },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPowerModel(msg));
        match self {
            PowerModel::Table { rows, .. } => {
                let Some(top) = rows.last() else {
                    return bad("table has no rows".into());
                };
                if top.speed != Rational::one() || (top.power - 100.0).abs() > 1e-9 {
                    return bad("top row must have speed 1 and power 100".into());
                }
                if rows[0].speed <= Rational::zero() {
                    return bad("speeds must be positive".into());
                }
                for pair in rows.windows(2) {
                    if pair[0].speed >= pair[1].speed {
                        return bad(format!("speeds not strictly increasing at {}", pair[1].speed));
                    }
                    if pair[0].power > pair[1].power {
                        return bad(format!("power decreases at speed {}", pair[1].speed));
                    }
                }
                Ok(())
            }
            PowerModel::Analytic(a) => {
                if a.c0 < 0.0 || a.c1 < 0.0 || a.gamma < 2.0 {
                    return bad("analytic model needs c0, c1 >= 0 and gamma >= 2".into());
                }
                if (a.c0 + a.c1 - 100.0).abs() > 1e-9 {
                    return bad("analytic model must satisfy c0 + c1 = 100".into());
                }
                Ok(())
            }
        }
    }

    /// Lowest admissible speed of a table model.
    pub fn min_speed(&self) -> Option<&Rational> {
        match self {
            PowerModel::Table { rows, .. } => rows.first().map(|r| &r.speed),
            PowerModel::Analytic(_) => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, PowerModel::Table { .. })
    }
}

/// Smallest table speed at or above `requested`. Analytic models accept any
/// speed and return it unchanged.
pub fn quantize_speed(model: &PowerModel, requested: &Rational) -> Result<Rational> {
    if *requested > Rational::one() {
        return Err(Error::Infeasible(format!(
            "requested speed {} exceeds 1",
            rational::format(requested)
        )));
    }
    if *requested <= Rational::zero() {
        return Err(Error::Contract(format!("requested speed {requested} is not positive")));
    }
    match model {
        PowerModel::Table { rows, .. } => Ok(rows
            .iter()
            .find(|r| r.speed >= *requested)
            .map(|r| r.speed.clone())
            .expect("top row has speed 1")),
        PowerModel::Analytic(_) => Ok(requested.clone()),
    }
}

/// Power (percent of full-speed power) drawn at `speed`.
pub fn power_at(model: &PowerModel, speed: &Rational) -> Result<f64> {
    match model {
        PowerModel::Table { name, rows } => rows.iter().find(|r| r.speed == *speed).map(|r| r.power).ok_or_else(|| {
            Error::Contract(format!(
                "speed {} is not an operating point of {name}",
                rational::format(speed)
            ))
        }),
        PowerModel::Analytic(a) => Ok(a.c0 + a.c1 * rational::to_f64(speed).powf(a.gamma)),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdlePolicy {
    /// Idle processors sit at `s_min` and draw its power.
    #[default]
    IdleAtSmin,
    IdleZeroPower,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpeedMode {
    Continuous,
    Discrete(PowerModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlatformSpec {
    pub m: usize,
    pub s_min: Rational,
    pub speed_mode: SpeedMode,
    pub idle: IdlePolicy,
}

impl PlatformSpec {
    pub fn continuous(m: usize, s_min: Rational) -> Result<PlatformSpec> {
        let p = PlatformSpec {
            m,
            s_min,
            speed_mode: SpeedMode::Continuous,
            idle: IdlePolicy::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Platform restricted to the operating points of a table model;
    /// `s_min` is the lowest table speed.
    pub fn discrete(m: usize, model: PowerModel) -> Result<PlatformSpec> {
        let s_min = model
            .min_speed()
            .cloned()
            .ok_or_else(|| Error::InvalidPowerModel("discrete mode needs a table model".into()))?;
        let p = PlatformSpec {
            m,
            s_min,
            speed_mode: SpeedMode::Discrete(model),
            idle: IdlePolicy::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_idle(mut self, idle: IdlePolicy) -> PlatformSpec {
        self.idle = idle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParams("processor count must be positive".into()));
        }
        if self.s_min <= Rational::zero() || self.s_min > Rational::one() {
            return Err(Error::InvalidParams(format!("s_min {} outside (0, 1]", self.s_min)));
        }
        if let SpeedMode::Discrete(model) = &self.speed_mode {
            model.validate()?;
            if model.min_speed() != Some(&self.s_min) {
                return Err(Error::InvalidParams("s_min must equal the lowest table speed".into()));
            }
        }
        Ok(())
    }

    /// Raises `requested` to at least `s_min`, then (discrete mode) to the
    /// next operating point. Fails when the demand exceeds 1.
    pub fn admissible(&self, requested: &Rational) -> Result<Rational> {
        let floored = std::cmp::max(requested.clone(), self.s_min.clone());
        match &self.speed_mode {
            SpeedMode::Continuous => {
                if floored > Rational::one() {
                    return Err(Error::Infeasible(format!(
                        "requested speed {} exceeds 1",
                        rational::format(requested)
                    )));
                }
                Ok(floored)
            }
            SpeedMode::Discrete(model) => quantize_speed(model, &floored),
        }
    }
}

/// One constant-speed piece of a processor's timeline. Idle pieces have
/// `job == None` and run at `s_min` (or draw nothing, per the idle policy).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergySample {
    pub cpu: usize,
    #[serde(with = "serde_q")]
    pub start: Rational,
    #[serde(with = "serde_q")]
    pub end: Rational,
    #[serde(with = "serde_q")]
    pub speed: Rational,
    pub power: f64,
    pub job: Option<(usize, u64)>,
}

impl EnergySample {
    pub fn energy(&self) -> f64 {
        self.power * rational::to_f64(&(&self.end - &self.start))
    }
}

/// Materializes the full per-processor timeline over `[0, horizon]`, busy
/// and idle pieces alike, each tagged with its power draw.
pub fn energy_samples(trace: &Trace, model: &PowerModel, platform: &PlatformSpec) -> Result<Vec<EnergySample>> {
    let mut per_cpu: Vec<Vec<EnergySample>> = vec![Vec::new(); platform.m];
    for seg in trace.busy_segments()? {
        if seg.cpu >= platform.m {
            return Err(Error::MalformedTrace(format!("cpu {} outside platform", seg.cpu)));
        }
        per_cpu[seg.cpu].push(EnergySample {
            cpu: seg.cpu,
            power: power_at(model, &seg.speed)?,
            start: seg.start,
            end: seg.end,
            speed: seg.speed,
            job: Some((seg.task, seg.job)),
        });
    }

    let idle_power = match platform.idle {
        IdlePolicy::IdleAtSmin => power_at(model, &platform.s_min)?,
        IdlePolicy::IdleZeroPower => 0.0,
    };
    let mut out = Vec::new();
    for (cpu, mut busy) in per_cpu.into_iter().enumerate() {
        busy.sort_by(|a, b| a.start.cmp(&b.start));
        let mut cursor = Rational::zero();
        for s in busy {
            if s.start < cursor {
                return Err(Error::MalformedTrace(format!(
                    "overlapping segments on cpu {cpu} at {}",
                    rational::format(&s.start)
                )));
            }
            if s.start > cursor {
                out.push(EnergySample {
                    cpu,
                    start: cursor.clone(),
                    end: s.start.clone(),
                    speed: platform.s_min.clone(),
                    power: idle_power,
                    job: None,
                });
            }
            cursor = s.end.clone();
            out.push(s);
        }
        if cursor < trace.horizon {
            out.push(EnergySample {
                cpu,
                start: cursor,
                end: trace.horizon.clone(),
                speed: platform.s_min.clone(),
                power: idle_power,
                job: None,
            });
        }
    }
    Ok(out)
}

/// Total energy in percent-power x time units.
pub fn energy_of_trace(trace: &Trace, model: &PowerModel, platform: &PlatformSpec) -> Result<f64> {
    Ok(energy_samples(trace, model, platform)?
        .iter()
        .map(EnergySample::energy)
        .sum())
}
