//! Seeded random task systems and per-job execution times.
//!
//! Densities are drawn uniformly from `{λ in (0, 1]^n : Σλ = λ_sum}` by
//! sampling the simplex and rejecting splits with a density above one.
//! Above `λ_sum = n/2` the complementary split `1 - λ_i` is sampled
//! instead, which has the same distribution and rejects far less often.
//! All drawn quantities land on fixed decimal grids so they are exact
//! rationals.

use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{int, ratio, serde_q, Rational};
use crate::sim::AcetSource;
use crate::task::{TaskSpec, TaskSystem};

/// Resolution of a density (units per 1).
const DENSITY_GRID: u64 = 10_000;
/// Resolution of the total density, deadline ratio and ACET ratio.
const RATIO_GRID: i64 = 1_000;
const MAX_ATTEMPTS: usize = 10_000;
const MAX_SPLITS: usize = 2_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "serde_q")]
    pub lo: Rational,
    #[serde(with = "serde_q")]
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Interval {
        Interval { lo, hi }
    }

    pub fn point(v: Rational) -> Interval {
        Interval { lo: v.clone(), hi: v }
    }

    /// Grid points `k / RATIO_GRID` inside the interval, as `k` bounds.
    fn grid_bounds(&self) -> Option<(i64, i64)> {
        let scale = int(RATIO_GRID);
        let lo = (&self.lo * &scale).ceil().to_integer().to_i64()?;
        let hi = (&self.hi * &scale).floor().to_integer().to_i64()?;
        (lo <= hi).then_some((lo, hi))
    }

    fn draw(&self, rng: &mut impl Rng) -> Rational {
        let (lo, hi) = self.grid_bounds().expect("validated interval");
        ratio(rng.random_range(lo..=hi), RATIO_GRID)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_range: (usize, usize),
    pub lambda_sum_range: Interval,
    #[serde(with = "period_pool_serde")]
    pub period_pool: Vec<Rational>,
    /// `D_i / T_i`.
    pub deadline_ratio_range: Interval,
    /// `ACET / C_i`.
    pub acet_ratio_range: Interval,
    pub seed: u64,
}

mod period_pool_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::rational::{serde_q, Rational};

    #[derive(Serialize, Deserialize)]
    struct P(#[serde(with = "serde_q")] Rational);

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|r| P(r.clone())).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Ok(Vec::<P>::deserialize(d)?.into_iter().map(|p| p.0).collect())
    }
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_range: (5, 40),
            lambda_sum_range: Interval::new(int(1), int(10)),
            period_pool: [5, 10, 20, 25, 50, 100].into_iter().map(int).collect(),
            deadline_ratio_range: Interval::new(ratio(1, 2), int(1)),
            acet_ratio_range: Interval::new(ratio(1, 4), int(1)),
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn with_seed(mut self, seed: u64) -> GenParams {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        let (n_lo, n_hi) = self.n_range;
        if n_lo == 0 || n_lo > n_hi {
            return bad("n_range must satisfy 1 <= lo <= hi");
        }
        let unit = Interval::new(Rational::zero(), Rational::one());
        for (name, iv) in [
            ("deadline_ratio_range", &self.deadline_ratio_range),
            ("acet_ratio_range", &self.acet_ratio_range),
        ] {
            if iv.lo <= unit.lo || iv.hi > unit.hi || iv.grid_bounds().is_none() {
                return Err(Error::InvalidParams(format!(
                    "{name} must be a non-empty subset of (0, 1]"
                )));
            }
        }
        if self.lambda_sum_range.lo <= Rational::zero() || self.lambda_sum_range.grid_bounds().is_none() {
            return bad("lambda_sum_range must be a non-empty positive interval");
        }
        if self.lambda_sum_range.lo > int(n_hi as i64) {
            return bad("lambda_sum_range lies above n_range: densities would exceed 1");
        }
        if self.period_pool.is_empty() || self.period_pool.iter().any(|p| *p <= Rational::zero()) {
            return bad("period_pool must be non-empty and positive");
        }
        Ok(())
    }

    /// Exact lcm of the period pool: a bound on every generated hyperperiod.
    pub fn pool_hyperperiod(&self) -> Rational {
        let mut it = self.period_pool.iter();
        let first = it.next().cloned().unwrap_or_else(Rational::one);
        it.fold(first, |acc, p| crate::rational::lcm(&acc, p))
    }
}

/// Draws one task system.
pub fn generate(params: &GenParams) -> Result<TaskSystem> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (n_lo, n_hi) = params.n_range;

    for _ in 0..MAX_ATTEMPTS {
        let n = rng.random_range(n_lo..=n_hi);
        let lambda_sum = params.lambda_sum_range.draw(&mut rng);
        let units = (&lambda_sum * int(DENSITY_GRID as i64))
            .to_integer()
            .to_u64()
            .expect("grid value");
        if units > n as u64 * DENSITY_GRID || units < n as u64 {
            continue;
        }
        let Some(parts) = split_density(units, n, &mut rng) else {
            continue;
        };
        let tasks = parts
            .into_iter()
            .enumerate()
            .map(|(i, part)| {
                let density = ratio(part as i64, DENSITY_GRID as i64);
                let period = params.period_pool[rng.random_range(0..params.period_pool.len())].clone();
                let deadline = &period * params.deadline_ratio_range.draw(&mut rng);
                let wcet = &density * &deadline;
                TaskSpec::new(i as u32 + 1, wcet, deadline, period)
            })
            .collect::<Result<Vec<_>>>()?;
        return TaskSystem::normalize(tasks);
    }
    Err(Error::InvalidParams(format!(
        "could not draw a task system within {MAX_ATTEMPTS} attempts; check n_range against lambda_sum_range"
    )))
}

/// Splits `units` into `n` parts in `[1, DENSITY_GRID]`.
fn split_density(units: u64, n: usize, rng: &mut impl Rng) -> Option<Vec<u64>> {
    let full = n as u64 * DENSITY_GRID;
    let complement = 2 * units > full;
    let target = if complement { full - units } else { units };
    for _ in 0..MAX_SPLITS {
        let parts = simplex_units(target, n, rng);
        let ok = if complement {
            parts.iter().all(|&p| p < DENSITY_GRID)
        } else {
            parts.iter().all(|&p| (1..=DENSITY_GRID).contains(&p))
        };
        if ok {
            return Some(if complement {
                parts.into_iter().map(|p| DENSITY_GRID - p).collect()
            } else {
                parts
            });
        }
    }
    None
}

/// Uniform point on the simplex scaled to `total`, rounded to integers with
/// largest-remainder apportionment so the parts sum to `total` exactly.
fn simplex_units(total: u64, n: usize, rng: &mut impl Rng) -> Vec<u64> {
    let weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

/// `r * wcet` with `r` uniform on the `1/1000` grid of `ratio_range`.
pub fn sample_acet(wcet: &Rational, ratio_range: &Interval, rng: &mut impl Rng) -> Rational {
    wcet * ratio_range.draw(rng)
}

/// Deterministic per-job ACETs: job `j` of task `id` always draws from its
/// own ChaCha stream, so every method simulated on the same system sees
/// identical execution times.
#[derive(Clone, Debug)]
pub struct SeededAcets {
    pub seed: u64,
    pub ratio_range: Interval,
}

impl SeededAcets {
    pub fn new(seed: u64, ratio_range: Interval) -> SeededAcets {
        SeededAcets { seed, ratio_range }
    }

    pub fn stream(&self, task_id: u32, job: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((task_id as u64) << 40) ^ job);
        rng
    }
}

impl AcetSource for SeededAcets {
    fn acet(&self, _rank: usize, task: &TaskSpec, job: u64) -> Rational {
        sample_acet(&task.wcet, &self.ratio_range, &mut self.stream(task.id, job))
    }
}

/// SplitMix64 finalizer; derives independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
