//! Off-line speed determination for global EDF and EDF^(k).
//!
//! All bounds are sufficient conditions on a common processor speed for
//! sporadic constrained-deadline systems on `m` identical processors.
//! EDF^(k) gives the `k - 1` densest tasks top priority and orders the rest
//! by absolute deadline; EDF^(1) is plain EDF.

use std::ops::RangeInclusive;

use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{int, serde_q, Rational};
use crate::task::TaskSystem;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineResult {
    /// The uniform speed `s_ol`, clamped to `[max(s_min, λ_1), 1]`.
    #[serde(with = "serde_q")]
    pub speed: Rational,
    /// Parameter of the EDF^(k) rule that achieved `speed`.
    pub k_opt: usize,
    /// Smallest EDF^(k) bound met during the sweep, before clamping.
    #[serde(with = "serde_q")]
    pub unclamped: Rational,
}

impl OfflineResult {
    /// Ranks that receive top priority: `1..=k_opt-1` (empty when `k_opt = 1`).
    pub fn privileged(&self) -> RangeInclusive<usize> {
        1..=self.k_opt - 1
    }

    pub fn is_privileged(&self, rank: usize) -> bool {
        rank < self.k_opt
    }
}

fn check_inputs(ts: &TaskSystem, m: usize) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::EmptySystem);
    }
    if m == 0 {
        return Err(Error::InvalidParams("processor count must be positive".into()));
    }
    Ok(())
}

/// Sufficient EDF speed: `λ_max + (λ_sum - λ_max) / m`. Not clamped; a value
/// above one means the bound cannot certify the system on `m` processors.
pub fn edf_min_speed(ts: &TaskSystem, m: usize) -> Result<Rational> {
    check_inputs(ts, m)?;
    let max = ts.max_density();
    Ok(&max + (ts.density_sum() - &max) / int(m as i64))
}

/// Sufficient EDF^(k) speed:
/// `max{λ_1, λ_k + λ_sum(τ^(k+1)) / (m - k + 1)}`.
pub fn edfk_speed(ts: &TaskSystem, m: usize, k: usize) -> Result<Rational> {
    check_inputs(ts, m)?;
    let hi = m.min(ts.len());
    if k == 0 || k > hi {
        return Err(Error::IndexOutOfRange { index: k, lo: 1, hi });
    }
    let rest = ts.suffix_density_sum(k + 1)? / int((m - k + 1) as i64);
    let bound = ts.density(k) + rest;
    Ok(std::cmp::max(ts.max_density(), bound))
}

/// Sweeps `k = 1..=min(m, n)` for the smallest EDF^(k) bound.
///
/// The sweep stops as soon as the running best reaches the floor
/// `max(s_min, λ_1)`; on ties the smallest `k` is kept. The returned speed
/// is always clamped to the floor.
pub fn offline_speed(ts: &TaskSystem, m: usize, s_min: &Rational) -> Result<OfflineResult> {
    check_inputs(ts, m)?;
    if *s_min <= Rational::zero() || *s_min > Rational::one() {
        return Err(Error::InvalidParams(format!("s_min {s_min} outside (0, 1]")));
    }
    let floor = std::cmp::max(s_min.clone(), ts.max_density());
    let mut best: Option<(Rational, usize)> = None;

    for k in 1..=m.min(ts.len()) {
        let s = edfk_speed(ts, m, k)?;
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, k));
        }
        if best.as_ref().is_some_and(|(b, _)| *b <= floor) {
            break;
        }
    }

    let (unclamped, k_opt) = best.expect("at least one k is swept");
    if unclamped > Rational::one() {
        return Err(Error::Infeasible(format!(
            "no EDF^(k) bound is at most 1 on {m} processors (best {unclamped})"
        )));
    }
    Ok(OfflineResult {
        speed: std::cmp::max(unclamped.clone(), floor),
        k_opt,
        unclamped,
    })
}

/// Processor count used by the experiments:
/// `min{n, ceil((λ_sum - λ_max) / (1 - λ_max))}`, at least one. When
/// `λ_max = 1` the quotient is undefined and `n` is returned.
pub fn required_processors(ts: &TaskSystem) -> Result<usize> {
    if ts.is_empty() {
        return Err(Error::EmptySystem);
    }
    let n = ts.len();
    let max = ts.max_density();
    if max >= Rational::one() {
        return Ok(n);
    }
    let quotient = (ts.density_sum() - &max) / (Rational::one() - &max);
    let ceil = quotient.ceil().to_integer().to_usize().unwrap_or(usize::MAX);
    Ok(ceil.clamp(1, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::task::TaskSpec;

    /// System with the given densities, all with `D = T = 1000`.
    fn with_densities(ds: &[Rational]) -> TaskSystem {
        TaskSystem::normalize(
            ds.iter()
                .enumerate()
                .map(|(i, d)| TaskSpec::new(i as u32 + 1, d * int(1000), int(1000), int(1000)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn worked() -> TaskSystem {
        with_densities(&[ratio(3, 5), ratio(1, 2), ratio(1, 10)])
    }

    #[test]
    fn edf_speed_examples() {
        assert_eq!(edf_min_speed(&worked(), 2).unwrap(), ratio(9, 10));
        let single = with_densities(&[ratio(2, 5)]);
        for m in 1..5 {
            assert_eq!(edf_min_speed(&single, m).unwrap(), ratio(2, 5));
        }
        let quad = with_densities(&vec![ratio(1, 2); 4]);
        assert_eq!(edf_min_speed(&quad, 3).unwrap(), int(1));
    }

    #[test]
    fn edfk_speed_examples() {
        let ts = worked();
        assert_eq!(edfk_speed(&ts, 2, 1).unwrap(), ratio(9, 10));
        assert_eq!(edfk_speed(&ts, 2, 2).unwrap(), ratio(3, 5));
        assert_eq!(edfk_speed(&ts, 3, 3).unwrap(), ratio(3, 5));
        assert!(edfk_speed(&ts, 2, 3).is_err());
        assert!(edfk_speed(&ts, 2, 0).is_err());
    }

    #[test]
    fn offline_speed_examples() {
        let r = offline_speed(&worked(), 2, &ratio(291, 1000)).unwrap();
        assert_eq!(r.speed, ratio(3, 5));
        assert_eq!(r.k_opt, 2);
        assert_eq!(r.privileged(), 1..=1);

        let single = with_densities(&[ratio(1, 5)]);
        let r = offline_speed(&single, 1, &ratio(3, 10)).unwrap();
        assert_eq!(r.speed, ratio(3, 10));
        assert_eq!(r.k_opt, 1);
        assert!(r.privileged().is_empty());
        let r = offline_speed(&single, 3, &ratio(1, 10)).unwrap();
        assert_eq!(r.speed, ratio(1, 5));

        let heavy = with_densities(&[ratio(9, 10), ratio(9, 10)]);
        let r = offline_speed(&heavy, 2, &ratio(1, 10)).unwrap();
        assert_eq!(r.speed, ratio(9, 10));
        assert_eq!(r.k_opt, 2);
    }

    #[test]
    fn offline_speed_reports_infeasibility() {
        let heavy = with_densities(&[ratio(9, 10), ratio(9, 10), ratio(9, 10)]);
        assert!(matches!(
            offline_speed(&heavy, 2, &ratio(1, 10)),
            Err(Error::Infeasible(_))
        ));
        assert!(offline_speed(&heavy, 2, &int(0)).is_err());
    }

    #[test]
    fn processor_count_examples() {
        assert_eq!(required_processors(&worked()).unwrap(), 2);
        assert_eq!(required_processors(&with_densities(&[int(1), ratio(1, 5)])).unwrap(), 2);
        assert_eq!(required_processors(&with_densities(&[ratio(1, 3)])).unwrap(), 1);
        assert!(required_processors(&with_densities(&[])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_system() -> impl Strategy<Value = TaskSystem> {
            prop::collection::vec(1i64..=100, 1..15)
                .prop_map(|ds| with_densities(&ds.iter().map(|d| ratio(*d, 100)).collect::<Vec<_>>()))
        }

        proptest! {
            #[test]
            fn edfk_one_is_plain_edf(ts in arb_system(), m in 1usize..8) {
                prop_assert_eq!(edfk_speed(&ts, m, 1).unwrap(), edf_min_speed(&ts, m).unwrap());
            }

            #[test]
            fn offline_dominates_edf(ts in arb_system(), m in 1usize..8, smin in 1i64..=100) {
                let s_min = ratio(smin, 100);
                let edf = edf_min_speed(&ts, m).unwrap();
                match offline_speed(&ts, m, &s_min) {
                    Ok(r) => {
                        prop_assert!(r.speed >= ts.max_density());
                        prop_assert!(r.speed >= s_min);
                        prop_assert!(r.speed <= Rational::one());
                        if edf <= Rational::one() {
                            prop_assert!(r.speed <= std::cmp::max(edf, s_min));
                        }
                    }
                    Err(_) => prop_assert!(edf > Rational::one()),
                }
            }
        }
    }
}
