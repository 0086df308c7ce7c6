use mote::mote::{next_contention, reduce_speed, ContentionView, TaskContention};
use mote::oracle::{brute_force_tnext, validate_trace};
use mote::power::energy_samples;
use mote::rational::{int, ratio, Instant, Rational};
use mote::sim::job::Job;
use mote::workload::{generate, GenParams, Interval, SeededAcets};
use mote::{simulate, EventKind, Method, PlatformSpec, PowerModel, SimConfig, TaskSystem};
use num_traits::Zero;
use proptest::prelude::*;

fn small_params() -> GenParams {
    GenParams {
        n_range: (2, 10),
        lambda_sum_range: Interval::new(int(1), int(4)),
        period_pool: [4, 5, 10, 20].into_iter().map(int).collect(),
        ..GenParams::default()
    }
}

fn small_system(seed: u64) -> TaskSystem {
    generate(&small_params().with_seed(seed)).unwrap()
}

fn platform(ts: &TaskSystem, which: u8) -> PlatformSpec {
    let m = mote::required_processors(ts).unwrap();
    match which {
        0 => PlatformSpec::continuous(m, ratio(1, 10)).unwrap(),
        1 => PlatformSpec::discrete(m, PowerModel::tm5400()).unwrap(),
        _ => PlatformSpec::discrete(m, PowerModel::sa1100()).unwrap(),
    }
}

fn arb_view() -> impl Strategy<Value = ContentionView> {
    let task = (1i64..10, 1i64..10, -10i64..=0, 0i64..4).prop_map(|(t, d, back, w)| (t, d.min(t), back, w));
    (
        prop::collection::vec(task, 1..7),
        1usize..9,
        0i64..20,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(tasks, m, now, subject)| {
            let n = tasks.len();
            ContentionView {
                now: int(now),
                m,
                subject: subject.index(n) + 1,
                tasks: tasks
                    .into_iter()
                    .map(|(t, d, back, w)| TaskContention {
                        period: int(t),
                        deadline: int(d),
                        last_release: int(now + back),
                        residue: int(w),
                    })
                    .collect(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_traces_satisfy_every_contract(seed in any::<u64>(), which in 0u8..3, random in any::<bool>()) {
        let ts = small_system(seed);
        let p = platform(&ts, which);
        let acets = SeededAcets::new(seed, if random { Interval::new(ratio(1, 4), int(1)) } else { Interval::point(int(1)) });
        for method in Method::ALL {
            let cfg = SimConfig::hyperperiod(&ts, method).unwrap();
            let trace = simulate(&ts, &p, &cfg, &acets).unwrap();
            let report = validate_trace(&trace, &ts, &p, trace.k_opt).unwrap();
            prop_assert!(report.ok, "{}: {}", method, report.summary());
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let ts = small_system(seed);
        let p = platform(&ts, 1);
        let acets = SeededAcets::new(seed, Interval::new(ratio(1, 4), int(1)));
        let cfg = SimConfig::hyperperiod(&ts, Method::Mote).unwrap();
        prop_assert_eq!(simulate(&ts, &p, &cfg, &acets).unwrap(), simulate(&ts, &p, &cfg, &acets).unwrap());
    }

    #[test]
    fn paired_runs_share_releases_and_work(seed in any::<u64>()) {
        let ts = small_system(seed);
        let p = platform(&ts, 2);
        let acets = SeededAcets::new(seed, Interval::new(ratio(1, 4), int(1)));
        let releases = |method| {
            let cfg = SimConfig::hyperperiod(&ts, method).unwrap();
            simulate(&ts, &p, &cfg, &acets)
                .unwrap()
                .events
                .into_iter()
                .filter(|e| e.kind == EventKind::Release)
                .collect::<Vec<_>>()
        };
        let base = releases(Method::Smax);
        for method in [Method::OfflineEdf, Method::OfflineEdfk, Method::Mote] {
            prop_assert_eq!(&releases(method), &base);
        }
    }

    #[test]
    fn reclaiming_never_raises_a_speed(seed in any::<u64>()) {
        let ts = small_system(seed);
        let p = platform(&ts, 0);
        let cfg = SimConfig::hyperperiod(&ts, Method::Mote).unwrap();
        let trace = simulate(&ts, &p, &cfg, &mote::WorstCase).unwrap();
        let mut first: std::collections::HashMap<(usize, u64), Rational> = Default::default();
        for e in trace.events.iter().filter(|e| e.kind == EventKind::SpeedSet) {
            let s = e.speed.clone().unwrap();
            let initial = first.entry((e.task, e.job)).or_insert_with(|| s.clone());
            prop_assert!(s <= *initial);
        }
    }

    #[test]
    fn energy_timeline_covers_every_processor(seed in any::<u64>()) {
        let ts = small_system(seed);
        let p = platform(&ts, 1);
        let cfg = SimConfig::hyperperiod(&ts, Method::Mote).unwrap();
        let trace = simulate(&ts, &p, &cfg, &mote::WorstCase).unwrap();
        let samples = energy_samples(&trace, &PowerModel::tm5400(), &p).unwrap();
        let covered = samples.iter().fold(Rational::zero(), |acc, s| acc + (&s.end - &s.start));
        prop_assert_eq!(covered, &trace.horizon * int(p.m as i64));
    }

    #[test]
    fn contention_sweep_matches_oracle(view in arb_view()) {
        prop_assert_eq!(next_contention(&view), brute_force_tnext(&view));
    }

    #[test]
    fn reduction_is_monotone_and_safe(
        w in 1i64..20, executed in 0i64..20, s in 1i64..=10, d in 1i64..40, tn in 1i64..60,
    ) {
        let wcet = int(w + executed);
        let mut job = Job::new(1, 1, int(0), int(d), wcet.clone(), wcet);
        job.executed = int(executed);
        let current = ratio(s, 10);
        job.speed = Some(current.clone());
        let p = PlatformSpec::continuous(1, ratio(1, 10)).unwrap();
        let reduced = reduce_speed(&job, &int(0), &Instant::At(int(tn)), &p).unwrap();
        prop_assert!(reduced <= std::cmp::max(current.clone(), ratio(1, 10)));
        if reduced < current {
            // Strict reductions finish the worst-case residue in the window.
            prop_assert!(reduced * int(d.min(tn)) >= int(w));
        }
    }
}
