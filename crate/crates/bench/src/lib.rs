//! Fixtures shared by the benchmarks.

use mote::mote::{ContentionView, TaskContention};
use mote::rational::{int, ratio};
use mote::workload::{generate, GenParams, Interval};
use mote::TaskSystem;

/// A contention snapshot with `n` tasks on `n / 2` processors, staggered so
/// the sweep has distinct release points to walk.
pub fn contention_view(n: usize) -> ContentionView {
    let tasks = (0..n as i64)
        .map(|i| {
            let period = int(5 + i % 17);
            TaskContention {
                deadline: ratio(3, 4) * &period,
                last_release: -int(i % 5),
                residue: ratio(1 + i % 3, 2),
                period,
            }
        })
        .collect();
    ContentionView {
        now: int(0),
        m: (n / 2).max(1),
        subject: n,
        tasks,
    }
}

/// A generated system of roughly `n` tasks with total density `n / 4`.
pub fn system(n: usize, seed: u64) -> TaskSystem {
    let load = int(n as i64) / int(4);
    let params = GenParams {
        n_range: (n, n),
        lambda_sum_range: Interval::point(load),
        ..GenParams::default()
    };
    generate(&params.with_seed(seed)).expect("fixture parameters are attainable")
}
