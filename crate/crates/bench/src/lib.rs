//! Synthetic inputs shared by the benchmarks.

use disco::{build_panel, LsProblem, MicroPanel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Unit 0 plus `controls` donors, normal outcomes with unit-specific location and scale.
pub fn normal_panel(controls: usize, periods: i64, n: usize, seed: u64) -> MicroPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity((controls + 1) * periods as usize * n);
    for unit in 0..=controls as i64 {
        let dist = Normal::new(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)).unwrap();
        for period in 1..=periods {
            records.extend((0..n).map(|_| (unit, period, dist.sample(&mut rng))));
        }
    }
    build_panel(&records).unwrap()
}

/// Monotone donor columns and a target, as produced by quantile grids.
pub fn quantile_problem(controls: usize, rows: usize, seed: u64) -> LsProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let column = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let columns = (0..controls).map(|_| column(&mut rng)).collect();
    let target = column(&mut rng);
    LsProblem::new(columns, target, true).unwrap()
}
