//! Interval summaries of grid-level effects.

use std::cmp::Ordering;

use serde::Serialize;

use crate::disco::{AggKind, DiscoResult};
use crate::distributions::{Period, SortedSample};
use crate::error::{DiscoError, Result};
use crate::inference::BootstrapBands;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub period: Period,
    pub post: bool,
    pub range_lo: f64,
    pub range_hi: f64,
    /// Grid points falling in the cell.
    pub count: usize,
    pub effect: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// The interval excludes zero (difference kinds with bootstrap draws only).
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub kind: AggKind,
    pub partition: Vec<f64>,
    pub cl: Option<f64>,
    pub rows: Vec<SummaryRow>,
}

/// Index of the cell containing `x`; cells are `[lo, hi)` except the last, which is closed.
fn cell_of(partition: &[f64], x: f64) -> Option<usize> {
    let cells = partition.len() - 1;
    if x < partition[0] || x > partition[cells] {
        return None;
    }
    let idx = partition.partition_point(|&p| p <= x);
    Some(idx.saturating_sub(1).min(cells - 1))
}

fn validate_partition(result: &DiscoResult, kind: AggKind, partition: &[f64]) -> Result<()> {
    if partition.len() < 2 {
        return Err(DiscoError::Aggregation("partition needs at least two points".into()));
    }
    if partition.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(DiscoError::Aggregation("partition must be strictly increasing".into()));
    }
    let (lo, hi, what) = if kind.is_quantile() {
        (0.0, 1.0, "[0, 1]".to_string())
    } else {
        let s = result.support;
        (s.amin, s.amax, format!("the support [{}, {}]", s.amin, s.amax))
    };
    if let Some(bad) = partition.iter().find(|&&p| p < lo || p > hi) {
        return Err(DiscoError::Aggregation(format!("partition point {bad} lies outside {what}")));
    }
    Ok(())
}

fn mean_over(values: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&k| values[k]).sum::<f64>() / members.len() as f64
}

/// Cell means of `kind` for every period, with bootstrap SEs and percentile intervals when draws are given.
pub fn aggregate(
    result: &DiscoResult,
    bands: Option<&BootstrapBands>,
    kind: AggKind,
    partition: &[f64],
) -> Result<SummaryTable> {
    validate_partition(result, kind, partition)?;
    if let Some(b) = bands {
        if b.kind.is_diff() != kind.is_diff() {
            return Err(DiscoError::Aggregation(format!(
                "bands were computed for {} but the summary asks for {}",
                b.kind, kind
            )));
        }
    }
    let coordinates = result.coordinates(kind);
    let mut members = vec![Vec::new(); partition.len() - 1];
    for (k, &x) in coordinates.iter().enumerate() {
        if let Some(c) = cell_of(partition, x) {
            members[c].push(k);
        }
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(DiscoError::Aggregation(format!(
            "no grid point falls in [{}, {}]; use a coarser partition or a finer grid",
            partition[c],
            partition[c + 1]
        )));
    }
    let draws = bands.map(|b| (b.draws.unscaled(kind), b.cl));
    let values = result.values(kind);
    let mut rows = Vec::with_capacity(result.periods.len() * members.len());
    for (t, &period) in result.periods.iter().enumerate() {
        for (c, cell) in members.iter().enumerate() {
            let effect = mean_over(&values[t], cell);
            let mut row = SummaryRow {
                period,
                post: result.is_post(t),
                range_lo: partition[c],
                range_hi: partition[c + 1],
                count: cell.len(),
                effect,
                se: None,
                ci_lo: None,
                ci_hi: None,
                significant: false,
            };
            if let Some((draws, cl)) = &draws {
                let gaps: Vec<f64> = draws.iter().map(|d| mean_over(&d[t], cell)).collect();
                let n = gaps.len();
                let se = if n < 2 {
                    0.0
                } else {
                    let mean = gaps.iter().sum::<f64>() / n as f64;
                    (gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
                };
                let mut sorted = gaps;
                sorted.sort_by(f64::total_cmp);
                let sorted = SortedSample::from_sorted_unchecked(sorted);
                let lo = effect + sorted.quantile((1.0 - cl) / 2.0);
                let hi = effect + sorted.quantile((1.0 + cl) / 2.0);
                row.se = Some(se);
                row.ci_lo = Some(lo);
                row.ci_hi = Some(hi);
                row.significant = kind.is_diff() && (lo > 0.0 || hi < 0.0);
            }
            rows.push(row);
        }
    }
    Ok(SummaryTable {
        kind,
        partition: partition.to_vec(),
        cl: draws.map(|(_, cl)| cl),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disco::{run_disco, DiscoConfig};
    use crate::distributions::build_panel;
    use crate::inference::bootstrap_gaps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn fitted(seed: u64, effect: f64) -> (crate::MicroPanel, DiscoConfig, DiscoResult) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = vec![];
        for u in 0..4i64 {
            let d = Normal::new(u as f64 * 0.5, 1.0).unwrap();
            for t in 1..=3 {
                let shift = if u == 0 && t == 3 { effect } else { 0.0 };
                records.extend((0..200).map(|_| (u, t, d.sample(&mut rng) + shift)));
            }
        }
        let panel = build_panel(&records).unwrap();
        let mut config = DiscoConfig::new(0, 3);
        config.m = 100;
        config.g = 20;
        config.inference.boots = 40;
        let result = run_disco(&panel, &config).unwrap();
        (panel, config, result)
    }

    #[test]
    fn cell_membership_is_half_open() {
        let p = [0.0, 0.5, 1.0];
        assert_eq!(cell_of(&p, 0.0), Some(0));
        assert_eq!(cell_of(&p, 0.5), Some(1));
        assert_eq!(cell_of(&p, 1.0), Some(1));
        assert_eq!(cell_of(&p, 1.5), None);
        assert_eq!(cell_of(&p, -0.1), None);
    }

    #[test]
    fn single_cell_is_grand_mean() {
        let (_, _, result) = fitted(1, 0.0);
        let table = aggregate(&result, None, AggKind::QuantileDiff, &[0.0, 1.0]).unwrap();
        assert_eq!(table.rows.len(), result.periods.len());
        for (row, col) in table.rows.iter().zip(&result.quantile_diff) {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!((row.effect - mean).abs() < 1e-12);
            assert!(row.se.is_none() && !row.significant);
        }
        assert_eq!(table.rows.iter().filter(|r| r.post).count(), 1);
    }

    #[test]
    fn zero_diffs_give_zero_effects_without_stars() {
        let (panel, config, mut result) = fitted(2, 0.0);
        let draws = bootstrap_gaps(&panel, &config, &result).unwrap();
        for col in result.quantile_diff.iter_mut() {
            col.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut bands = BootstrapBands::new(&result, draws, AggKind::QuantileDiff, 0.95, true).unwrap();
        for v in bands.draws.quantile_diff.values.iter_mut() {
            *v = 0.0;
        }
        let table = aggregate(&result, Some(&bands), AggKind::QuantileDiff, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(table.rows.iter().all(|r| r.effect == 0.0 && !r.significant));
    }

    #[test]
    fn large_effect_is_starred_and_stars_shrink_with_level() {
        let (panel, config, result) = fitted(3, 2.0);
        let draws = bootstrap_gaps(&panel, &config, &result).unwrap();
        let partition = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut previous: Option<Vec<bool>> = None;
        for cl in [0.5, 0.8, 0.95, 0.99] {
            let bands = BootstrapBands::new(&result, draws.clone(), AggKind::QuantileDiff, cl, false).unwrap();
            let table = aggregate(&result, Some(&bands), AggKind::QuantileDiff, &partition).unwrap();
            let stars: Vec<bool> = table.rows.iter().map(|r| r.significant).collect();
            assert!(table.rows.iter().filter(|r| r.post).all(|r| r.significant));
            if let Some(prev) = previous {
                assert!(stars.iter().zip(&prev).all(|(now, before)| !now || *before));
            }
            previous = Some(stars);
        }
    }

    #[test]
    fn rejects_bad_partitions_and_kind_mixing() {
        let (panel, config, result) = fitted(4, 0.0);
        assert!(aggregate(&result, None, AggKind::Quantile, &[0.5]).is_err());
        assert!(aggregate(&result, None, AggKind::Quantile, &[0.5, 0.5]).is_err());
        assert!(aggregate(&result, None, AggKind::Quantile, &[0.0, 1.5]).is_err());
        let beyond = result.support.amax + 1.0;
        assert!(aggregate(&result, None, AggKind::CdfDiff, &[result.support.amin, beyond]).is_err());
        assert!(aggregate(&result, None, AggKind::Quantile, &[0.0, 0.001, 1.0]).is_err());
        let draws = bootstrap_gaps(&panel, &config, &result).unwrap();
        let bands = BootstrapBands::new(&result, draws, AggKind::Quantile, 0.95, true).unwrap();
        assert!(aggregate(&result, Some(&bands), AggKind::QuantileDiff, &[0.0, 1.0]).is_err());
        assert!(aggregate(&result, Some(&bands), AggKind::Cdf, &[result.support.amin, result.support.amax]).is_ok());
    }
}
