//! Empirical distribution functions built from micro-level panel data.
//!
//! Quantiles use the left-continuous generalized inverse
//! `F^{-1}(q) = inf { x : q <= F(x) }` with no interpolation between order
//! statistics. Grids are deterministic: probability points sit at cell
//! midpoints `qmin + (qmax - qmin) (i - 1/2) / m`, support points are evenly
//! spaced on `[amin, amax]` including both ends.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{DiscoError, Result};

pub type UnitId = i64;
pub type Period = i64;

/// Tolerance used when comparing accumulated CDF values against a probability.
const CDF_TOLERANCE: f64 = 1e-12;

/// Long-format micro data: many outcome observations per (unit, period) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroPanel {
    cells: BTreeMap<(UnitId, Period), Vec<f64>>,
    units: Vec<UnitId>,
    periods: Vec<Period>,
    n_obs: usize,
}

impl MicroPanel {
    /// Validates `(unit, period, outcome)` records. Rows are numbered from 1 in errors.
    pub fn from_records(records: &[(UnitId, Period, f64)]) -> Result<Self> {
        if records.is_empty() {
            return Err(DiscoError::EmptyInput);
        }
        let mut cells: BTreeMap<(UnitId, Period), Vec<f64>> = BTreeMap::new();
        for (row, &(unit, period, value)) in records.iter().enumerate() {
            if !value.is_finite() {
                return Err(DiscoError::NonFiniteValue { row: row + 1 });
            }
            cells.entry((unit, period)).or_default().push(value);
        }
        Ok(Self::from_cells(cells))
    }

    pub(crate) fn from_cells(cells: BTreeMap<(UnitId, Period), Vec<f64>>) -> Self {
        let mut units: Vec<UnitId> = cells.keys().map(|&(u, _)| u).collect();
        units.dedup();
        let mut periods: Vec<Period> = cells.keys().map(|&(_, t)| t).collect();
        periods.sort_unstable();
        periods.dedup();
        let n_obs = cells.values().map(Vec::len).sum();
        Self {
            cells,
            units,
            periods,
            n_obs,
        }
    }

    pub fn units(&self) -> &[UnitId] {
        &self.units
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    /// Total number of observations.
    pub fn len(&self) -> usize {
        self.n_obs
    }

    pub fn is_empty(&self) -> bool {
        self.n_obs == 0
    }

    pub fn contains_unit(&self, unit: UnitId) -> bool {
        self.units.binary_search(&unit).is_ok()
    }

    pub fn cell(&self, unit: UnitId, period: Period) -> Option<&[f64]> {
        self.cells.get(&(unit, period)).map(Vec::as_slice)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(UnitId, Period), &Vec<f64>)> {
        self.cells.iter()
    }

    pub fn cell_counts(&self) -> BTreeMap<(UnitId, Period), usize> {
        self.cells.iter().map(|(&k, v)| (k, v.len())).collect()
    }

    /// Smallest and largest outcome across every unit and period.
    pub fn support(&self) -> Support {
        let mut amin = f64::INFINITY;
        let mut amax = f64::NEG_INFINITY;
        for &v in self.cells.values().flatten() {
            amin = amin.min(v);
            amax = amax.max(v);
        }
        Support { amin, amax }
    }
}

pub fn build_panel(records: &[(UnitId, Period, f64)]) -> Result<MicroPanel> {
    MicroPanel::from_records(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Support {
    pub amin: f64,
    pub amax: f64,
}

impl Support {
    pub fn new(amin: f64, amax: f64) -> Result<Self> {
        if !(amin.is_finite() && amax.is_finite()) || amin > amax {
            return Err(DiscoError::InvalidGrid(format!(
                "support [{amin}, {amax}] is not a finite interval"
            )));
        }
        Ok(Self { amin, amax })
    }
}

/// A sample sorted ascending, evaluated through its empirical CDF and quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample(Vec<f64>);

impl SortedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DiscoError::EmptySample);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self(values))
    }

    pub(crate) fn from_sorted_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Smallest order statistic `x_(k)` with `k / n >= q`. `q <= 0` gives the minimum.
    pub fn quantile(&self, q: f64) -> f64 {
        self.0[quantile_rank(self.0.len(), q) - 1]
    }

    /// Fraction of the sample `<= y`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.0.partition_point(|&x| x <= y) as f64 / self.0.len() as f64
    }
}

/// 1-based rank of the generalized-inverse order statistic.
fn quantile_rank(n: usize, q: f64) -> usize {
    if q <= 0.0 {
        return 1;
    }
    let nf = n as f64;
    let mut k = ((q * nf).ceil() as usize).clamp(1, n);
    // q * n can land one ulp on the wrong side of an integer.
    while k > 1 && ((k - 1) as f64 / nf) >= q {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < q {
        k += 1;
    }
    k
}

fn check_probability(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(DiscoError::InvalidProbability(q))
    }
}

pub fn empirical_quantile(sample: &[f64], q: f64) -> Result<f64> {
    check_probability(q)?;
    Ok(SortedSample::new(sample.to_vec())?.quantile(q))
}

pub fn empirical_cdf(sample: &[f64], y: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(DiscoError::EmptySample);
    }
    Ok(sample.iter().filter(|&&x| x <= y).count() as f64 / sample.len() as f64)
}

/// `m` midpoint probabilities on `[qmin, qmax]`.
pub fn probability_grid(m: usize, qmin: f64, qmax: f64) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(DiscoError::InvalidGrid("need at least one probability point".into()));
    }
    if !(0.0 <= qmin && qmin < qmax && qmax <= 1.0) {
        return Err(DiscoError::InvalidGrid(format!(
            "need 0 <= qmin < qmax <= 1, got qmin={qmin}, qmax={qmax}"
        )));
    }
    let width = qmax - qmin;
    Ok((0..m)
        .map(|i| qmin + width * (i as f64 + 0.5) / m as f64)
        .collect())
}

/// `g` evenly spaced points from `amin` to `amax`; a one-point support repeats `amin`.
pub fn support_grid(g: usize, support: Support) -> Result<Vec<f64>> {
    if g < 2 {
        return Err(DiscoError::InvalidGrid("need at least two support points".into()));
    }
    let Support { amin, amax } = support;
    if amin == amax {
        return Ok(vec![amin; g]);
    }
    let step = (amax - amin) / (g - 1) as f64;
    let mut points: Vec<f64> = (0..g).map(|k| amin + step * k as f64).collect();
    points[g - 1] = amax;
    Ok(points)
}

/// Result of pseudo-inverting a gridded CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridQuantile {
    pub value: f64,
    /// `q` exceeded every stored CDF value; `value` is the last support point.
    pub saturated: bool,
}

/// Smallest support point whose CDF value reaches `q`.
pub fn quantile_from_cdf(cdf: &[f64], y_points: &[f64], q: f64) -> Result<GridQuantile> {
    if cdf.is_empty() || cdf.len() != y_points.len() {
        return Err(DiscoError::DimensionMismatch(format!(
            "cdf has {} values for {} support points",
            cdf.len(),
            y_points.len()
        )));
    }
    Ok(pseudo_inverse(cdf, y_points, q))
}

pub(crate) fn pseudo_inverse(cdf: &[f64], y_points: &[f64], q: f64) -> GridQuantile {
    let idx = cdf.partition_point(|&f| f < q - CDF_TOLERANCE);
    match y_points.get(idx) {
        Some(&value) => GridQuantile {
            value,
            saturated: false,
        },
        None => GridQuantile {
            value: y_points[y_points.len() - 1],
            saturated: true,
        },
    }
}

/// Quantile function and CDF of one sample, both evaluated on fixed grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DistGrid {
    pub q_points: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub y_points: Vec<f64>,
    pub cdf: Vec<f64>,
}

pub fn dist_grid(
    sample: &[f64],
    m: usize,
    g: usize,
    qmin: f64,
    qmax: f64,
    support: Support,
) -> Result<DistGrid> {
    if m < 2 {
        return Err(DiscoError::InvalidGrid(format!("m must be at least 2, got {m}")));
    }
    let sorted = SortedSample::new(sample.to_vec())?;
    let support = Support::new(support.amin, support.amax)?;
    if support.amin == support.amax && (sorted.min() != support.amin || sorted.max() != support.amin) {
        return Err(DiscoError::InvalidGrid(
            "a one-point support requires a constant sample at that point".into(),
        ));
    }
    let q_points = probability_grid(m, qmin, qmax)?;
    let y_points = support_grid(g, support)?;
    let quantiles = q_points.iter().map(|&q| sorted.quantile(q)).collect();
    let cdf = y_points.iter().map(|&y| sorted.cdf(y)).collect();
    Ok(DistGrid {
        q_points,
        quantiles,
        y_points,
        cdf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Oracle: scan k = 1..=n and return the first order statistic with k/n >= q.
    fn quantile_by_enumeration(sample: &[f64], q: f64) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        (1..=n)
            .find(|&k| k as f64 / n as f64 >= q)
            .map(|k| s[k - 1])
            .unwrap_or(s[n - 1])
    }

    #[test]
    fn panel_counts_cells() {
        let panel = build_panel(&[(1, 1, 2.0), (1, 1, 3.0), (2, 1, 5.0)]).unwrap();
        assert_eq!(panel.units(), &[1, 2]);
        assert_eq!(panel.periods(), &[1]);
        let counts = panel.cell_counts();
        assert_eq!(counts[&(1, 1)], 2);
        assert_eq!(counts[&(2, 1)], 1);
        assert_eq!(panel.len(), 3);
    }

    #[test]
    fn panel_rejects_empty_and_nan() {
        assert!(matches!(build_panel(&[]), Err(DiscoError::EmptyInput)));
        let err = build_panel(&[(1, 1, f64::NAN)]).unwrap_err();
        assert!(matches!(err, DiscoError::NonFiniteValue { row: 1 }));
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.51).unwrap(), 3.0);
        assert_eq!(
            empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.51).unwrap(),
            quantile_by_enumeration(&[1.0, 2.0, 3.0, 4.0], 0.51)
        );
        for q in [0.0, 0.3, 1.0] {
            assert_eq!(empirical_quantile(&[7.0], q).unwrap(), 7.0);
        }
        assert_eq!(empirical_quantile(&[4.0, 1.0, 3.0], 0.0).unwrap(), 1.0);
        assert!(matches!(empirical_quantile(&[], 0.5), Err(DiscoError::EmptySample)));
        assert!(empirical_quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn quantile_rank_survives_rounding() {
        // 0.3 * 10 == 3.0000000000000004 in binary floating point.
        let sample: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&sample, 0.3).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&sample, 0.7).unwrap(), 7.0);
    }

    #[test]
    fn cdf_examples() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_cdf(&s, 2.0).unwrap(), 0.5);
        assert_eq!(empirical_cdf(&s, 0.5).unwrap(), 0.0);
        assert_eq!(empirical_cdf(&s, 4.0).unwrap(), 1.0);
        assert_eq!(empirical_cdf(&s, 9.0).unwrap(), 1.0);
        assert!((empirical_cdf(&[1.0, 1.0, 2.0], 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(empirical_cdf(&[], 0.0).is_err());
    }

    #[test]
    fn dist_grid_two_points() {
        let grid = dist_grid(&[0.0, 1.0], 2, 2, 0.0, 1.0, Support::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(grid.q_points, vec![0.25, 0.75]);
        assert_eq!(grid.quantiles, vec![0.0, 1.0]);
        assert_eq!(grid.y_points, vec![0.0, 1.0]);
        assert_eq!(grid.cdf, vec![0.5, 1.0]);
    }

    #[test]
    fn dist_grid_constant_sample() {
        let grid = dist_grid(&[5.0; 3], 4, 3, 0.0, 1.0, Support::new(5.0, 5.0).unwrap()).unwrap();
        assert!(grid.quantiles.iter().all(|&v| v == 5.0));
        assert!(grid.cdf.iter().all(|&v| v == 1.0));
        let wide = dist_grid(&[5.0; 3], 4, 5, 0.0, 1.0, Support::new(1.0, 5.0).unwrap()).unwrap();
        assert!(wide.quantiles.iter().all(|&v| v == 5.0));
        assert_eq!(wide.cdf[4], 1.0);
        assert!(dist_grid(&[4.0, 5.0], 4, 3, 0.0, 1.0, Support::new(5.0, 5.0).unwrap()).is_err());
    }

    #[test]
    fn dist_grid_categorical_support_points() {
        let sample = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 1.0];
        let grid = dist_grid(&sample, 4, 4, 0.0, 1.0, Support::new(1.0, 4.0).unwrap()).unwrap();
        assert_eq!(grid.y_points, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(grid.cdf, vec![0.25, 0.5, 0.625, 1.0]);
    }

    #[test]
    fn dist_grid_rejects_bad_arguments() {
        let s = Support::new(0.0, 1.0).unwrap();
        assert!(dist_grid(&[0.5], 1, 4, 0.0, 1.0, s).is_err());
        assert!(dist_grid(&[0.5], 4, 1, 0.0, 1.0, s).is_err());
        assert!(dist_grid(&[0.5], 4, 4, 0.6, 0.4, s).is_err());
        assert!(dist_grid(&[0.5], 4, 4, -0.1, 0.4, s).is_err());
        assert!(dist_grid(&[], 4, 4, 0.0, 1.0, s).is_err());
    }

    #[test]
    fn pseudo_inverse_examples() {
        let cdf = [0.25, 0.5, 0.75, 1.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_from_cdf(&cdf, &y, 0.6).unwrap().value, 3.0);
        assert_eq!(quantile_from_cdf(&cdf, &y, 0.0).unwrap().value, 1.0);
        let top = quantile_from_cdf(&cdf, &y, 1.0).unwrap();
        assert_eq!(top, GridQuantile { value: 4.0, saturated: false });
        let over = quantile_from_cdf(&[0.2, 0.5], &[1.0, 2.0], 0.9).unwrap();
        assert_eq!(over, GridQuantile { value: 2.0, saturated: true });
        assert!(quantile_from_cdf(&cdf, &y[..3], 0.5).is_err());
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-50i32..50).prop_map(|v| v as f64 / 4.0), 1..40)
    }

    proptest! {
        #[test]
        fn quantile_matches_enumeration(s in sample_strategy(), q in 0.0f64..=1.0) {
            prop_assert_eq!(empirical_quantile(&s, q).unwrap(), quantile_by_enumeration(&s, q));
        }

        #[test]
        fn quantile_and_cdf_are_monotone(s in sample_strategy(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(empirical_quantile(&s, lo).unwrap() <= empirical_quantile(&s, hi).unwrap());
            let (ylo, yhi) = (lo * 30.0 - 15.0, hi * 30.0 - 15.0);
            prop_assert!(empirical_cdf(&s, ylo).unwrap() <= empirical_cdf(&s, yhi).unwrap());
        }

        #[test]
        fn galois_connection(s in sample_strategy(), q in 0.001f64..=1.0, y in -13.0f64..13.0) {
            let x = empirical_quantile(&s, q).unwrap();
            prop_assert!(empirical_cdf(&s, x).unwrap() >= q);
            let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
            if y >= min {
                let f = empirical_cdf(&s, y).unwrap();
                prop_assert!(empirical_quantile(&s, f).unwrap() <= y);
            }
        }

        #[test]
        fn grid_refinement_keeps_coincident_points(s in sample_strategy(), g in 2usize..20) {
            let support = Support::new(-13.0, 13.0).unwrap();
            let coarse = dist_grid(&s, 4, g, 0.0, 1.0, support).unwrap();
            let fine = dist_grid(&s, 4, 2 * g - 1, 0.0, 1.0, support).unwrap();
            for k in 0..g {
                prop_assert_eq!(coarse.y_points[k], fine.y_points[2 * k]);
                prop_assert_eq!(coarse.cdf[k], fine.cdf[2 * k]);
            }
        }

        #[test]
        fn grid_round_trip_within_one_cell(s in sample_strategy(), g in 2usize..60) {
            let support = Support::new(-12.5, 12.5).unwrap();
            let grid = dist_grid(&s, 50, g, 0.0, 1.0, support).unwrap();
            let width = 25.0 / (g - 1) as f64;
            for (&q, &exact) in grid.q_points.iter().zip(&grid.quantiles) {
                let back = quantile_from_cdf(&grid.cdf, &grid.y_points, q).unwrap();
                prop_assert!(!back.saturated);
                prop_assert!(back.value >= exact - 1e-12);
                prop_assert!(back.value - exact <= width + 1e-12);
            }
        }
    }
}
