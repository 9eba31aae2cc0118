//! The estimator: per-period weight fits on pre-treatment data, averaged
//! weights, synthetic quantile functions and CDFs for every period, and the
//! treated-minus-synthetic differences.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::distributions::{
    probability_grid, pseudo_inverse, support_grid, MicroPanel, Period, SortedSample, Support, UnitId,
};
use crate::error::{DiscoError, Result};
use crate::solvers::{solve_ls, solve_simplex_l1, LsProblem, WeightVector};

/// Which grid quantity a summary or band refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AggKind {
    #[serde(rename = "quantile")]
    Quantile,
    #[serde(rename = "cdf")]
    Cdf,
    #[serde(rename = "quantileDiff")]
    QuantileDiff,
    #[serde(rename = "cdfDiff")]
    CdfDiff,
}

impl AggKind {
    pub const ALL: [AggKind; 4] = [AggKind::Quantile, AggKind::Cdf, AggKind::QuantileDiff, AggKind::CdfDiff];

    pub fn is_diff(self) -> bool {
        matches!(self, AggKind::QuantileDiff | AggKind::CdfDiff)
    }

    /// Grid coordinates are probabilities (true) or outcome values (false).
    pub fn is_quantile(self) -> bool {
        matches!(self, AggKind::Quantile | AggKind::QuantileDiff)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggKind::Quantile => "quantile",
            AggKind::Cdf => "cdf",
            AggKind::QuantileDiff => "quantileDiff",
            AggKind::CdfDiff => "cdfDiff",
        }
    }
}

impl fmt::Display for AggKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggKind {
    type Err = DiscoError;

    fn from_str(s: &str) -> Result<Self> {
        AggKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| DiscoError::InvalidConfig(format!("unknown aggregation kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceConfig {
    /// Bootstrap confidence bands.
    pub ci: bool,
    pub boots: usize,
    pub cl: f64,
    /// Sup-t bands across the grid instead of pointwise intervals.
    pub uniform: bool,
    pub permutation: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            ci: false,
            boots: 300,
            cl: 0.95,
            uniform: true,
            permutation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoConfig {
    pub target_id: UnitId,
    /// First treated period.
    pub t0: Period,
    /// Probability points used to approximate the fitting integral.
    pub m: usize,
    /// Points on which quantile functions and CDFs are reported.
    pub g: usize,
    /// Fit CDF mixtures under the L1 distance instead of quantile functions.
    pub mixture: bool,
    pub simplex: bool,
    pub qmin: f64,
    pub qmax: f64,
    pub seed: u64,
    pub inference: InferenceConfig,
    pub agg: AggKind,
    /// Partition points for summaries; `None` picks five equally spaced points.
    pub samples: Option<Vec<f64>>,
}

impl DiscoConfig {
    pub fn new(target_id: UnitId, t0: Period) -> Self {
        Self {
            target_id,
            t0,
            m: 1000,
            g: 100,
            mixture: false,
            simplex: true,
            qmin: 0.0,
            qmax: 1.0,
            seed: 0,
            inference: InferenceConfig::default(),
            agg: AggKind::QuantileDiff,
            samples: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DiscoError::InvalidConfig(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.g < 2 {
            return bad(format!("g must be at least 2, got {}", self.g));
        }
        if !(0.0 <= self.qmin && self.qmin < self.qmax && self.qmax <= 1.0) {
            return bad(format!(
                "need 0 <= qmin < qmax <= 1, got qmin={}, qmax={}",
                self.qmin, self.qmax
            ));
        }
        if self.mixture && !self.simplex {
            return bad("mixture weights must lie in the simplex; drop one of mixture / no-simplex".into());
        }
        let inf = &self.inference;
        if !(inf.cl > 0.0 && inf.cl < 1.0) {
            return bad(format!("confidence level must lie in (0, 1), got {}", inf.cl));
        }
        if inf.ci && inf.boots < 1 {
            return bad("boots must be at least 1".into());
        }
        Ok(())
    }

    /// Partition points for summaries of `kind`, defaulting to five equally spaced points.
    pub fn partition(&self, kind: AggKind, support: Support) -> Vec<f64> {
        if let Some(samples) = &self.samples {
            return samples.clone();
        }
        let (lo, hi) = if kind.is_quantile() {
            (0.0, 1.0)
        } else {
            (support.amin, support.amax)
        };
        let mut points: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
        points[4] = hi;
        points
    }
}

/// Evaluation grids shared by every unit and period of one run.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grids {
    /// `m` points for the fitting integral.
    pub q_fit: Vec<f64>,
    /// `g` reporting probabilities.
    pub q_out: Vec<f64>,
    /// `g` reporting support points.
    pub y: Vec<f64>,
    pub cell_width: f64,
    pub qmin: f64,
    pub qmax: f64,
}

impl Grids {
    pub fn new(config: &DiscoConfig, support: Support) -> Result<Self> {
        let y = support_grid(config.g, support)?;
        let cell_width = if support.amax > support.amin {
            (support.amax - support.amin) / (config.g - 1) as f64
        } else {
            1.0
        };
        Ok(Self {
            q_fit: probability_grid(config.m, config.qmin, config.qmax)?,
            q_out: probability_grid(config.g, config.qmin, config.qmax)?,
            y,
            cell_width,
            qmin: config.qmin,
            qmax: config.qmax,
        })
    }
}

/// Complete (unit x period) table of sorted cell samples.
#[derive(Debug, Clone)]
pub(crate) struct CellTable {
    pub units: Vec<UnitId>,
    pub periods: Vec<Period>,
    cells: Vec<SortedSample>,
}

impl CellTable {
    pub fn from_panel(panel: &MicroPanel) -> Result<Self> {
        let units = panel.units().to_vec();
        let periods = panel.periods().to_vec();
        let mut cells = Vec::with_capacity(units.len() * periods.len());
        for &unit in &units {
            for &period in &periods {
                let values = panel
                    .cell(unit, period)
                    .ok_or(DiscoError::MissingCell { unit, period })?;
                cells.push(SortedSample::new(values.to_vec())?);
            }
        }
        Ok(Self { units, periods, cells })
    }

    pub fn cell(&self, unit: usize, period: usize) -> &SortedSample {
        &self.cells[unit * self.periods.len() + period]
    }

    /// Same shape, each cell replaced by a resample with replacement of its own size.
    pub fn resample<R: rand::Rng>(&self, rng: &mut R) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|cell| {
                let values = cell.values();
                let n = values.len();
                let mut draw: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
                draw.sort_by(f64::total_cmp);
                SortedSample::from_sorted_unchecked(draw)
            })
            .collect();
        Self {
            units: self.units.clone(),
            periods: self.periods.clone(),
            cells,
        }
    }
}

/// Which unit plays treated, which serve as donors, and the period split.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub target: usize,
    pub donors: Vec<usize>,
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
}

impl Layout {
    pub fn new(table: &CellTable, target: usize, t0: Period) -> Self {
        let donors = (0..table.units.len()).filter(|&u| u != target).collect();
        let (pre, post) = (0..table.periods.len()).partition(|&t| table.periods[t] < t0);
        Self {
            target,
            donors,
            pre,
            post,
        }
    }
}

/// Target and synthetic curves for one period.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PeriodPaths {
    pub quantile_t: Vec<f64>,
    pub quantile_synth: Vec<f64>,
    pub cdf_t: Vec<f64>,
    pub cdf_synth: Vec<f64>,
    /// Squared 2-Wasserstein distance between target and synthetic on `[qmin, qmax]`.
    pub w2_sq: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Fit {
    pub period_weights: Vec<WeightVector>,
    pub weights: Vec<f64>,
    pub paths: Vec<PeriodPaths>,
}

fn fit_period_weights(
    table: &CellTable,
    layout: &Layout,
    period: usize,
    config: &DiscoConfig,
    grids: &Grids,
) -> Result<WeightVector> {
    let target = table.cell(layout.target, period);
    let donors = layout.donors.iter().map(|&u| table.cell(u, period));
    if config.mixture {
        let columns = donors.map(|s| grids.y.iter().map(|&y| s.cdf(y)).collect()).collect();
        let target_cdf = grids.y.iter().map(|&y| target.cdf(y)).collect();
        let problem = LsProblem::new(columns, target_cdf, true)?.with_cell_width(grids.cell_width);
        solve_simplex_l1(&problem)
    } else {
        let columns = donors.map(|s| grids.q_fit.iter().map(|&q| s.quantile(q)).collect()).collect();
        let target_q = grids.q_fit.iter().map(|&q| target.quantile(q)).collect();
        solve_ls(&LsProblem::new(columns, target_q, config.simplex)?)
    }
}

fn period_paths(
    table: &CellTable,
    layout: &Layout,
    period: usize,
    weights: &[f64],
    config: &DiscoConfig,
    grids: &Grids,
) -> PeriodPaths {
    let target = table.cell(layout.target, period);
    let donors: Vec<(&SortedSample, f64)> = layout
        .donors
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(&u, &w)| (table.cell(u, period), w))
        .collect();
    let cdf_t: Vec<f64> = grids.y.iter().map(|&y| target.cdf(y)).collect();

    if config.mixture {
        let cdf_synth: Vec<f64> = grids
            .y
            .iter()
            .map(|&y| donors.iter().map(|(s, w)| w * s.cdf(y)).sum())
            .collect();
        let invert = |cdf: &[f64], qs: &[f64]| -> Vec<f64> {
            qs.iter().map(|&q| pseudo_inverse(cdf, &grids.y, q).value).collect()
        };
        let w2_sq = wasserstein2_sq_unchecked(
            &invert(&cdf_t, &grids.q_fit),
            &invert(&cdf_synth, &grids.q_fit),
            grids.qmin,
            grids.qmax,
        );
        PeriodPaths {
            quantile_t: invert(&cdf_t, &grids.q_out),
            quantile_synth: invert(&cdf_synth, &grids.q_out),
            cdf_t,
            cdf_synth,
            w2_sq,
        }
    } else {
        let barycenter = |q: f64| -> f64 { donors.iter().map(|(s, w)| w * s.quantile(q)).sum() };
        let fine_synth: Vec<f64> = grids.q_fit.iter().map(|&q| barycenter(q)).collect();
        let fine_t: Vec<f64> = grids.q_fit.iter().map(|&q| target.quantile(q)).collect();
        // CDF of the barycenter: the fine quantile grid read as equal-mass atoms.
        let mut atoms = fine_synth.clone();
        atoms.sort_by(f64::total_cmp);
        let m = atoms.len() as f64;
        let span = grids.qmax - grids.qmin;
        let cdf_synth = grids
            .y
            .iter()
            .map(|&y| grids.qmin + span * atoms.partition_point(|&a| a <= y) as f64 / m)
            .collect();
        PeriodPaths {
            quantile_t: grids.q_out.iter().map(|&q| target.quantile(q)).collect(),
            quantile_synth: grids.q_out.iter().map(|&q| barycenter(q)).collect(),
            cdf_t,
            cdf_synth,
            w2_sq: wasserstein2_sq_unchecked(&fine_t, &fine_synth, grids.qmin, grids.qmax),
        }
    }
}

/// Weights from the pre-periods, then paths for every period.
pub(crate) fn fit(table: &CellTable, layout: &Layout, config: &DiscoConfig, grids: &Grids) -> Result<Fit> {
    let period_weights = layout
        .pre
        .iter()
        .map(|&t| fit_period_weights(table, layout, t, config, grids))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = period_weights.iter().map(|w| w.weights.clone()).collect();
    let weights = average_weights(&rows)?;
    let paths = (0..table.periods.len())
        .map(|t| period_paths(table, layout, t, &weights, config, grids))
        .collect();
    Ok(Fit {
        period_weights,
        weights,
        paths,
    })
}

/// Validated inputs for one run: cell table, grids and layout for the configured target.
pub(crate) struct Prepared {
    pub table: CellTable,
    pub grids: Grids,
    pub layout: Layout,
    pub support: Support,
}

impl Prepared {
    pub fn new(panel: &MicroPanel, config: &DiscoConfig) -> Result<Self> {
        config.validate()?;
        let target = panel
            .units()
            .iter()
            .position(|&u| u == config.target_id)
            .ok_or(DiscoError::UnknownUnit(config.target_id))?;
        if panel.units().len() < 2 {
            return Err(DiscoError::InvalidConfig("need at least one control unit".into()));
        }
        let periods = panel.periods();
        let (first, last) = (periods[0], periods[periods.len() - 1]);
        if config.t0 <= first || config.t0 > last {
            return Err(DiscoError::InvalidConfig(format!(
                "t0 = {} must lie in ({first}, {last}] so that pre- and post-treatment periods exist",
                config.t0
            )));
        }
        let table = CellTable::from_panel(panel)?;
        let support = panel.support();
        let grids = Grids::new(config, support)?;
        let layout = Layout::new(&table, target, config.t0);
        Ok(Self {
            table,
            grids,
            layout,
            support,
        })
    }
}

/// Unweighted column mean of per-period weight rows.
pub fn average_weights(period_weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = period_weights
        .first()
        .ok_or_else(|| DiscoError::InvalidConfig("no pre-treatment periods to average".into()))?;
    if period_weights.iter().any(|row| row.len() != first.len()) {
        return Err(DiscoError::DimensionMismatch("weight rows differ in length".into()));
    }
    let n = period_weights.len() as f64;
    Ok((0..first.len())
        .map(|j| period_weights.iter().map(|row| row[j]).sum::<f64>() / n)
        .collect())
}

fn wasserstein2_sq_unchecked(a: &[f64], b: &[f64], qmin: f64, qmax: f64) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (qmax - qmin) * sum / a.len() as f64
}

/// Midpoint-rule `int_{qmin}^{qmax} |a(q) - b(q)|^2 dq` for quantile functions on a shared midpoint grid.
pub fn wasserstein2_sq(qf_a: &[f64], qf_b: &[f64], qmin: f64, qmax: f64) -> Result<f64> {
    if qf_a.len() != qf_b.len() || qf_a.is_empty() {
        return Err(DiscoError::DimensionMismatch(format!(
            "quantile vectors of length {} and {}",
            qf_a.len(),
            qf_b.len()
        )));
    }
    Ok(wasserstein2_sq_unchecked(qf_a, qf_b, qmin, qmax))
}

/// Weight fit for a single pre-treatment period.
pub fn period_weights(panel: &MicroPanel, config: &DiscoConfig, period: Period) -> Result<WeightVector> {
    let prepared = Prepared::new(panel, config)?;
    if period >= config.t0 {
        return Err(DiscoError::InvalidConfig(format!(
            "period {period} is not before t0 = {}",
            config.t0
        )));
    }
    let t = prepared
        .table
        .periods
        .iter()
        .position(|&p| p == period)
        .ok_or_else(|| DiscoError::InvalidConfig(format!("period {period} not in panel")))?;
    fit_period_weights(&prepared.table, &prepared.layout, t, config, &prepared.grids)
}

/// Treated and synthetic curves for every period under fixed weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticPaths {
    pub periods: Vec<Period>,
    pub q_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub quantile_t: Vec<Vec<f64>>,
    pub quantile_synth: Vec<Vec<f64>>,
    pub cdf_t: Vec<Vec<f64>>,
    pub cdf_synth: Vec<Vec<f64>>,
    pub wasserstein_sq: Vec<f64>,
}

pub fn synthetic_paths(panel: &MicroPanel, weights: &[f64], config: &DiscoConfig) -> Result<SyntheticPaths> {
    let prepared = Prepared::new(panel, config)?;
    let layout = &prepared.layout;
    if weights.len() != layout.donors.len() {
        return Err(DiscoError::DimensionMismatch(format!(
            "{} weights for {} controls",
            weights.len(),
            layout.donors.len()
        )));
    }
    let paths: Vec<PeriodPaths> = (0..prepared.table.periods.len())
        .map(|t| period_paths(&prepared.table, layout, t, weights, config, &prepared.grids))
        .collect();
    Ok(SyntheticPaths {
        periods: prepared.table.periods.clone(),
        q_grid: prepared.grids.q_out.clone(),
        y_grid: prepared.grids.y.clone(),
        quantile_t: paths.iter().map(|p| p.quantile_t.clone()).collect(),
        quantile_synth: paths.iter().map(|p| p.quantile_synth.clone()).collect(),
        cdf_t: paths.iter().map(|p| p.cdf_t.clone()).collect(),
        cdf_synth: paths.iter().map(|p| p.cdf_synth.clone()).collect(),
        wasserstein_sq: paths.iter().map(|p| p.w2_sq).collect(),
    })
}

/// Point estimate. Matrices are stored one column per period, each with `g` entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoResult {
    pub config: DiscoConfig,
    pub control_ids: Vec<UnitId>,
    pub periods: Vec<Period>,
    pub pre_periods: Vec<Period>,
    pub post_periods: Vec<Period>,
    pub period_weights: Vec<WeightVector>,
    pub weights: Vec<f64>,
    pub support: Support,
    pub q_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub quantile_t: Vec<Vec<f64>>,
    pub quantile_synth: Vec<Vec<f64>>,
    pub quantile_diff: Vec<Vec<f64>>,
    pub cdf_t: Vec<Vec<f64>>,
    pub cdf_synth: Vec<Vec<f64>>,
    pub cdf_diff: Vec<Vec<f64>>,
    /// Squared 2-Wasserstein distance between treated and synthetic, per period.
    pub wasserstein_sq: Vec<f64>,
    /// Treated cell size per period.
    pub target_counts: Vec<usize>,
    pub n_obs: usize,
}

impl DiscoResult {
    pub fn values(&self, kind: AggKind) -> &[Vec<f64>] {
        match kind {
            AggKind::Quantile => &self.quantile_synth,
            AggKind::Cdf => &self.cdf_synth,
            AggKind::QuantileDiff => &self.quantile_diff,
            AggKind::CdfDiff => &self.cdf_diff,
        }
    }

    /// Probabilities for quantile kinds, support points for CDF kinds.
    pub fn coordinates(&self, kind: AggKind) -> &[f64] {
        if kind.is_quantile() {
            &self.q_grid
        } else {
            &self.y_grid
        }
    }

    pub fn is_post(&self, period_index: usize) -> bool {
        self.periods[period_index] >= self.config.t0
    }
}

fn difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
        .collect()
}

pub(crate) fn assemble(prepared: &Prepared, fit: Fit, config: &DiscoConfig, n_obs: usize) -> DiscoResult {
    let table = &prepared.table;
    let layout = &prepared.layout;
    let column = |f: fn(&PeriodPaths) -> &Vec<f64>| -> Vec<Vec<f64>> { fit.paths.iter().map(|p| f(p).clone()).collect() };
    let quantile_t = column(|p| &p.quantile_t);
    let quantile_synth = column(|p| &p.quantile_synth);
    let cdf_t = column(|p| &p.cdf_t);
    let cdf_synth = column(|p| &p.cdf_synth);
    DiscoResult {
        config: config.clone(),
        control_ids: layout.donors.iter().map(|&u| table.units[u]).collect(),
        periods: table.periods.clone(),
        pre_periods: layout.pre.iter().map(|&t| table.periods[t]).collect(),
        post_periods: layout.post.iter().map(|&t| table.periods[t]).collect(),
        weights: fit.weights,
        period_weights: fit.period_weights,
        support: prepared.support,
        q_grid: prepared.grids.q_out.clone(),
        y_grid: prepared.grids.y.clone(),
        quantile_diff: difference(&quantile_t, &quantile_synth),
        cdf_diff: difference(&cdf_t, &cdf_synth),
        quantile_t,
        quantile_synth,
        cdf_t,
        cdf_synth,
        wasserstein_sq: fit.paths.iter().map(|p| p.w2_sq).collect(),
        target_counts: (0..table.periods.len()).map(|t| table.cell(layout.target, t).len()).collect(),
        n_obs,
    }
}

pub fn run_disco(panel: &MicroPanel, config: &DiscoConfig) -> Result<DiscoResult> {
    let prepared = Prepared::new(panel, config)?;
    let fit = fit(&prepared.table, &prepared.layout, config, &prepared.grids)?;
    Ok(assemble(&prepared, fit, config, panel.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::build_panel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn records_for(unit: UnitId, period: Period, values: &[f64]) -> Vec<(UnitId, Period, f64)> {
        values.iter().map(|&v| (unit, period, v)).collect()
    }

    fn normal_sample(rng: &mut ChaCha8Rng, mean: f64, sd: f64, n: usize) -> Vec<f64> {
        let d = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    #[test]
    fn agg_kind_round_trip() {
        for k in AggKind::ALL {
            assert_eq!(k.as_str().parse::<AggKind>().unwrap(), k);
        }
        assert!("median".parse::<AggKind>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = DiscoConfig::new(1, 2);
        assert!(c.validate().is_ok());
        c.mixture = true;
        c.simplex = false;
        assert!(c.validate().is_err());
        let mut c = DiscoConfig::new(1, 2);
        c.qmin = 0.5;
        c.qmax = 0.4;
        assert!(c.validate().is_err());
        let mut c = DiscoConfig::new(1, 2);
        c.g = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn average_weights_examples() {
        assert_eq!(average_weights(&[vec![0.2, 0.8]]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(average_weights(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.5, 0.5]);
        let avg = average_weights(&[vec![0.2, 0.8], vec![0.4, 0.6], vec![0.6, 0.4]]).unwrap();
        assert!((avg[0] - 0.4).abs() < 1e-15 && (avg[1] - 0.6).abs() < 1e-15);
        assert!(average_weights(&[]).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(wasserstein2_sq(&a, &a, 0.0, 1.0).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        assert!((wasserstein2_sq(&shifted, &a, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        let m = 200;
        let q = probability_grid(m, 0.0, 1.0).unwrap();
        let w = wasserstein2_sq(&q, &vec![0.0; m], 0.0, 1.0).unwrap();
        // midpoint rule on q^2: 1/3 - 1/(12 m^2)
        assert!((w - 1.0 / 3.0).abs() < 1.0 / (m * m) as f64);
        assert!(wasserstein2_sq(&a, &a[..2], 0.0, 1.0).is_err());
    }

    #[test]
    fn treated_copy_of_a_control_gets_its_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut records = vec![];
        let samples: Vec<Vec<f64>> = (0..4).map(|j| normal_sample(&mut rng, j as f64, 1.0 + 0.3 * j as f64, 300)).collect();
        for (j, s) in samples.iter().enumerate() {
            records.extend(records_for(j as UnitId + 1, 1, s));
            records.extend(records_for(j as UnitId + 1, 2, s));
        }
        records.extend(records_for(0, 1, &samples[2]));
        records.extend(records_for(0, 2, &samples[2]));
        let panel = build_panel(&records).unwrap();
        let mut config = DiscoConfig::new(0, 2);
        config.m = 200;
        config.g = 30;
        let w = period_weights(&panel, &config, 1).unwrap();
        assert!((w.weights[2] - 1.0).abs() < 1e-8, "{:?}", w.weights);
        assert!(period_weights(&panel, &config, 2).is_err());

        let result = run_disco(&panel, &config).unwrap();
        assert_eq!(result.control_ids, vec![1, 2, 3, 4]);
        assert!((result.weights[2] - 1.0).abs() < 1e-8);
        for col in &result.quantile_diff {
            assert!(col.iter().all(|v| v.abs() < 1e-6));
        }
        // the synthetic CDF is read off m quantile atoms, so it matches only to grid resolution
        for col in &result.cdf_diff {
            assert!(col.iter().all(|v| v.abs() <= 1.0 / 200.0 + 1.0 / 300.0 + 1e-9));
        }
    }

    #[test]
    fn synthetic_paths_for_vertex_and_midpoint_weights() {
        let mut records = vec![];
        records.extend(records_for(0, 1, &[1.0, 2.0, 3.0]));
        records.extend(records_for(0, 2, &[1.0, 2.0, 3.0]));
        for t in 1..=2 {
            records.extend(records_for(1, t, &[0.0, 0.0, 0.0]));
            records.extend(records_for(2, t, &[2.0, 4.0, 6.0]));
        }
        let panel = build_panel(&records).unwrap();
        let mut config = DiscoConfig::new(0, 2);
        config.m = 3;
        config.g = 3;
        let half = synthetic_paths(&panel, &[0.5, 0.5], &config).unwrap();
        assert_eq!(half.quantile_synth[0], vec![1.0, 2.0, 3.0]);
        let vertex = synthetic_paths(&panel, &[0.0, 1.0], &config).unwrap();
        assert_eq!(vertex.quantile_synth[1], vec![2.0, 4.0, 6.0]);
        let direct: Vec<f64> = vertex.y_grid.iter().map(|&y| crate::empirical_cdf(&[2.0, 4.0, 6.0], y).unwrap()).collect();
        assert_eq!(vertex.cdf_synth[1], direct);
        assert!(synthetic_paths(&panel, &[1.0], &config).is_err());
    }

    #[test]
    fn run_rejects_bad_layouts() {
        let mut records = records_for(1, 1, &[1.0, 2.0]);
        records.extend(records_for(1, 2, &[1.0, 2.0]));
        records.extend(records_for(2, 1, &[1.0, 3.0]));
        let panel = build_panel(&records).unwrap();
        let err = run_disco(&panel, &DiscoConfig::new(1, 2)).unwrap_err();
        assert!(matches!(err, DiscoError::MissingCell { unit: 2, period: 2 }), "{err}");
        assert!(matches!(run_disco(&panel, &DiscoConfig::new(9, 2)), Err(DiscoError::UnknownUnit(9))));
        assert!(run_disco(&panel, &DiscoConfig::new(1, 1)).is_err());
        assert!(run_disco(&panel, &DiscoConfig::new(1, 3)).is_err());
    }

    #[test]
    fn one_observation_per_cell_reduces_to_scalar_fit() {
        // Constant quantile columns: the fit is classical synthetic control on scalars.
        let mut records = vec![(0, 1, 2.6), (0, 2, 3.0)];
        for (u, v) in [(1, 1.0), (2, 3.0), (3, 5.0)] {
            records.push((u, 1, v));
            records.push((u, 2, v));
        }
        let panel = build_panel(&records).unwrap();
        let mut config = DiscoConfig::new(0, 2);
        config.m = 10;
        config.g = 5;
        let result = run_disco(&panel, &config).unwrap();
        let fitted: f64 = result.weights.iter().zip([1.0, 3.0, 5.0]).map(|(w, v)| w * v).sum();
        assert!((fitted - 2.6).abs() < 1e-8, "{:?}", result.weights);
    }

    #[test]
    fn synthetic_columns_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut records = vec![];
        for u in 0..4 {
            for t in 1..=3 {
                records.extend(records_for(u, t, &normal_sample(&mut rng, u as f64, 1.0, 80)));
            }
        }
        let panel = build_panel(&records).unwrap();
        for mixture in [false, true] {
            let mut config = DiscoConfig::new(0, 3);
            config.m = 100;
            config.g = 25;
            config.mixture = mixture;
            let result = run_disco(&panel, &config).unwrap();
            for col in result.quantile_synth.iter().chain(&result.cdf_synth).chain(&result.quantile_t).chain(&result.cdf_t) {
                assert!(col.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            }
            for row in &result.period_weights {
                assert!((row.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            }
            // averaged weights cannot beat each period's own optimum
            let prepared = Prepared::new(&panel, &config).unwrap();
            for (k, &t) in prepared.layout.pre.iter().enumerate() {
                let target = prepared.table.cell(prepared.layout.target, t);
                let donors: Vec<&SortedSample> = prepared.layout.donors.iter().map(|&u| prepared.table.cell(u, t)).collect();
                let averaged = if mixture {
                    let cols: Vec<Vec<f64>> = donors.iter().map(|s| prepared.grids.y.iter().map(|&y| s.cdf(y)).collect()).collect();
                    let tgt = prepared.grids.y.iter().map(|&y| target.cdf(y)).collect();
                    LsProblem::new(cols, tgt, true).unwrap().with_cell_width(prepared.grids.cell_width).l1_residual(&result.weights)
                } else {
                    let cols: Vec<Vec<f64>> = donors.iter().map(|s| prepared.grids.q_fit.iter().map(|&q| s.quantile(q)).collect()).collect();
                    let tgt = prepared.grids.q_fit.iter().map(|&q| target.quantile(q)).collect();
                    LsProblem::new(cols, tgt, true).unwrap().mean_squared_residual(&result.weights)
                };
                assert!(averaged >= result.period_weights[k].objective - 1e-12);
            }
        }
    }

    #[test]
    fn representations_agree_within_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut records = vec![];
        for u in 0..4 {
            for t in 1..=2 {
                records.extend(records_for(u, t, &normal_sample(&mut rng, 0.5 * u as f64, 1.0, 150)));
            }
        }
        let panel = build_panel(&records).unwrap();
        for mixture in [false, true] {
            let mut config = DiscoConfig::new(0, 2);
            config.m = 400;
            config.g = 40;
            config.mixture = mixture;
            let r = run_disco(&panel, &config).unwrap();
            let width = r.y_grid[1] - r.y_grid[0];
            for t in 0..r.periods.len() {
                for (k, &q) in r.q_grid.iter().enumerate() {
                    let back = crate::quantile_from_cdf(&r.cdf_synth[t], &r.y_grid, q).unwrap().value;
                    assert!((back - r.quantile_synth[t][k]).abs() <= width + 1e-9, "mixture={mixture} q={q}");
                }
            }
        }
    }

    #[test]
    fn quantile_tails_outside_range_do_not_move_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut base = vec![];
        for u in 0..4 {
            for t in 1..=3 {
                base.push(((u, t), normal_sample(&mut rng, u as f64 * 0.7, 1.0 + 0.2 * u as f64, 100)));
            }
        }
        let to_records = |cells: &[((UnitId, Period), Vec<f64>)]| -> Vec<(UnitId, Period, f64)> {
            cells.iter().flat_map(|((u, t), v)| records_for(*u, *t, v)).collect()
        };
        let mut config = DiscoConfig::new(0, 3);
        config.m = 50;
        config.g = 10;
        config.qmin = 0.1;
        config.qmax = 0.9;
        let before = run_disco(&build_panel(&to_records(&base)).unwrap(), &config).unwrap();
        // Push each cell's extreme order statistics further out.
        let mut moved = base.clone();
        for (_, values) in moved.iter_mut() {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            for v in &mut values[..5] {
                *v -= 10.0;
            }
            for v in &mut values[n - 5..] {
                *v += 10.0;
            }
        }
        let after = run_disco(&build_panel(&to_records(&moved)).unwrap(), &config).unwrap();
        for (a, b) in before.weights.iter().zip(&after.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
