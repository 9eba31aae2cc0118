//! Placebo permutation test and cell-resampling bootstrap bands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::disco::{fit, AggKind, DiscoConfig, DiscoResult, Layout, PeriodPaths, Prepared};
use crate::distributions::{MicroPanel, Period, SortedSample, UnitId};
use crate::error::{DiscoError, Result};

/// Floor applied to pointwise standard errors before studentizing.
const SE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    /// Treated unit first, then the controls in panel order.
    pub units: Vec<UnitId>,
    pub ratios: Vec<f64>,
    pub p_value: f64,
    pub pre_rmse: Vec<f64>,
    pub post_rmse: Vec<f64>,
}

/// Post-to-pre ratio of root mean squared Wasserstein distances.
pub fn rmse_ratio(pre_rmse: f64, post_rmse: f64) -> f64 {
    if pre_rmse > 0.0 {
        post_rmse / pre_rmse
    } else if post_rmse > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Share of units whose ratio is at least the treated unit's (index 0).
pub fn permutation_p_value(ratios: &[f64]) -> f64 {
    let r0 = ratios[0];
    ratios.iter().filter(|&&r| r >= r0).count() as f64 / ratios.len() as f64
}

fn root_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (sum / n as f64).sqrt()
}

/// Re-runs the estimator with every unit in turn playing treated; all other units are donors.
pub fn permutation_test(panel: &MicroPanel, config: &DiscoConfig) -> Result<PermutationResult> {
    let prepared = Prepared::new(panel, config)?;
    let table = &prepared.table;
    let target = prepared.layout.target;
    let order: Vec<usize> = std::iter::once(target)
        .chain((0..table.units.len()).filter(|&u| u != target))
        .collect();
    let fits: Vec<Result<(f64, f64)>> = order
        .par_iter()
        .map(|&u| {
            let layout = Layout::new(table, u, config.t0);
            let fitted = fit(table, &layout, config, &prepared.grids).map_err(|e| DiscoError::Placebo {
                unit: table.units[u],
                source: Box::new(e),
            })?;
            let pre = root_mean(layout.pre.iter().map(|&t| fitted.paths[t].w2_sq));
            let post = root_mean(layout.post.iter().map(|&t| fitted.paths[t].w2_sq));
            Ok((pre, post))
        })
        .collect();
    let (pre_rmse, post_rmse): (Vec<f64>, Vec<f64>) = fits.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let ratios: Vec<f64> = pre_rmse.iter().zip(&post_rmse).map(|(&a, &b)| rmse_ratio(a, b)).collect();
    Ok(PermutationResult {
        units: order.iter().map(|&u| table.units[u]).collect(),
        p_value: permutation_p_value(&ratios),
        ratios,
        pre_rmse,
        post_rmse,
    })
}

/// Bootstrap gap draws for one representation, scaled by the root of the treated cell size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTensor {
    pub kind: AggKind,
    pub replicates: usize,
    pub periods: usize,
    pub grid: usize,
    /// Flattened as `[replicate][period][grid point]`.
    pub values: Vec<f64>,
}

impl GapTensor {
    fn zeros(kind: AggKind, replicates: usize, periods: usize, grid: usize) -> Self {
        Self {
            kind,
            replicates,
            periods,
            grid,
            values: vec![0.0; replicates * periods * grid],
        }
    }

    pub fn get(&self, replicate: usize, period: usize, point: usize) -> f64 {
        self.values[(replicate * self.periods + period) * self.grid + point]
    }

    fn row_mut(&mut self, replicate: usize, period: usize) -> &mut [f64] {
        let start = (replicate * self.periods + period) * self.grid;
        &mut self.values[start..start + self.grid]
    }
}

/// Gap draws for every period and all four representations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub requested: usize,
    pub dropped: usize,
    pub periods: Vec<Period>,
    /// Root of the treated unit's cell size, per period.
    pub root_n: Vec<f64>,
    pub quantile: GapTensor,
    pub cdf: GapTensor,
    pub quantile_diff: GapTensor,
    pub cdf_diff: GapTensor,
}

impl BootstrapDraws {
    pub fn replicates(&self) -> usize {
        self.quantile.replicates
    }

    pub fn tensor(&self, kind: AggKind) -> &GapTensor {
        match kind {
            AggKind::Quantile => &self.quantile,
            AggKind::Cdf => &self.cdf,
            AggKind::QuantileDiff => &self.quantile_diff,
            AggKind::CdfDiff => &self.cdf_diff,
        }
    }

    /// Draws in effect units, indexed `[replicate][period][grid point]`.
    pub fn unscaled(&self, kind: AggKind) -> Vec<Vec<Vec<f64>>> {
        let tensor = self.tensor(kind);
        (0..tensor.replicates)
            .map(|b| {
                (0..tensor.periods)
                    .map(|t| (0..tensor.grid).map(|k| tensor.get(b, t, k) / self.root_n[t]).collect())
                    .collect()
            })
            .collect()
    }
}

/// Resamples every cell with replacement, refits, and records gaps against the point estimate.
///
/// Replicate `b` draws from a ChaCha8 stream `b` keyed by the configured seed, so
/// results do not depend on thread count or scheduling.
pub fn bootstrap_gaps(panel: &MicroPanel, config: &DiscoConfig, point: &DiscoResult) -> Result<BootstrapDraws> {
    let prepared = Prepared::new(panel, config)?;
    let boots = config.inference.boots;
    if boots < 1 {
        return Err(DiscoError::InvalidConfig("boots must be at least 1".into()));
    }
    let replicates: Vec<Option<Vec<PeriodPaths>>> = (0..boots)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let table = prepared.table.resample(&mut rng);
            fit(&table, &prepared.layout, config, &prepared.grids).ok().map(|f| f.paths)
        })
        .collect();
    let dropped = replicates.iter().filter(|r| r.is_none()).count();
    if dropped * 20 > boots {
        return Err(DiscoError::TooManyDroppedReplicates {
            dropped,
            requested: boots,
        });
    }
    let kept: Vec<Vec<PeriodPaths>> = replicates.into_iter().flatten().collect();
    let periods = point.periods.len();
    let g = point.q_grid.len();
    let root_n: Vec<f64> = point.target_counts.iter().map(|&n| (n as f64).sqrt()).collect();
    let mut draws = BootstrapDraws {
        requested: boots,
        dropped,
        periods: point.periods.clone(),
        quantile: GapTensor::zeros(AggKind::Quantile, kept.len(), periods, g),
        cdf: GapTensor::zeros(AggKind::Cdf, kept.len(), periods, g),
        quantile_diff: GapTensor::zeros(AggKind::QuantileDiff, kept.len(), periods, g),
        cdf_diff: GapTensor::zeros(AggKind::CdfDiff, kept.len(), periods, g),
        root_n,
    };
    for (b, paths) in kept.iter().enumerate() {
        for (t, path) in paths.iter().enumerate() {
            let scale = draws.root_n[t];
            for k in 0..g {
                let q_diff = path.quantile_t[k] - path.quantile_synth[k];
                let c_diff = path.cdf_t[k] - path.cdf_synth[k];
                draws.quantile.row_mut(b, t)[k] = scale * (path.quantile_synth[k] - point.quantile_synth[t][k]);
                draws.cdf.row_mut(b, t)[k] = scale * (path.cdf_synth[k] - point.cdf_synth[t][k]);
                draws.quantile_diff.row_mut(b, t)[k] = scale * (q_diff - point.quantile_diff[t][k]);
                draws.cdf_diff.row_mut(b, t)[k] = scale * (c_diff - point.cdf_diff[t][k]);
            }
        }
    }
    Ok(draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Pointwise,
    Uniform,
}

/// Bands around one representation, one column per period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bands {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub band_kind: BandKind,
}

fn sorted(mut values: Vec<f64>) -> SortedSample {
    values.sort_by(f64::total_cmp);
    SortedSample::from_sorted_unchecked(values)
}

fn standard_deviation(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Percentile bands `estimate + [q_lo, q_hi]` of the draws at each grid point;
/// with `uniform`, widened to the sup-t band `estimate +- s* se` per period.
///
/// `draws` are in effect units, indexed `[replicate][period][grid point]`. The uniform
/// band is the union of the sup-t and pointwise bands so that it always contains the latter.
/// With a single replicate there is no spread to studentize by and the pointwise band is returned.
pub fn confidence_bands(estimate: &[Vec<f64>], draws: &[Vec<Vec<f64>>], cl: f64, uniform: bool) -> Result<Bands> {
    if !(cl > 0.0 && cl < 1.0) {
        return Err(DiscoError::InvalidConfig(format!("confidence level must lie in (0, 1), got {cl}")));
    }
    if draws.is_empty() {
        return Err(DiscoError::InvalidConfig("no bootstrap replicates".into()));
    }
    if draws.iter().any(|d| d.len() != estimate.len() || d.iter().zip(estimate).any(|(a, b)| a.len() != b.len())) {
        return Err(DiscoError::DimensionMismatch("bootstrap draws do not match the estimate".into()));
    }
    let (p_lo, p_hi) = ((1.0 - cl) / 2.0, (1.0 + cl) / 2.0);
    let mut lower = estimate.to_vec();
    let mut upper = estimate.to_vec();
    let mut se = estimate.iter().map(|col| vec![0.0; col.len()]).collect::<Vec<_>>();
    for (t, col) in estimate.iter().enumerate() {
        for k in 0..col.len() {
            let at: Vec<f64> = draws.iter().map(|d| d[t][k]).collect();
            se[t][k] = standard_deviation(&at);
            let s = sorted(at);
            lower[t][k] = col[k] + s.quantile(p_lo);
            upper[t][k] = col[k] + s.quantile(p_hi);
        }
    }
    let band_kind = if uniform && draws.len() >= 2 {
        for (t, col) in estimate.iter().enumerate() {
            let sups: Vec<f64> = draws
                .iter()
                .map(|d| {
                    d[t].iter()
                        .zip(&se[t])
                        .map(|(gap, s)| gap.abs() / s.max(SE_FLOOR))
                        .fold(0.0, f64::max)
                })
                .collect();
            let critical = sorted(sups).quantile(cl);
            for k in 0..col.len() {
                let half = critical * se[t][k].max(SE_FLOOR);
                lower[t][k] = lower[t][k].min(col[k] - half);
                upper[t][k] = upper[t][k].max(col[k] + half);
            }
        }
        BandKind::Uniform
    } else {
        BandKind::Pointwise
    };
    Ok(Bands {
        lower,
        upper,
        se,
        band_kind,
    })
}

/// Bands for one representation together with the draws they came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapBands {
    pub kind: AggKind,
    pub cl: f64,
    pub bands: Bands,
    pub draws: BootstrapDraws,
}

impl BootstrapBands {
    pub fn new(point: &DiscoResult, draws: BootstrapDraws, kind: AggKind, cl: f64, uniform: bool) -> Result<Self> {
        let bands = confidence_bands(point.values(kind), &draws.unscaled(kind), cl, uniform)?;
        Ok(Self { kind, cl, bands, draws })
    }
}
