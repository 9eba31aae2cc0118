//! Distributional synthetic controls.
//!
//! Given micro-level outcomes for one treated unit and a pool of controls,
//! the estimator finds simplex weights that make a weighted barycenter of the
//! controls' distributions (quantile functions, or CDFs in mixture mode) track
//! the treated unit before treatment, and reads distributional effects off the
//! gap afterwards. Inference comes from placebo permutations and a
//! cell-resampling bootstrap.

pub mod aggregation;
pub mod disco;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod io;
pub mod solvers;

pub use distributions::{
    build_panel, dist_grid, empirical_cdf, empirical_quantile, quantile_from_cdf, DistGrid,
    GridQuantile, MicroPanel, Period, SortedSample, Support, UnitId,
};
pub use error::{DiscoError, Result};
pub use solvers::{solve_affine_ls, solve_simplex_l1, solve_simplex_ls, LsProblem, WeightVector};
pub use disco::{
    average_weights, period_weights, run_disco, synthetic_paths, wasserstein2_sq, AggKind, DiscoConfig,
    DiscoResult, InferenceConfig, SyntheticPaths,
};
pub use aggregation::{aggregate, SummaryRow, SummaryTable};
pub use inference::{
    bootstrap_gaps, confidence_bands, permutation_test, BandKind, Bands, BootstrapBands, BootstrapDraws, GapTensor,
    PermutationResult,
};
