//! Weight solvers for the three fitting problems:
//!
//! * [`solve_simplex_ls`]: mean squared residual over the unit simplex (dual active-set QP),
//! * [`solve_affine_ls`]: the same objective with only `sum(lambda) = 1` (bordered KKT system),
//! * [`solve_simplex_l1`]: scaled L1 residual over the unit simplex (linear program).
//!
//! None of them knows anything about distributions; the caller supplies a
//! design matrix by columns (one per control) and a target vector.

mod dual_active_set;
mod simplex_lp;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{DiscoError, Result};

/// Relative ridge added to the Gram diagonal so collinear designs stay positive definite.
const GRAM_JITTER: f64 = 1e-12;
const CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LsProblem {
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
    simplex: bool,
    cell_width: f64,
}

impl LsProblem {
    /// `columns[j]` holds control `j` evaluated at every grid row.
    pub fn new(columns: Vec<Vec<f64>>, target: Vec<f64>, simplex: bool) -> Result<Self> {
        if columns.is_empty() {
            return Err(DiscoError::DimensionMismatch("need at least one control column".into()));
        }
        if target.is_empty() {
            return Err(DiscoError::DimensionMismatch("empty target".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != target.len() {
                return Err(DiscoError::DimensionMismatch(format!(
                    "column {j} has {} rows, target has {}",
                    col.len(),
                    target.len()
                )));
            }
        }
        if columns.iter().flatten().chain(&target).any(|v| !v.is_finite()) {
            return Err(DiscoError::DimensionMismatch("non-finite entry in problem data".into()));
        }
        Ok(Self {
            columns,
            target,
            simplex,
            cell_width: 1.0,
        })
    }

    /// Builds the problem from design rows (grid points) instead of columns.
    pub fn from_rows(rows: &[Vec<f64>], target: Vec<f64>, simplex: bool) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(DiscoError::DimensionMismatch("ragged design rows".into()));
        }
        let columns = (0..n_cols).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(columns, target, simplex)
    }

    /// Width of a support-grid cell; scales the L1 objective into an integral.
    pub fn with_cell_width(mut self, cell_width: f64) -> Self {
        self.cell_width = cell_width;
        self
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn simplex(&self) -> bool {
        self.simplex
    }

    pub fn n_controls(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    fn residuals(&self, weights: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.target.iter().map(|t| -t).collect();
        for (col, &w) in self.columns.iter().zip(weights) {
            if w != 0.0 {
                for (ri, ci) in r.iter_mut().zip(col) {
                    *ri += w * ci;
                }
            }
        }
        r
    }

    /// `(1/G) |D w - t|^2`
    pub fn mean_squared_residual(&self, weights: &[f64]) -> f64 {
        let r = self.residuals(weights);
        r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
    }

    /// `cell_width * sum_g |D w - t|_g`
    pub fn l1_residual(&self, weights: &[f64]) -> f64 {
        self.cell_width * self.residuals(weights).iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Gradient of the mean squared residual.
    pub fn ls_gradient(&self, weights: &[f64]) -> Vec<f64> {
        let r = self.residuals(weights);
        let scale = 2.0 / r.len() as f64;
        self.columns.iter().map(|c| scale * c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    /// `(2/G) D'D` (row-major) with the relative ridge applied, and `-(2/G) D't`.
    fn quadratic_form(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.columns.len();
        let scale = 2.0 / self.target.len() as f64;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = scale * self.columns[i].iter().zip(&self.columns[j]).map(|(a, b)| a * b).sum::<f64>();
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        }
        let trace: f64 = (0..n).map(|i| h[i * n + i]).sum();
        let jitter = if trace > 0.0 { GRAM_JITTER * trace / n as f64 } else { GRAM_JITTER };
        for i in 0..n {
            h[i * n + i] += jitter;
        }
        let c = self
            .columns
            .iter()
            .map(|col| -scale * col.iter().zip(&self.target).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        (h, c)
    }
}

/// Solver output: weights summing to one and the attained objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Controls whose nonnegativity constraint binds (always empty without the simplex).
    pub active_set: Vec<usize>,
}

/// Projected-gradient KKT residual of a simplex least-squares solution.
pub fn simplex_kkt_residual(problem: &LsProblem, weights: &[f64]) -> f64 {
    let grad = problem.ls_gradient(weights);
    let support: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] > 1e-9).collect();
    let mu = if support.is_empty() {
        grad.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        support.iter().map(|&j| grad[j]).sum::<f64>() / support.len() as f64
    };
    grad.iter()
        .enumerate()
        .map(|(j, &gj)| {
            if weights[j] > 1e-9 {
                (gj - mu).abs()
            } else {
                (mu - gj).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Zeroes negatives and rescales to sum one.
fn clamp_to_simplex(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
}

fn binding(weights: &[f64]) -> Vec<usize> {
    (0..weights.len()).filter(|&j| weights[j] == 0.0).collect()
}

pub fn solve_simplex_ls(problem: &LsProblem) -> Result<WeightVector> {
    let n = problem.n_controls();
    if n == 1 {
        return Ok(WeightVector {
            weights: vec![1.0],
            objective: problem.mean_squared_residual(&[1.0]),
            active_set: vec![],
        });
    }
    let (h, c) = problem.quadratic_form();
    let equalities = vec![(vec![1.0; n], 1.0)];
    let inequalities: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            (e, 0.0)
        })
        .collect();
    let max_iterations = 50 * (n + 1) + 100;
    let solution = dual_active_set::solve(&h, &c, &equalities, &inequalities, max_iterations).map_err(
        |failure| match failure {
            dual_active_set::QpFailure::IterationLimit { x } => DiscoError::NoConvergence {
                iterations: max_iterations,
                kkt_residual: simplex_kkt_residual(problem, &x),
                last_iterate: x,
            },
            dual_active_set::QpFailure::Infeasible => DiscoError::Infeasible("simplex QP".into()),
            other => DiscoError::Singular(format!("simplex QP: {other:?}")),
        },
    )?;
    let mut weights = solution.x;
    debug_assert!(weights.iter().all(|&w| w >= -1e-8), "{weights:?}");
    for w in weights.iter_mut() {
        if w.abs() <= CLAMP_TOL {
            *w = 0.0;
        }
    }
    for &k in &solution.active_inequalities {
        weights[k] = 0.0;
    }
    clamp_to_simplex(&mut weights);
    Ok(WeightVector {
        objective: problem.mean_squared_residual(&weights),
        active_set: binding(&weights),
        weights,
    })
}

pub fn solve_affine_ls(problem: &LsProblem) -> Result<WeightVector> {
    let n = problem.n_controls();
    if n == 1 {
        return Ok(WeightVector {
            weights: vec![1.0],
            objective: problem.mean_squared_residual(&[1.0]),
            active_set: vec![],
        });
    }
    let (h, c) = problem.quadratic_form();
    // [H 1; 1' 0] [w; mu] = [-c; 1]
    let mut kkt = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = h[i * n + j];
        }
        kkt[(i, n)] = 1.0;
        kkt[(n, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        rhs[i] = -c[i];
    }
    rhs[n] = 1.0;
    let scale = h.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let solution = kkt
        .svd(true, true)
        .solve(&rhs, 1e-13 * scale)
        .map_err(|e| DiscoError::Singular(e.to_string()))?;
    let weights: Vec<f64> = solution.iter().take(n).copied().collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || (total - 1.0).abs() > 1e-8 {
        return Err(DiscoError::Singular(format!(
            "bordered system has no sum-to-one solution (sum {total})"
        )));
    }
    Ok(WeightVector {
        objective: problem.mean_squared_residual(&weights),
        active_set: vec![],
        weights,
    })
}

pub fn solve_simplex_l1(problem: &LsProblem) -> Result<WeightVector> {
    let n = problem.n_controls();
    let mut weights = if n == 1 {
        vec![1.0]
    } else {
        simplex_lp::l1_simplex_fit(&problem.columns, &problem.target).map_err(|failure| match failure {
            simplex_lp::LpFailure::IterationLimit { x } => DiscoError::NoConvergence {
                iterations: 0,
                kkt_residual: f64::NAN,
                last_iterate: x,
            },
            simplex_lp::LpFailure::Unbounded => DiscoError::Infeasible("L1 linear program unbounded".into()),
        })?
    };
    clamp_to_simplex(&mut weights);
    Ok(WeightVector {
        objective: problem.l1_residual(&weights),
        active_set: binding(&weights),
        weights,
    })
}

/// Least-squares fit with or without the nonnegativity constraints, per the problem's flag.
pub fn solve_ls(problem: &LsProblem) -> Result<WeightVector> {
    if problem.simplex {
        solve_simplex_ls(problem)
    } else {
        solve_affine_ls(problem)
    }
}
