//! Dense tableau primal simplex with Bland's rule, plus the L1 simplex-fit LP.

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) enum LpFailure {
    Unbounded,
    IterationLimit { x: Vec<f64> },
}

/// Equality-form tableau `A x = b, x >= 0` kept in canonical form for `basis`.
struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let p = self.at(row, col);
        for c in 0..cols {
            self.a[row * cols + c] /= p;
        }
        self.b[row] /= p;
        self.a[row * cols + col] = 1.0;
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..cols {
                self.a[r * cols + c] -= factor * self.a[row * cols + c];
            }
            self.a[r * cols + col] = 0.0;
            self.b[r] -= factor * self.b[row];
            if self.b[r] < 0.0 && self.b[r] > -1e-13 {
                self.b[r] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb == 0.0 {
                continue;
            }
            for (c, dc) in d.iter_mut().enumerate() {
                *dc -= cb * self.at(r, c);
            }
        }
        d
    }

    fn solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for (r, &bv) in self.basis.iter().enumerate() {
            x[bv] = self.b[r].max(0.0);
        }
        x
    }

    /// Minimizes `cost' x` moving only through columns with `allowed[c]`.
    /// Returns the final reduced costs.
    fn minimize(&mut self, cost: &[f64], allowed: &[bool], max_iterations: usize) -> Result<Vec<f64>, LpFailure> {
        loop {
            let d = self.reduced_costs(cost);
            let entering = (0..self.cols).find(|&c| allowed[c] && d[c] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(d);
            };
            self.iterations += 1;
            if self.iterations > max_iterations {
                return Err(LpFailure::IterationLimit { x: self.solution() });
            }
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let arc = self.at(r, col);
                if arc > PIVOT_TOL {
                    let ratio = self.b[r].max(0.0) / arc;
                    let better = match best {
                        None => true,
                        Some((br, _, bvar)) => {
                            ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[r] < bvar)
                        }
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let Some((_, row, _)) = best else {
                return Err(LpFailure::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

/// Minimizes `sum_g |sum_j lambda_j columns[j][g] - target[g]|` over the unit simplex.
///
/// Variables are `lambda` (J), then `u` (G) and `v` (G) with
/// `sum_j lambda_j c_jg - u_g + v_g = t_g` and `sum_j lambda_j = 1`. Among
/// optimal solutions the lexicographically smallest `lambda` is returned:
/// after the L1 stage each `lambda_j` in turn is minimized over the optimal face.
pub(crate) fn l1_simplex_fit(columns: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>, LpFailure> {
    let n_weights = columns.len();
    let n_rows = target.len();
    let cols = n_weights + 2 * n_rows;
    let rows = n_rows + 1;
    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows];
    let mut basis = vec![0; rows];

    // Canonical form around lambda = e_1: lambda_1 is basic in the sum row and
    // has been eliminated from the residual rows.
    for g in 0..n_rows {
        let base = columns[0][g];
        let rhs = target[g] - base;
        let sign = if rhs >= 0.0 { 1.0 } else { -1.0 };
        let row = &mut a[g * cols..(g + 1) * cols];
        for j in 1..n_weights {
            row[j] = sign * (columns[j][g] - base);
        }
        row[n_weights + g] = -sign;
        row[n_weights + n_rows + g] = sign;
        b[g] = sign * rhs;
        basis[g] = if sign > 0.0 { n_weights + n_rows + g } else { n_weights + g };
    }
    let sum_row = &mut a[n_rows * cols..];
    sum_row[..n_weights].iter_mut().for_each(|v| *v = 1.0);
    b[n_rows] = 1.0;
    basis[n_rows] = 0;

    let mut tableau = Tableau {
        rows,
        cols,
        a,
        b,
        basis,
        iterations: 0,
    };
    let max_iterations = 50 * (rows + cols) * (n_weights + 1);

    let mut cost = vec![0.0; cols];
    cost[n_weights..].iter_mut().for_each(|c| *c = 1.0);
    let mut allowed = vec![true; cols];
    let d = tableau.minimize(&cost, &allowed, max_iterations)?;
    freeze_positive(&tableau, &d, &mut allowed);

    for j in 0..n_weights {
        let mut cost = vec![0.0; cols];
        cost[j] = 1.0;
        let d = tableau.minimize(&cost, &allowed, max_iterations)?;
        freeze_positive(&tableau, &d, &mut allowed);
    }
    Ok(tableau.solution()[..n_weights].to_vec())
}

/// Nonbasic columns with positive reduced cost must stay at zero to remain optimal.
fn freeze_positive(tableau: &Tableau, reduced: &[f64], allowed: &mut [bool]) {
    let mut basic = vec![false; tableau.cols];
    for &bv in &tableau.basis {
        basic[bv] = true;
    }
    for c in 0..tableau.cols {
        if !basic[c] && reduced[c] > COST_TOL {
            allowed[c] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_between_two_columns() {
        let w = l1_simplex_fit(&[vec![0.2, 1.0], vec![0.8, 1.0]], &[0.5, 1.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn degenerate_optimum_is_lexicographically_smallest() {
        // Identical columns: every split is optimal; the smallest lambda_1 is 0.
        let w = l1_simplex_fit(&[vec![0.3, 0.7], vec![0.3, 0.7], vec![0.9, 1.0]], &[0.3, 0.7]).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn single_column() {
        let w = l1_simplex_fit(&[vec![0.1, 0.4, 1.0]], &[0.9, 0.9, 0.9]).unwrap();
        assert_eq!(w, vec![1.0]);
    }
}
