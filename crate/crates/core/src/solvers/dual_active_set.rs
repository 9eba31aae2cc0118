//! Goldfarb–Idnani dual active-set method for strictly convex dense QPs.
//!
//! ```text
//!     minimize    1/2 x' H x + c' x
//!     subject to  a_i' x  = b_i   (equality rows)
//!                 a_k' x >= b_k   (inequality rows)
//! ```
//!
//! The solver starts from the unconstrained minimizer and adds violated
//! constraints one at a time, keeping the dual iterate feasible. `J = L^{-T}`
//! (with `H = L L'`) is updated by Givens rotations as constraints enter and
//! leave, and `R` holds the upper-triangular factor of the active normals in
//! that basis.

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: Vec<f64>,
    /// `1/2 x'Hx + c'x` at `x`; callers recompute their own objective.
    #[allow(dead_code)]
    pub objective: f64,
    /// Indices (into the inequality list) of constraints active at the solution.
    pub active_inequalities: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) enum QpFailure {
    NotPositiveDefinite,
    DependentEqualities,
    Infeasible,
    IterationLimit { x: Vec<f64> },
}

/// Dense square matrix, row-major.
#[derive(Clone)]
struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of `h`.
fn cholesky(h: &Square) -> Option<Square> {
    let n = h.n;
    let mut l = Square::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = h.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.at(j, j));
            }
        }
    }
    Some(l)
}

/// `J = L^{-T}`, upper triangular.
fn inverse_transpose(l: &Square) -> Square {
    let n = l.n;
    let mut j = Square::zeros(n);
    // Column c of L^{-1} solves L y = e_c; it becomes row c of J.
    for c in 0..n {
        let mut y = vec![0.0; n];
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for (k, yk) in y.iter().enumerate().take(i).skip(c) {
                s -= l.at(i, k) * yk;
            }
            y[i] = s / l.at(i, i);
        }
        for (i, &v) in y.iter().enumerate() {
            j.set(c, i, v);
        }
    }
    j
}

struct Workspace {
    n: usize,
    j: Square,
    r: Square,
    /// Number of active constraints.
    iq: usize,
    r_norm: f64,
    d: Vec<f64>,
    z: Vec<f64>,
    rv: Vec<f64>,
    /// Active constraint ids (combined numbering: equalities first) and their multipliers.
    active: Vec<usize>,
    u: Vec<f64>,
}

impl Workspace {
    /// d = J' np
    fn compute_d(&mut self, np: &[f64]) {
        let n = self.n;
        for i in 0..n {
            self.d[i] = (0..n).map(|k| self.j.at(k, i) * np[k]).sum();
        }
    }

    /// z = J2 d2, the primal step direction in the null space of the active set.
    fn update_z(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.z[i] = (self.iq..n).map(|k| self.j.at(i, k) * self.d[k]).sum();
        }
    }

    /// rv = R^{-1} d1, the change in the active multipliers.
    fn update_r(&mut self) {
        for i in (0..self.iq).rev() {
            let mut s = self.d[i];
            for k in i + 1..self.iq {
                s -= self.r.at(i, k) * self.rv[k];
            }
            self.rv[i] = s / self.r.at(i, i);
        }
    }

    fn add_constraint(&mut self) -> bool {
        let n = self.n;
        for jj in (self.iq + 1..n).rev() {
            let mut cc = self.d[jj - 1];
            let mut ss = self.d[jj];
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            self.d[jj] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                self.d[jj - 1] = -h;
            } else {
                self.d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j.at(k, jj - 1);
                let t2 = self.j.at(k, jj);
                let new1 = t1 * cc + t2 * ss;
                self.j.set(k, jj - 1, new1);
                self.j.set(k, jj, xny * (t1 + new1) - t2);
            }
        }
        self.iq += 1;
        for i in 0..self.iq {
            self.r.set(i, self.iq - 1, self.d[i]);
        }
        let diag = self.d[self.iq - 1].abs();
        if diag <= EPS * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(diag);
        true
    }

    fn delete_constraint(&mut self, first_inequality: usize, constraint: usize) {
        let n = self.n;
        let Some(qq) = (first_inequality..self.iq).find(|&i| self.active[i] == constraint) else {
            return;
        };
        for i in qq..self.iq - 1 {
            self.active[i] = self.active[i + 1];
            self.u[i] = self.u[i + 1];
            for k in 0..n {
                let v = self.r.at(k, i + 1);
                self.r.set(k, i, v);
            }
        }
        self.active[self.iq - 1] = self.active[self.iq];
        self.u[self.iq - 1] = self.u[self.iq];
        self.active[self.iq] = 0;
        self.u[self.iq] = 0.0;
        for k in 0..self.iq {
            self.r.set(k, self.iq - 1, 0.0);
        }
        self.iq -= 1;
        if self.iq == 0 {
            return;
        }
        for jj in qq..self.iq {
            let mut cc = self.r.at(jj, jj);
            let mut ss = self.r.at(jj + 1, jj);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r.set(jj + 1, jj, 0.0);
            if cc < 0.0 {
                self.r.set(jj, jj, -h);
                cc = -cc;
                ss = -ss;
            } else {
                self.r.set(jj, jj, h);
            }
            let xny = ss / (1.0 + cc);
            for k in jj + 1..self.iq {
                let t1 = self.r.at(jj, k);
                let t2 = self.r.at(jj + 1, k);
                let new1 = t1 * cc + t2 * ss;
                self.r.set(jj, k, new1);
                self.r.set(jj + 1, k, xny * (t1 + new1) - t2);
            }
            for k in 0..n {
                let t1 = self.j.at(k, jj);
                let t2 = self.j.at(k, jj + 1);
                let new1 = t1 * cc + t2 * ss;
                self.j.set(k, jj, new1);
                self.j.set(k, jj + 1, xny * (new1 + t1) - t2);
            }
        }
    }
}

/// `hessian` is row-major `n x n`; each constraint row has length `n`.
pub(crate) fn solve(
    hessian: &[f64],
    linear: &[f64],
    equalities: &[(Vec<f64>, f64)],
    inequalities: &[(Vec<f64>, f64)],
    max_iterations: usize,
) -> Result<QpSolution, QpFailure> {
    let n = linear.len();
    debug_assert_eq!(hessian.len(), n * n);
    let p = equalities.len();
    let m = inequalities.len();
    let h = Square {
        n,
        data: hessian.to_vec(),
    };
    let l = cholesky(&h).ok_or(QpFailure::NotPositiveDefinite)?;
    let j = inverse_transpose(&l);

    // Unconstrained minimizer x = -H^{-1} c = -J J' c.
    let jtc: Vec<f64> = (0..n).map(|i| (0..n).map(|k| j.at(k, i) * linear[k]).sum()).collect();
    let mut x: Vec<f64> = (0..n)
        .map(|i| -(0..n).map(|k| j.at(i, k) * jtc[k]).sum::<f64>())
        .collect();
    let mut f = 0.5 * dot(linear, &x);

    let mut ws = Workspace {
        n,
        j,
        r: Square::zeros(n),
        iq: 0,
        r_norm: 1.0,
        d: vec![0.0; n],
        z: vec![0.0; n],
        rv: vec![0.0; n + 1],
        active: vec![0; n + p + m + 1],
        u: vec![0.0; n + p + m + 1],
    };

    for (i, (np, rhs)) in equalities.iter().enumerate() {
        ws.compute_d(np);
        ws.update_z();
        ws.update_r();
        let zn = dot(&ws.z, np);
        let t2 = if dot(&ws.z, &ws.z).abs() > EPS {
            (rhs - dot(np, &x)) / zn
        } else {
            0.0
        };
        for (xi, zi) in x.iter_mut().zip(&ws.z) {
            *xi += t2 * zi;
        }
        ws.u[ws.iq] = t2;
        for k in 0..ws.iq {
            ws.u[k] -= t2 * ws.rv[k];
        }
        f += 0.5 * t2 * t2 * zn;
        ws.active[ws.iq] = i;
        if !ws.add_constraint() {
            return Err(QpFailure::DependentEqualities);
        }
    }

    // Inequalities excluded after a failed (linearly dependent) addition.
    let mut excluded = vec![false; m];
    let mut is_active = vec![false; m];
    let mut slack = vec![0.0; m];
    let mut iterations = 0usize;

    'outer: loop {
        iterations += 1;
        if iterations > max_iterations {
            return Err(QpFailure::IterationLimit { x });
        }
        for (k, (a, b)) in inequalities.iter().enumerate() {
            slack[k] = dot(a, &x) - b;
        }
        let x_old = x.clone();
        let u_old: Vec<f64> = ws.u[..ws.iq].to_vec();
        let active_old: Vec<usize> = ws.active[..ws.iq].to_vec();

        // Most violated inactive constraint.
        let mut ip = None;
        let mut worst = 0.0;
        for k in 0..m {
            if !is_active[k] && !excluded[k] && slack[k] < worst {
                worst = slack[k];
                ip = Some(k);
            }
        }
        let Some(ip) = ip else {
            break;
        };
        let scale = 1.0 + dot(&inequalities[ip].0, &inequalities[ip].0).sqrt() * x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if worst >= -1e-14 * scale {
            break;
        }
        let np = &inequalities[ip].0;
        ws.u[ws.iq] = 0.0;
        ws.active[ws.iq] = p + ip;
        let mut s_ip = slack[ip];

        loop {
            ws.compute_d(np);
            ws.update_z();
            ws.update_r();

            // Partial step length: largest dual step keeping active multipliers >= 0.
            let mut t1 = f64::INFINITY;
            let mut blocking = None;
            for k in p..ws.iq {
                if ws.rv[k] > 0.0 {
                    let ratio = ws.u[k] / ws.rv[k];
                    if ratio < t1 {
                        t1 = ratio;
                        blocking = Some(ws.active[k]);
                    }
                }
            }
            // Full step length: primal step that makes constraint ip tight.
            let zn = dot(&ws.z, np);
            let t2 = if dot(&ws.z, &ws.z).abs() > EPS {
                -s_ip / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpFailure::Infeasible);
            }
            if !t2.is_finite() {
                // Dual-only step, then drop the blocking constraint.
                for k in 0..ws.iq {
                    ws.u[k] -= t * ws.rv[k];
                }
                ws.u[ws.iq] += t;
                let l = blocking.expect("finite t1 has a blocking constraint");
                is_active[l - p] = false;
                ws.delete_constraint(p, l);
                continue;
            }

            for (xi, zi) in x.iter_mut().zip(&ws.z) {
                *xi += t * zi;
            }
            f += t * zn * (0.5 * t + ws.u[ws.iq]);
            for k in 0..ws.iq {
                ws.u[k] -= t * ws.rv[k];
            }
            ws.u[ws.iq] += t;

            if t == t2 {
                if !ws.add_constraint() {
                    // Numerically dependent: restore the previous iterate and skip ip.
                    excluded[ip] = true;
                    ws.delete_constraint(p, p + ip);
                    is_active.iter_mut().for_each(|a| *a = false);
                    for k in p..ws.iq.min(active_old.len()) {
                        ws.active[k] = active_old[k];
                        ws.u[k] = u_old[k];
                        is_active[active_old[k] - p] = true;
                    }
                    x = x_old;
                    continue 'outer;
                }
                is_active[ip] = true;
                continue 'outer;
            }

            // Partial step: drop the blocking constraint and retry ip.
            let l = blocking.expect("partial step has a blocking constraint");
            is_active[l - p] = false;
            ws.delete_constraint(p, l);
            s_ip = dot(np, &x) - inequalities[ip].1;
        }
    }

    let active_inequalities = ws.active[p..ws.iq].iter().map(|&a| a - p).collect();
    Ok(QpSolution {
        x,
        objective: f,
        active_inequalities,
    })
}
