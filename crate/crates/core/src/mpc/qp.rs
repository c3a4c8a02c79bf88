//! Convex QP with box rows by operator splitting (ADMM), Ruiz scaling and an
//! active-set polish.
//!
//! ```text
//! minimize   ½ xᵀPx + qᵀx + Σ_i w_i · dist(a_iᵀx, [l_i, u_i])
//! ```
//!
//! A row with `w_i = ∞` is a hard constraint `l_i ≤ a_iᵀx ≤ u_i`; a finite
//! `w_i` is an exact L1 penalty on leaving the box.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Iterations between residual checks, polish attempts and `ρ` updates.
    pub check_every: usize,
    pub polish: bool,
    pub scaling_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 10,
            polish: true,
            scaling_iters: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Row multipliers; positive at an upper bound, negative at a lower one.
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const POLISH_DELTA: f64 = 1e-9;

/// Solver for a fixed `(P, A, w)`; `q`, `l`, `u` may change between solves.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: QpSettings,
    // original data
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    w: DVector<f64>,
    // scaled data: P̃ = c D P D, Ã = E A D, w̃ = c w / E
    ps: DMatrix<f64>,
    as_: DMatrix<f64>,
    ws: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
    rho: f64,
    rho_vec: DVector<f64>,
    kkt: Option<Cholesky<f64, Dyn>>,
    // scaled iterate
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

impl QpSolver {
    pub fn new(p: DMatrix<f64>, a: DMatrix<f64>, w: DVector<f64>, settings: QpSettings) -> Result<Self> {
        let n = p.nrows();
        let m = a.nrows();
        if p.ncols() != n || a.ncols() != n || w.len() != m {
            return Err(Error::Dimension(format!(
                "QP data: P {}x{}, A {}x{}, {} row weights",
                p.nrows(),
                p.ncols(),
                a.nrows(),
                a.ncols(),
                w.len()
            )));
        }
        if w.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("QP row weights must be positive (infinite for hard rows)".into()));
        }
        if !(settings.alpha > 0.0 && settings.alpha < 2.0) || !(settings.rho > 0.0) || !(settings.sigma > 0.0) {
            return Err(Error::Config("QP settings need rho > 0, sigma > 0 and alpha in (0, 2)".into()));
        }
        let (ps, as_, d, e, c) = ruiz(&p, &a, settings.scaling_iters);
        let ws = DVector::from_fn(m, |i, _| c * w[i] / e[i]);
        let mut s = QpSolver {
            settings,
            p,
            a,
            w,
            ps,
            as_,
            ws,
            d,
            e,
            c,
            rho: settings.rho,
            rho_vec: DVector::from_element(m, settings.rho),
            kkt: None,
            x: DVector::zeros(n),
            z: DVector::zeros(m),
            y: DVector::zeros(m),
        };
        s.factor()?;
        Ok(s)
    }

    pub fn n_variables(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.ps.nrows();
        let mut k = self.ps.clone();
        for i in 0..n {
            k[(i, i)] += self.settings.sigma;
        }
        let mut ra = self.as_.clone();
        for (i, mut row) in ra.row_iter_mut().enumerate() {
            row *= self.rho_vec[i];
        }
        k += self.as_.transpose() * ra;
        self.kkt = Some(
            Cholesky::new(k).ok_or_else(|| Error::Numerical("QP system matrix is not positive definite".into()))?,
        );
        Ok(())
    }

    fn set_rho_vec(&mut self, l: &DVector<f64>, u: &DVector<f64>) {
        for i in 0..l.len() {
            self.rho_vec[i] = if l[i] == f64::NEG_INFINITY && u[i] == f64::INFINITY {
                RHO_MIN
            } else if l[i] == u[i] && self.ws[i].is_infinite() {
                RHO_EQ_FACTOR * self.rho
            } else {
                self.rho
            };
        }
    }

    /// Sets the starting iterate from an unscaled primal-dual guess.
    pub fn warm_start(&mut self, x: &DVector<f64>, y: &DVector<f64>) {
        self.x = x.component_div(&self.d);
        self.z = &self.as_ * &self.x;
        self.y = DVector::from_fn(y.len(), |i, _| self.c * y[i] / self.e[i]);
    }

    pub fn solve(&mut self, q: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> Result<QpSolution> {
        let (n, m) = (self.ps.nrows(), self.as_.nrows());
        if q.len() != n || l.len() != m || u.len() != m {
            return Err(Error::Dimension("QP vectors do not match the problem size".into()));
        }
        if let Some(i) = (0..m).find(|&i| !(l[i] <= u[i]) || l[i] == f64::INFINITY || u[i] == f64::NEG_INFINITY) {
            return Err(Error::Infeasible(format!("QP row {i} has contradictory bounds [{}, {}]", l[i], u[i])));
        }
        let qs = DVector::from_fn(n, |i, _| self.c * self.d[i] * q[i]);
        let ls = DVector::from_fn(m, |i, _| self.e[i] * l[i]);
        let us = DVector::from_fn(m, |i, _| self.e[i] * u[i]);
        let old = self.rho_vec.clone();
        self.set_rho_vec(l, u);
        if old != self.rho_vec || self.kkt.is_none() {
            self.factor()?;
        }
        // start z inside the prox image
        self.z = self.prox(&self.z.clone(), &ls, &us);

        let alpha = self.settings.alpha;
        let sigma = self.settings.sigma;
        let mut iter = 0;
        let mut last = (f64::INFINITY, f64::INFINITY);
        while iter < self.settings.max_iter {
            iter += 1;
            let mut rhs = &self.x * sigma - &qs;
            let t = self.rho_vec.component_mul(&self.z) - &self.y;
            rhs += self.as_.tr_mul(&t);
            let xt = self.kkt.as_ref().expect("factored").solve(&rhs);
            let zt = &self.as_ * &xt;
            self.x = &xt * alpha + &self.x * (1.0 - alpha);
            let zh = &zt * alpha + &self.z * (1.0 - alpha);
            let v = &zh + self.y.component_div(&self.rho_vec);
            let z_new = self.prox(&v, &ls, &us);
            self.y += self.rho_vec.component_mul(&(&zh - &z_new));
            self.z = z_new;

            if iter % self.settings.check_every != 0 && iter != self.settings.max_iter {
                continue;
            }
            let (rp, rd, ep, ed) = self.residuals(&qs);
            last = (rp, rd);
            if rp <= ep && rd <= ed {
                let mut sol = self.unscaled(q, iter, rp, rd);
                if self.settings.polish {
                    if let Some(p) = self.polish(q, l, u, &qs, &ls, &us, iter) {
                        sol = p;
                    }
                }
                return Ok(sol);
            }
            // slow tails (ill-conditioned P) are cut short by polishing at
            // geometrically spaced iterations
            let periodic = iter >= 100 && (iter / self.settings.check_every).is_power_of_two();
            if self.settings.polish && (periodic || (rp <= 1e3 * ep && rd <= 1e3 * ed)) {
                if let Some(p) = self.polish(q, l, u, &qs, &ls, &us, iter) {
                    return Ok(p);
                }
            }
            self.adapt_rho(&qs, l, u)?;
        }
        if self.settings.polish {
            if let Some(p) = self.polish(q, l, u, &qs, &ls, &us, iter) {
                return Ok(p);
            }
        }
        Err(Error::Numerical(format!(
            "QP did not converge in {} iterations (primal residual {:.3e}, dual residual {:.3e})",
            iter, last.0, last.1
        )))
    }

    fn prox(&self, v: &DVector<f64>, ls: &DVector<f64>, us: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| {
            let t = self.ws[i] / self.rho_vec[i];
            let vi = v[i];
            if vi > us[i] {
                us[i].max(vi - t)
            } else if vi < ls[i] {
                ls[i].min(vi + t)
            } else {
                vi
            }
        })
    }

    /// Unscaled residuals and their tolerances.
    fn residuals(&self, qs: &DVector<f64>) -> (f64, f64, f64, f64) {
        let ax = &self.as_ * &self.x;
        let px = &self.ps * &self.x;
        let aty = self.as_.tr_mul(&self.y);
        let rp = inf_norm(&(&ax - &self.z).component_div(&self.e));
        let rd = inf_norm(&(&px + qs + &aty).component_div(&self.d)) / self.c;
        let ep = self.settings.eps_abs
            + self.settings.eps_rel * inf_norm(&ax.component_div(&self.e)).max(inf_norm(&self.z.component_div(&self.e)));
        let ed = self.settings.eps_abs
            + self.settings.eps_rel / self.c
                * inf_norm(&px.component_div(&self.d))
                    .max(inf_norm(&aty.component_div(&self.d)))
                    .max(inf_norm(&qs.component_div(&self.d)));
        (rp, rd, ep, ed)
    }

    fn adapt_rho(&mut self, qs: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        let ax = &self.as_ * &self.x;
        let px = &self.ps * &self.x;
        let aty = self.as_.tr_mul(&self.y);
        let rp = inf_norm(&(&ax - &self.z)) / inf_norm(&ax).max(inf_norm(&self.z)).max(1e-30);
        let rd = inf_norm(&(&px + qs + &aty)) / inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(qs)).max(1e-30);
        if rp == 0.0 || rd == 0.0 || !rp.is_finite() || !rd.is_finite() {
            return Ok(());
        }
        let new = (self.rho * (rp / rd).sqrt()).clamp(RHO_MIN, RHO_MAX);
        if new > 5.0 * self.rho || new < 0.2 * self.rho {
            self.rho = new;
            self.set_rho_vec(l, u);
            self.factor()?;
        }
        Ok(())
    }

    fn objective(&self, x: &DVector<f64>, q: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        let mut f = 0.5 * x.dot(&(&self.p * x)) + q.dot(x);
        for i in 0..ax.len() {
            if self.w[i].is_finite() {
                f += self.w[i] * (ax[i] - u[i]).max(l[i] - ax[i]).max(0.0);
            }
        }
        f
    }

    fn unscaled(&self, q: &DVector<f64>, iterations: usize, rp: f64, rd: f64) -> QpSolution {
        let x = self.x.component_mul(&self.d);
        let y = DVector::from_fn(self.y.len(), |i, _| self.e[i] * self.y[i] / self.c);
        // the hard rows are only met to tolerance by x; objective is informative
        let mut objective = 0.5 * x.dot(&(&self.p * &x)) + q.dot(&x);
        let ax = &self.a * &x;
        let zu = self.z.component_div(&self.e);
        for i in 0..ax.len() {
            if self.w[i].is_finite() {
                objective += self.w[i] * (ax[i] - zu[i]).abs();
            }
        }
        QpSolution {
            x,
            y,
            objective,
            iterations,
            polished: false,
            primal_residual: rp,
            dual_residual: rd,
        }
    }

    /// Solves the equality-constrained problem on the active set guessed from
    /// the current iterate and accepts it only if it satisfies the full KKT
    /// conditions to tolerance.
    #[allow(clippy::too_many_arguments)]
    fn polish(
        &self,
        q: &DVector<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
        qs: &DVector<f64>,
        ls: &DVector<f64>,
        us: &DVector<f64>,
        iterations: usize,
    ) -> Option<QpSolution> {
        #[derive(Clone, Copy, PartialEq)]
        enum Row {
            Free,
            Lower,
            Upper,
            Equal,
            /// Soft row past its upper (+1) or lower (−1) bound.
            Past(f64),
        }
        let (n, m) = (self.ps.nrows(), self.as_.nrows());
        let rows: Vec<Row> = (0..m)
            .map(|i| {
                let z = self.z[i];
                if ls[i] == us[i] && z == ls[i] {
                    Row::Equal
                } else if z > us[i] {
                    Row::Past(1.0)
                } else if z < ls[i] {
                    Row::Past(-1.0)
                } else if z == us[i] {
                    Row::Upper
                } else if z == ls[i] {
                    Row::Lower
                } else {
                    Row::Free
                }
            })
            .collect();
        let active: Vec<usize> = (0..m)
            .filter(|&i| matches!(rows[i], Row::Lower | Row::Upper | Row::Equal))
            .collect();
        let mut qp = qs.clone();
        for i in 0..m {
            if let Row::Past(s) = rows[i] {
                qp += self.as_.row(i).transpose() * (s * self.ws[i]);
            }
        }
        let k = active.len();
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.ps);
        for (r, &i) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = self.as_[(i, j)];
                kkt[(j, n + r)] = self.as_[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&qp));
        for (r, &i) in active.iter().enumerate() {
            rhs[n + r] = if rows[i] == Row::Lower { ls[i] } else { us[i] };
        }
        let mut reg = kkt.clone();
        for i in 0..dim {
            reg[(i, i)] += if i < n { POLISH_DELTA } else { -POLISH_DELTA };
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..3 {
            let r = &rhs - &kkt * &sol;
            sol += lu.solve(&r)?;
        }
        let xs = sol.rows(0, n).into_owned();
        let mut ys = DVector::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            ys[i] = sol[n + r];
        }
        for i in 0..m {
            if let Row::Past(s) = rows[i] {
                ys[i] = s * self.ws[i];
            }
        }

        // verify in unscaled units
        let x = xs.component_mul(&self.d);
        let y = DVector::from_fn(m, |i, _| self.e[i] * ys[i] / self.c);
        let ax = &self.a * &x;
        let tol_p = |i: usize| self.settings.eps_abs + self.settings.eps_rel * ax[i].abs().max(l[i].abs().min(u[i].abs()));
        let ymax = inf_norm(&y).max(1.0);
        let tol_d = self.settings.eps_abs + self.settings.eps_rel * ymax;
        for i in 0..m {
            let (lo, hi, tp) = (l[i], u[i], tol_p(i));
            let ok = match rows[i] {
                Row::Free => ax[i] >= lo - tp && ax[i] <= hi + tp,
                Row::Lower => y[i] <= tol_d && y[i] >= -self.w[i] - tol_d && (ax[i] - lo).abs() <= tp,
                Row::Upper => y[i] >= -tol_d && y[i] <= self.w[i] + tol_d && (ax[i] - hi).abs() <= tp,
                Row::Equal => (ax[i] - lo).abs() <= tp,
                Row::Past(s) => {
                    if s > 0.0 {
                        ax[i] >= hi - tp
                    } else {
                        ax[i] <= lo + tp
                    }
                }
            };
            if !ok {
                return None;
            }
        }
        let rd = inf_norm(&(&self.p * &x + q + self.a.tr_mul(&y)));
        let ed = self.settings.eps_abs
            + self.settings.eps_rel * inf_norm(&(&self.p * &x)).max(inf_norm(&self.a.tr_mul(&y))).max(inf_norm(q));
        if !(rd <= ed) {
            return None;
        }
        let rp = (0..m)
            .map(|i| {
                if self.w[i].is_infinite() {
                    (ax[i] - u[i]).max(l[i] - ax[i]).max(0.0)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        Some(QpSolution {
            objective: self.objective(&x, q, l, u),
            x,
            y,
            iterations,
            polished: true,
            primal_residual: rp,
            dual_residual: rd,
        })
    }
}

/// Ruiz equilibration of `[[P, Aᵀ], [A, 0]]` followed by cost scaling.
fn ruiz(p: &DMatrix<f64>, a: &DMatrix<f64>, iters: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let (n, m) = (p.nrows(), a.nrows());
    let mut ps = p.clone();
    let mut as_ = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let safe = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| {
            let cp = ps.column(j).amax();
            let ca = if m > 0 { as_.column(j).amax() } else { 0.0 };
            1.0 / safe(cp.max(ca)).sqrt()
        });
        let ee = DVector::from_fn(m, |i, _| 1.0 / safe(as_.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                ps[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                as_[(i, j)] *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    let mean_col = if n > 0 {
        (0..n).map(|j| ps.column(j).amax()).sum::<f64>() / n as f64
    } else {
        1.0
    };
    let c = 1.0 / safe(mean_col);
    ps *= c;
    (ps, as_, d, e, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hard(m: usize) -> DVector<f64> {
        DVector::from_element(m, f64::INFINITY)
    }

    #[test]
    fn box_constrained_minimum() {
        // min (x0-2)² + (x1+1)² with 0 ≤ x ≤ 1 → x = (1, 0)
        let p = DMatrix::from_diagonal_element(2, 2, 2.0);
        let q = DVector::from_vec(vec![-4.0, 2.0]);
        let a = DMatrix::identity(2, 2);
        let mut s = QpSolver::new(p, a, hard(2), QpSettings::default()).unwrap();
        let sol = s.solve(&q, &DVector::zeros(2), &DVector::from_element(2, 1.0)).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && sol.x[1].abs() < 1e-9, "{}", sol.x);
        assert!(sol.y[0] > 0.0 && sol.y[1] < 0.0);
    }

    #[test]
    fn soft_row_is_exact_penalty() {
        // min ½x² − 3x + w·max(0, x − 1): w = 1 gives x = 2, w = 10 gives x = 1
        let p = DMatrix::from_element(1, 1, 1.0);
        let q = DVector::from_element(1, -3.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let l = DVector::from_element(1, f64::NEG_INFINITY);
        let u = DVector::from_element(1, 1.0);
        for (w, x) in [(1.0, 2.0), (10.0, 1.0)] {
            let mut s = QpSolver::new(p.clone(), a.clone(), DVector::from_element(1, w), QpSettings::default()).unwrap();
            let sol = s.solve(&q, &l, &u).unwrap();
            assert!((sol.x[0] - x).abs() < 1e-8, "w = {w}: {}", sol.x[0]);
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut s = QpSolver::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), hard(1), QpSettings::default()).unwrap();
        let err = s
            .solve(&DVector::zeros(1), &DVector::from_element(1, 1.0), &DVector::from_element(1, 0.0))
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }
}
