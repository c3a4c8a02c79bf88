//! Constrained tracking MPC with a condensed QP.
//!
//! At sample `k` the controller predicts `y(k+1) … y(k+N)` from the
//! predictor state and the stacked moves `U = [u_0; …; u_{N−1}]`,
//! `Y = F + Γ U`, and solves
//!
//! ```text
//! minimize   q_y ‖Y − R‖² + r_u ‖U‖² + r_du ‖ΔU‖² + ρ_s Σ slack
//! subject to u_min ≤ u_i ≤ u_max                        (hard)
//!            y_min − slack ≤ y_j ≤ y_max + slack           (soft)
//! ```
//!
//! where `Δu_0 = u_0 − u(k−1)`. The first move is applied to the plant and
//! the predictor state is advanced with the applied input.

pub mod qp;

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mor::{ReducedLtv, ReducedModel};
use crate::wqss::{LtiSystem, LtvSystem, StateSpace};
pub use qp::{QpSettings, QpSolution, QpSolver};

fn default_u_min() -> Option<Vec<f64>> {
    Some(vec![0.0])
}

fn one() -> f64 {
    1.0
}

fn default_slack_penalty() -> f64 {
    1e6
}

/// Controller settings. Vector fields hold one value per channel or a single
/// value used for every channel; `null` bounds are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon `N` in samples.
    pub horizon: usize,
    /// Output reference in mg/L.
    pub reference: Vec<f64>,
    /// Dosage lower bound in mg per sample.
    #[serde(default = "default_u_min")]
    pub u_min: Option<Vec<f64>>,
    #[serde(default)]
    pub u_max: Option<Vec<f64>>,
    #[serde(default)]
    pub y_min: Option<Vec<f64>>,
    #[serde(default)]
    pub y_max: Option<Vec<f64>>,
    /// Tracking weight.
    #[serde(default = "one")]
    pub q_y: f64,
    /// Effort weight.
    #[serde(default)]
    pub r_u: f64,
    /// Move-suppression weight.
    #[serde(default)]
    pub r_du: f64,
    /// Price per unit of output-bound violation.
    #[serde(default = "default_slack_penalty")]
    pub slack_penalty: f64,
    #[serde(default)]
    pub qp: QpSettings,
}

impl MpcConfig {
    pub fn tracking(horizon: usize, reference: f64) -> Self {
        MpcConfig {
            horizon,
            reference: vec![reference],
            u_min: default_u_min(),
            u_max: None,
            y_min: None,
            y_max: None,
            q_y: 1.0,
            r_u: 0.0,
            r_du: 0.0,
            slack_penalty: default_slack_penalty(),
            qp: QpSettings::default(),
        }
    }
}

fn broadcast(name: &str, v: &Option<Vec<f64>>, n: usize, absent: f64) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![absent; n]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; n]),
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(Error::Config(format!("{name} has {} entries, expected 1 or {n}", v.len()))),
    }
}

/// Validated per-channel form of [`MpcConfig`].
struct Resolved {
    n: usize,
    r: Vec<f64>,
    u_lo: Vec<f64>,
    u_hi: Vec<f64>,
    y_lo: Vec<f64>,
    y_hi: Vec<f64>,
    soft_outputs: bool,
}

fn resolve(cfg: &MpcConfig, n_u: usize, n_y: usize) -> Result<Resolved> {
    if cfg.horizon == 0 {
        return Err(Error::Config("MPC horizon must be at least one sample".into()));
    }
    for (name, w) in [("q_y", cfg.q_y), ("r_u", cfg.r_u), ("r_du", cfg.r_du)] {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("weight {name} = {w} must be finite and nonnegative")));
        }
    }
    if !(cfg.slack_penalty > 0.0 && cfg.slack_penalty.is_finite()) {
        return Err(Error::Config("slack_penalty must be positive and finite".into()));
    }
    let r = broadcast("reference", &Some(cfg.reference.clone()), n_y, 0.0)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("reference must be finite".into()));
    }
    let u_lo = broadcast("u_min", &cfg.u_min, n_u, f64::NEG_INFINITY)?;
    let u_hi = broadcast("u_max", &cfg.u_max, n_u, f64::INFINITY)?;
    let y_lo = broadcast("y_min", &cfg.y_min, n_y, f64::NEG_INFINITY)?;
    let y_hi = broadcast("y_max", &cfg.y_max, n_y, f64::INFINITY)?;
    for (what, lo, hi) in [("input", &u_lo, &u_hi), ("output", &y_lo, &y_hi)] {
        for (i, (a, b)) in lo.iter().zip(hi.iter()).enumerate() {
            if a.is_nan() || b.is_nan() || a > b || *a == f64::INFINITY || *b == f64::NEG_INFINITY {
                return Err(Error::Infeasible(format!("{what} {} has contradictory bounds [{a}, {b}]", i + 1)));
            }
        }
    }
    let soft_outputs = y_lo.iter().chain(y_hi.iter()).any(|v| v.is_finite());
    Ok(Resolved {
        n: cfg.horizon,
        r,
        u_lo,
        u_hi,
        y_lo,
        y_hi,
        soft_outputs,
    })
}

/// Model used inside the controller.
#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Full(&'a LtiSystem),
    FullLtv(&'a LtvSystem),
    Reduced(&'a ReducedModel),
    ReducedLtv(&'a ReducedLtv),
}

impl<'a> Predictor<'a> {
    fn model(&self) -> &'a dyn StateSpace {
        match *self {
            Predictor::Full(s) => s,
            Predictor::FullLtv(s) => s,
            Predictor::Reduced(s) => s,
            Predictor::ReducedLtv(s) => s,
        }
    }

    /// Whether the last input channel is the initial-condition impulse.
    fn augmented(&self) -> bool {
        match *self {
            Predictor::Reduced(r) => r.augmented,
            Predictor::ReducedLtv(r) => r.pieces[0].augmented,
            _ => false,
        }
    }

    fn initial_state(&self, x0: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        let n = self.model().n_x();
        let Some(x0) = x0 else {
            return Ok(DVector::zeros(n));
        };
        match *self {
            Predictor::Full(_) | Predictor::FullLtv(_) => {
                if x0.len() != n {
                    return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
                }
                Ok(x0.clone())
            }
            _ if self.augmented() => Ok(DVector::zeros(n)),
            Predictor::Reduced(r) => project(&r.s, x0),
            Predictor::ReducedLtv(r) => project(&r.pieces[0].s, x0),
        }
    }

    /// Stacked `C A^j`, `j = 1..=n`, for time-invariant predictors.
    fn output_map(&self, n: usize) -> Option<DMatrix<f64>> {
        match *self {
            Predictor::Full(s) => Some(sparse_output_map(s, n)),
            Predictor::FullLtv(s) if s.pieces().len() == 1 => Some(sparse_output_map(s.first(), n)),
            Predictor::Reduced(r) => Some(dense_output_map(&r.a, &r.c, n)),
            Predictor::ReducedLtv(r) if r.pieces.len() == 1 => Some(dense_output_map(&r.pieces[0].a, &r.pieces[0].c, n)),
            _ => None,
        }
    }
}

fn project(s: &DMatrix<f64>, x0: &DVector<f64>) -> Result<DVector<f64>> {
    if s.ncols() != x0.len() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), s.ncols())));
    }
    Ok(s * x0)
}

fn sparse_output_map(sys: &LtiSystem, n: usize) -> DMatrix<f64> {
    let (nx, ny) = (sys.a.nrows(), sys.c.nrows());
    let mut o = DMatrix::zeros(n * ny, nx);
    let mut next = vec![0.0; nx];
    for i in 0..ny {
        let mut v = vec![0.0; nx];
        for (j, val) in sys.c.row(i) {
            v[j] = val;
        }
        for j in 0..n {
            sys.a.tr_mul_vec_into(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            for (col, &val) in v.iter().enumerate() {
                o[(j * ny + i, col)] = val;
            }
        }
    }
    o
}

fn dense_output_map(a: &DMatrix<f64>, c: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let ny = c.nrows();
    let mut o = DMatrix::zeros(n * ny, a.ncols());
    let mut m = c.clone();
    for j in 0..n {
        m = &m * a;
        o.view_mut((j * ny, 0), (ny, a.ncols())).copy_from(&m);
    }
    o
}

/// Outputs `y(k+1) … y(k+n)` of `model` from state `x` at time `k` under the
/// control sequence `v(0..=n)` (the last entry only feeds `D`). The impulse
/// channel, if any, fires at absolute time 0.
fn simulate_window(
    model: &dyn StateSpace,
    k: usize,
    x: &DVector<f64>,
    n: usize,
    augmented: bool,
    control: impl Fn(usize, usize) -> f64,
) -> DVector<f64> {
    let (nx, nu, ny) = (model.n_x(), model.n_u(), model.n_y());
    let n_ctrl = nu - usize::from(augmented);
    let mut xs = x.as_slice().to_vec();
    let mut xn = vec![0.0; nx];
    let mut u = vec![0.0; nu];
    let mut y = vec![0.0; ny];
    let mut out = DVector::zeros(n * ny);
    for t in 0..=n {
        for (ch, uc) in u.iter_mut().enumerate().take(n_ctrl) {
            *uc = control(t, ch);
        }
        if augmented {
            u[n_ctrl] = if k + t == 0 { 1.0 } else { 0.0 };
        }
        if t >= 1 {
            model.output(k + t, &xs, &u, &mut y);
            out.rows_mut((t - 1) * ny, ny).copy_from_slice(&y);
        }
        if t < n {
            model.step(k + t, &xs, &u, &mut xn);
            std::mem::swap(&mut xs, &mut xn);
        }
    }
    out
}

/// `Γ` such that `Y = F + Γ U`; the last move is held for the `D` term of `y(k+N)`.
fn prediction_matrix(pred: &Predictor<'_>, k: usize, n: usize, n_ctrl: usize, map: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let model = pred.model();
    let ny = model.n_y();
    let mut g = DMatrix::zeros(n * ny, n * n_ctrl);
    match map {
        Some(o) => {
            // Markov parameters h_t = C A^{t−1} B and h_0 = D
            let (b, d) = match *pred {
                Predictor::Full(s) => (s.b.columns(0, n_ctrl).into_owned(), s.d.columns(0, n_ctrl).into_owned()),
                Predictor::FullLtv(s) => {
                    let s = s.first();
                    (s.b.columns(0, n_ctrl).into_owned(), s.d.columns(0, n_ctrl).into_owned())
                }
                Predictor::Reduced(r) => (r.b.columns(0, n_ctrl).into_owned(), r.d.columns(0, n_ctrl).into_owned()),
                Predictor::ReducedLtv(r) => {
                    let r = &r.pieces[0];
                    (r.b.columns(0, n_ctrl).into_owned(), r.d.columns(0, n_ctrl).into_owned())
                }
            };
            let c_b = match *pred {
                Predictor::Full(s) => s.c.mul_dense(&b),
                Predictor::FullLtv(s) => s.first().c.mul_dense(&b),
                Predictor::Reduced(r) => &r.c * &b,
                Predictor::ReducedLtv(r) => &r.pieces[0].c * &b,
            };
            let ob = o * &b;
            let h = |t: usize| -> DMatrix<f64> {
                if t == 1 {
                    c_b.clone()
                } else {
                    ob.rows((t - 2) * ny, ny).into_owned()
                }
            };
            for j in 1..=n {
                for i in 0..j {
                    let mut blk = h(j - i);
                    if j == n && i == n - 1 {
                        blk += &d;
                    }
                    g.view_mut(((j - 1) * ny, i * n_ctrl), (ny, n_ctrl)).copy_from(&blk);
                }
                if j < n {
                    g.view_mut(((j - 1) * ny, j * n_ctrl), (ny, n_ctrl)).copy_from(&d);
                }
            }
        }
        None => {
            // the impulse channel stays silent: only control columns are probed
            let zero = DVector::zeros(model.n_x());
            for i in 0..n {
                for ch in 0..n_ctrl {
                    let col = simulate_window(model, k, &zero, n, false, |t, c| {
                        if c == ch && (t == i || (t == n && i == n - 1)) {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    g.column_mut(i * n_ctrl + ch).copy_from(&col);
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Serialize)]
pub struct MpcResult {
    pub dt: f64,
    /// Applied inputs, `n_u × steps`.
    #[serde(skip)]
    pub u: DMatrix<f64>,
    /// Plant outputs, `n_y × steps`.
    #[serde(skip)]
    pub y: DMatrix<f64>,
    /// Seconds spent forming and solving each step's QP.
    pub qp_time_s: Vec<f64>,
    pub qp_iterations: Vec<usize>,
    /// `Σ_k q_y‖y(k) − r‖² + r_u‖u(k)‖² + r_du‖u(k) − u(k−1)‖²`.
    pub cost: f64,
    pub n_variables: usize,
    pub n_constraints: usize,
}

impl MpcResult {
    pub fn total_qp_time(&self) -> f64 {
        self.qp_time_s.iter().sum()
    }

    /// Whether every applied input lies inside `cfg`'s hard bounds.
    pub fn inputs_within(&self, cfg: &MpcConfig) -> bool {
        let n_u = self.u.nrows();
        let (Ok(lo), Ok(hi)) = (
            broadcast("u_min", &cfg.u_min, n_u, f64::NEG_INFINITY),
            broadcast("u_max", &cfg.u_max, n_u, f64::INFINITY),
        ) else {
            return false;
        };
        self.u
            .column_iter()
            .all(|c| c.iter().enumerate().all(|(i, &v)| v >= lo[i] && v <= hi[i]))
    }

    /// CSV `t, u..., y..., qp_time_s`; the timing column holds `NA` unless
    /// `timings` is set.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from("t");
        for i in 0..self.u.nrows() {
            let _ = write!(s, ",u{}", i + 1);
        }
        for i in 0..self.y.nrows() {
            let _ = write!(s, ",y{}", i + 1);
        }
        s.push_str(",qp_time_s\n");
        for k in 0..self.u.ncols() {
            let _ = write!(s, "{}", k as f64 * self.dt);
            for v in self.u.column(k).iter().chain(self.y.column(k).iter()) {
                let _ = write!(s, ",{v:e}");
            }
            if timings {
                let _ = writeln!(s, ",{:.6e}", self.qp_time_s[k]);
            } else {
                s.push_str(",NA\n");
            }
        }
        s
    }
}

/// Achieved operational cost of an input/output record.
pub fn operational_cost(cfg: &MpcConfig, u: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let r = broadcast("reference", &Some(cfg.reference.clone()), y.nrows(), 0.0)?;
    let mut cost = 0.0;
    let mut prev = DVector::zeros(u.nrows());
    for k in 0..u.ncols() {
        let uk = u.column(k);
        let e: f64 = y.column(k).iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
        cost += cfg.q_y * e + cfg.r_u * uk.norm_squared() + cfg.r_du * (uk - &prev).norm_squared();
        prev.copy_from(&uk);
    }
    Ok(cost)
}

/// Receding-horizon control of `plant` for `steps` samples from `x0`.
pub fn run_mpc<P: StateSpace + ?Sized>(
    plant: &P,
    predictor: Predictor<'_>,
    cfg: &MpcConfig,
    steps: usize,
    x0: Option<&DVector<f64>>,
) -> Result<MpcResult> {
    let (n_u, n_y) = (plant.n_u(), plant.n_y());
    let model = predictor.model();
    let augmented = predictor.augmented();
    if model.n_y() != n_y || model.n_u() != n_u + usize::from(augmented) {
        return Err(Error::Dimension(format!(
            "predictor has {} inputs and {} outputs, plant {n_u} and {n_y}",
            model.n_u() - usize::from(augmented),
            model.n_y()
        )));
    }
    if steps == 0 {
        return Err(Error::Dimension("MPC needs at least one step".into()));
    }
    let rs = resolve(cfg, n_u, n_y)?;
    let n = rs.n;
    let nv = n * n_u;
    let n_soft = if rs.soft_outputs { n * n_y } else { 0 };
    let m = nv + n_soft;

    let map = predictor.output_map(n);
    let time_invariant = map.is_some();
    let build = |k: usize| -> Result<(DMatrix<f64>, QpSolver)> {
        let g = prediction_matrix(&predictor, k, n, n_u, map.as_ref());
        let mut diff = DMatrix::<f64>::identity(nv, nv);
        for i in n_u..nv {
            diff[(i, i - n_u)] = -1.0;
        }
        let mut p = g.tr_mul(&g) * cfg.q_y + diff.tr_mul(&diff) * cfg.r_du;
        for i in 0..nv {
            p[(i, i)] += cfg.r_u;
        }
        p *= 2.0;
        let mut a = DMatrix::zeros(m, nv);
        a.view_mut((0, 0), (nv, nv)).fill_with_identity();
        if n_soft > 0 {
            a.view_mut((nv, 0), (n_soft, nv)).copy_from(&g);
        }
        let w = DVector::from_fn(m, |i, _| if i < nv { f64::INFINITY } else { cfg.slack_penalty });
        Ok((g, QpSolver::new(p, a, w, cfg.qp)?))
    };
    let (mut g, mut solver) = build(0)?;

    let rvec = DVector::from_fn(n * n_y, |i, _| rs.r[i % n_y]);
    let mut x = match x0 {
        Some(x0) if x0.len() != plant.n_x() => {
            return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), plant.n_x())))
        }
        Some(x0) => x0.as_slice().to_vec(),
        None => vec![0.0; plant.n_x()],
    };
    let mut xn = vec![0.0; plant.n_x()];
    let mut xp = predictor.initial_state(x0)?;
    let mut xp_next = vec![0.0; model.n_x()];
    let mut u_prev: Vec<f64> = (0..n_u).map(|i| 0f64.clamp(rs.u_lo[i], rs.u_hi[i])).collect();

    let mut u_rec = DMatrix::zeros(n_u, steps);
    let mut y_rec = DMatrix::zeros(n_y, steps);
    let mut times = Vec::with_capacity(steps);
    let mut iters = Vec::with_capacity(steps);
    let mut warm: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut yk = vec![0.0; n_y];
    let mut u_model = vec![0.0; model.n_u()];

    for k in 0..steps {
        let t0 = Instant::now();
        if !time_invariant && k > 0 {
            (g, solver) = build(k)?;
        }
        if let Some((wx, wy)) = &warm {
            solver.warm_start(wx, wy);
        }
        let f = match &map {
            Some(o) if !(augmented && k == 0) => o * &xp,
            _ => simulate_window(model, k, &xp, n, augmented, |_, _| 0.0),
        };
        let mut q = g.tr_mul(&(&f - &rvec)) * (2.0 * cfg.q_y);
        for i in 0..n_u {
            q[i] -= 2.0 * cfg.r_du * u_prev[i];
        }
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        for i in 0..nv {
            lo[i] = rs.u_lo[i % n_u];
            hi[i] = rs.u_hi[i % n_u];
        }
        for i in 0..n_soft {
            lo[nv + i] = rs.y_lo[i % n_y] - f[i];
            hi[nv + i] = rs.y_hi[i % n_y] - f[i];
        }
        let sol = solver.solve(&q, &lo, &hi)?;
        let uk: Vec<f64> = (0..n_u).map(|i| sol.x[i].clamp(rs.u_lo[i], rs.u_hi[i])).collect();
        times.push(t0.elapsed().as_secs_f64());
        iters.push(sol.iterations);
        warm = Some(shift(&sol, n, n_u, n_y, n_soft));

        plant.output(k, &x, &uk, &mut yk);
        plant.step(k, &x, &uk, &mut xn);
        std::mem::swap(&mut x, &mut xn);
        u_model[..n_u].copy_from_slice(&uk);
        if augmented {
            u_model[n_u] = if k == 0 { 1.0 } else { 0.0 };
        }
        model.step(k, xp.as_slice(), &u_model, &mut xp_next);
        xp.as_mut_slice().copy_from_slice(&xp_next);
        u_rec.column_mut(k).copy_from_slice(&uk);
        y_rec.column_mut(k).copy_from_slice(&yk);
        u_prev = uk;
    }
    let cost = operational_cost(cfg, &u_rec, &y_rec)?;
    if !cost.is_finite() {
        return Err(Error::Numerical("MPC cost is not finite".into()));
    }
    Ok(MpcResult {
        dt: plant.dt(),
        u: u_rec,
        y: y_rec,
        qp_time_s: times,
        qp_iterations: iters,
        cost,
        n_variables: nv,
        n_constraints: m,
    })
}

/// Warm start for the next sample: every block moves one step earlier and
/// the last one is repeated.
fn shift(sol: &QpSolution, n: usize, n_u: usize, n_y: usize, n_soft: usize) -> (DVector<f64>, DVector<f64>) {
    let shift_blocks = |v: &[f64], width: usize| -> Vec<f64> {
        let mut out = v[width..].to_vec();
        out.extend_from_slice(&v[v.len() - width..]);
        out
    };
    let nv = n * n_u;
    let x = DVector::from_vec(shift_blocks(sol.x.as_slice(), n_u));
    let mut y = shift_blocks(&sol.y.as_slice()[..nv], n_u);
    if n_soft > 0 {
        y.extend(shift_blocks(&sol.y.as_slice()[nv..], n_y));
    }
    (x, DVector::from_vec(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> LtiSystem {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        LtiSystem::from_dense(&m(a), &m(b), &m(1.0), &m(0.0), 1.0).unwrap()
    }

    #[test]
    fn zero_reference_gives_zero_control() {
        let sys = scalar(0.9, 0.5);
        let cfg = MpcConfig::tracking(5, 0.0);
        let r = run_mpc(&sys, Predictor::Full(&sys), &cfg, 20, None).unwrap();
        assert!(r.u.iter().all(|&v| v == 0.0));
        assert!(r.y.iter().all(|&v| v == 0.0));
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn one_step_unconstrained_matches_least_squares() {
        // y(k+1) = a x + b u; minimize q(a x + b u − r)² + r_u u² + r_du (u − u_prev)²
        let (a, b, r) = (0.8, 0.5, 2.0);
        let sys = scalar(a, b);
        let mut cfg = MpcConfig::tracking(1, r);
        cfg.u_min = None;
        cfg.r_u = 0.1;
        cfg.r_du = 0.05;
        let x0 = DVector::from_element(1, 1.5);
        let res = run_mpc(&sys, Predictor::Full(&sys), &cfg, 3, Some(&x0)).unwrap();
        let mut x = 1.5;
        let mut prev = 0.0;
        for k in 0..3 {
            let u = (cfg.q_y * b * (r - a * x) + cfg.r_du * prev) / (cfg.q_y * b * b + cfg.r_u + cfg.r_du);
            assert!((res.u[(0, k)] - u).abs() < 1e-9, "k = {k}: {} vs {u}", res.u[(0, k)]);
            x = a * x + b * u;
            prev = u;
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let sys = scalar(0.5, 1.0);
        let mut cfg = MpcConfig::tracking(3, 1.0);
        cfg.y_min = Some(vec![2.0]);
        cfg.y_max = Some(vec![1.0]);
        let err = run_mpc(&sys, Predictor::Full(&sys), &cfg, 2, None).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn input_bound_binds() {
        let sys = scalar(0.5, 1.0);
        let mut cfg = MpcConfig::tracking(4, 10.0);
        cfg.u_max = Some(vec![1.0]);
        let r = run_mpc(&sys, Predictor::Full(&sys), &cfg, 10, None).unwrap();
        assert!(r.inputs_within(&cfg));
        assert!(r.u.iter().all(|&v| v == 1.0), "{}", r.u);
    }

    #[test]
    fn soft_output_bound_limits_overshoot() {
        let sys = scalar(0.5, 1.0);
        let mut cfg = MpcConfig::tracking(4, 10.0);
        cfg.y_max = Some(vec![3.0]);
        let r = run_mpc(&sys, Predictor::Full(&sys), &cfg, 10, None).unwrap();
        assert!(r.y.iter().all(|&v| v <= 3.0 + 1e-7), "{}", r.y);
        assert!((r.y[(0, 9)] - 3.0).abs() < 1e-7);
    }
}
