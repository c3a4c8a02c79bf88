//! A-posteriori stabilization of a reduced state matrix.
//!
//! Finds a small `ΔA` such that `A + ΔA` is Schur stable by solving
//!
//! ```text
//! minimize α  over  P = Pᵀ, ΔY, α
//!   P − I ⪰ 0
//!   [[P, (PA + ΔY)ᵀ], [PA + ΔY, P]] ⪰ εI
//!   [[I, ΔYᵀ], [ΔY, αI]] ⪰ 0
//! ```
//!
//! and returning `ΔA = P⁻¹ΔY`. The second block is the Lyapunov LMI for
//! `A + ΔA`; the third bounds `‖ΔY‖₂² ≤ α`. `P ⪰ I` fixes the scale of the
//! otherwise homogeneous certificate.
//!
//! The solver is a primal-dual interior-point method on the SDP in
//! inequality form, with Nesterov–Todd scaling and a Mehrotra-type
//! centering heuristic. The dual iterate `y = (P, ΔY, α)` starts strictly
//! feasible and stays so, which makes every returned `P` a valid certificate.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dense_spectral_radius, norm2, sym_eigen_desc, symmetrized};

/// Strict-feasibility margin on the Lyapunov block.
pub const LMI_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative primal infeasibility target.
    pub feas_tol: f64,
    /// Complementarity target, relative to `1 + α`.
    pub gap_tol: f64,
    pub margin: f64,
    /// Lower bound on the centering parameter.
    pub sigma_floor: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iter: 120,
            feas_tol: 1e-8,
            gap_tol: 1e-9,
            margin: LMI_MARGIN,
            sigma_floor: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilizationResult {
    pub delta_a: DMatrix<f64>,
    pub a_stab: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Achieved objective `α_y`.
    pub alpha: f64,
    pub delta_norm2: f64,
    pub rho_before: f64,
    pub rho_after: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub gap: f64,
    /// Merit value `‖r_p‖/(1+‖b‖) + ⟨X,S⟩/N` after each iteration.
    pub merit_history: Vec<f64>,
}

/// Index bookkeeping for `y = (vech P, vec ΔY, α)`.
struct Coords {
    n: usize,
    np: usize,
    /// `(a, b)` with `a ≤ b` for each P coordinate.
    pairs: Vec<(usize, usize)>,
}

impl Coords {
    fn new(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        Coords { n, np: pairs.len(), pairs }
    }
    fn dim(&self) -> usize {
        self.np + self.n * self.n + 1
    }
    fn y_index(&self, k: usize, l: usize) -> usize {
        self.np + k * self.n + l
    }
    fn alpha(&self) -> usize {
        self.np + self.n * self.n
    }
}

/// A sparse symmetric generator: `(row, col, value)` entries, both triangles listed.
type Generator = Vec<(usize, usize, f64)>;

fn sym_gen(i: usize, j: usize) -> Generator {
    if i == j {
        vec![(i, i, 1.0)]
    } else {
        vec![(i, j, 1.0), (j, i, 1.0)]
    }
}

/// Block generators in per-block elementary coordinates.
struct Blocks {
    /// Block 1 (n×n): P coordinates.
    g1: Vec<Generator>,
    /// Block 2 (2n×2n): P coordinates then R = PA + ΔY entries.
    g2: Vec<Generator>,
    /// Block 3 (2n×2n): ΔY entries then α.
    g3: Vec<Generator>,
}

impl Blocks {
    fn new(c: &Coords) -> Self {
        let n = c.n;
        let g1 = c.pairs.iter().map(|&(a, b)| sym_gen(a, b)).collect();
        let mut g2: Vec<Generator> = c
            .pairs
            .iter()
            .map(|&(a, b)| {
                let mut g = sym_gen(a, b);
                g.extend(sym_gen(n + a, n + b));
                g
            })
            .collect();
        let mut g3 = Vec::with_capacity(n * n + 1);
        for k in 0..n {
            for l in 0..n {
                g2.push(vec![(n + k, l, 1.0), (l, n + k, 1.0)]);
                g3.push(vec![(n + k, l, 1.0), (l, n + k, 1.0)]);
            }
        }
        g3.push((0..n).map(|i| (n + i, n + i, 1.0)).collect());
        Blocks { g1, g2, g3 }
    }
}

/// `M[g,h] = ⟨G_g, W G_h W⟩` for sparse generators.
fn schur_block(gens: &[Generator], w: &DMatrix<f64>) -> DMatrix<f64> {
    let d = gens.len();
    let mut m = DMatrix::zeros(d, d);
    for g in 0..d {
        for h in g..d {
            let mut acc = 0.0;
            for &(p, q, f) in &gens[g] {
                for &(r, s, e) in &gens[h] {
                    acc += f * e * w[(q, r)] * w[(s, p)];
                }
            }
            m[(g, h)] = acc;
            m[(h, g)] = acc;
        }
    }
    m
}

/// `⟨G_g, X⟩` for each generator.
fn adjoint_block(gens: &[Generator], x: &DMatrix<f64>) -> Vec<f64> {
    gens.iter().map(|g| g.iter().map(|&(p, q, f)| f * x[(p, q)]).sum()).collect()
}

/// The three blocks of `Σ y_i F_i` (linear part only).
fn linear_blocks(c: &Coords, a: &DMatrix<f64>, y: &DVector<f64>) -> [DMatrix<f64>; 3] {
    let n = c.n;
    let (p, dy, alpha) = unpack(c, y);
    let r = &p * a + &dy;
    let mut b2 = DMatrix::zeros(2 * n, 2 * n);
    b2.view_mut((0, 0), (n, n)).copy_from(&p);
    b2.view_mut((n, n), (n, n)).copy_from(&p);
    b2.view_mut((n, 0), (n, n)).copy_from(&r);
    b2.view_mut((0, n), (n, n)).copy_from(&r.transpose());
    let mut b3 = DMatrix::zeros(2 * n, 2 * n);
    b3.view_mut((n, 0), (n, n)).copy_from(&dy);
    b3.view_mut((0, n), (n, n)).copy_from(&dy.transpose());
    for i in 0..n {
        b3[(n + i, n + i)] = alpha;
    }
    [p, b2, b3]
}

fn unpack(c: &Coords, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let n = c.n;
    let mut p = DMatrix::zeros(n, n);
    for (i, &(a, b)) in c.pairs.iter().enumerate() {
        p[(a, b)] = y[i];
        p[(b, a)] = y[i];
    }
    let dy = DMatrix::from_fn(n, n, |k, l| y[c.y_index(k, l)]);
    (p, dy, y[c.alpha()])
}

/// Constant term `F_0` of `S = Σ y_i F_i − F_0`.
fn f0_blocks(n: usize, margin: f64) -> [DMatrix<f64>; 3] {
    let mut f3 = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        f3[(i, i)] = -1.0;
    }
    [DMatrix::identity(n, n), DMatrix::identity(2 * n, 2 * n) * margin, f3]
}

/// `Σ_k T_kᵀ (⟨G, X_k⟩)` in `y` coordinates.
fn adjoint(c: &Coords, bl: &Blocks, a: &DMatrix<f64>, x: &[DMatrix<f64>; 3]) -> DVector<f64> {
    let n = c.n;
    let mut out = DVector::zeros(c.dim());
    let g1 = adjoint_block(&bl.g1, &x[0]);
    let g2 = adjoint_block(&bl.g2, &x[1]);
    let g3 = adjoint_block(&bl.g3, &x[2]);
    for i in 0..c.np {
        out[i] = g1[i] + g2[i];
    }
    // R = PA + ΔY: the R part maps to ΔY directly and to P through A
    let gr = DMatrix::from_fn(n, n, |k, l| g2[c.np + k * n + l]);
    let gra = &gr * a.transpose();
    for (i, &(pa, pb)) in c.pairs.iter().enumerate() {
        out[i] += if pa == pb { gra[(pa, pa)] } else { gra[(pa, pb)] + gra[(pb, pa)] };
    }
    for k in 0..n {
        for l in 0..n {
            out[c.y_index(k, l)] = gr[(k, l)] + g3[k * n + l];
        }
    }
    out[c.alpha()] = g3[n * n];
    out
}

/// Right-multiplies the `n²` R-columns of `m` by `T_RP`, giving one column
/// per P coordinate.
fn times_trp(c: &Coords, a: &DMatrix<f64>, m: &DMatrix<f64>, r0: usize) -> DMatrix<f64> {
    let n = c.n;
    let rows = m.nrows();
    let mut out = DMatrix::zeros(rows, c.np);
    for (j, &(pa, pb)) in c.pairs.iter().enumerate() {
        let mut col = DVector::zeros(rows);
        for l in 0..n {
            col.axpy(a[(pb, l)], &m.column(r0 + pa * n + l), 1.0);
            if pa != pb {
                col.axpy(a[(pa, l)], &m.column(r0 + pb * n + l), 1.0);
            }
        }
        out.set_column(j, &col);
    }
    out
}

/// Schur complement `M_ij = Σ_k ⟨F_i, W_k F_j W_k⟩` in `y` coordinates.
fn schur(c: &Coords, bl: &Blocks, a: &DMatrix<f64>, w: &[DMatrix<f64>; 3]) -> DMatrix<f64> {
    let (n, np) = (c.n, c.np);
    let nn = n * n;
    let d = c.dim();
    let mut m = DMatrix::zeros(d, d);

    let m1 = schur_block(&bl.g1, &w[0]);
    m.view_mut((0, 0), (np, np)).add_assign(&m1);

    // block 2 in (P, R) coordinates, then z = T y with R = PA + ΔY
    let mz = schur_block(&bl.g2, &w[1]);
    let u = times_trp(c, a, &mz, np); // (np + nn) × np  = M_z[:, R] T_RP
    let u_r = u.rows(np, nn).into_owned(); // M_RR T_RP
    let ut = times_trp(c, a, &u_r.transpose(), 0).transpose(); // T_RPᵀ M_RR T_RP (np × np)
    let upp = u.rows(0, np).into_owned(); // M_PR T_RP
    let pp = mz.view((0, 0), (np, np)) + &upp + upp.transpose() + ut;
    m.view_mut((0, 0), (np, np)).add_assign(&pp);
    let py = mz.view((0, np), (np, nn)) + u_r.transpose();
    m.view_mut((0, np), (np, nn)).add_assign(&py);
    m.view_mut((np, 0), (nn, np)).add_assign(&py.transpose());
    m.view_mut((np, np), (nn, nn)).add_assign(&mz.view((np, np), (nn, nn)).into_owned());

    let m3 = schur_block(&bl.g3, &w[2]);
    m.view_mut((np, np), (nn + 1, nn + 1)).add_assign(&m3);
    m
}

trait AddAssignView {
    fn add_assign(&mut self, other: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, other: &DMatrix<f64>) {
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrized(m)).map(|c| c.l())
}

/// Nesterov–Todd scaling `W` with `W S W = X`.
fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lx = cholesky(x).ok_or_else(|| Error::Numerical("primal iterate lost definiteness".into()))?;
    let ls = cholesky(s).ok_or_else(|| Error::Numerical("dual iterate lost definiteness".into()))?;
    let svd = (ls.transpose() * &lx).svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed in the scaling step".into()))?;
    let dinv = DMatrix::from_diagonal(&svd.singular_values.map(|v| 1.0 / v));
    let lv = &lx * vt.transpose();
    Ok(symmetrized(&(&lv * dinv * lv.transpose())))
}

/// Largest step `t ≤ 1` keeping `X + t ΔX ≻ 0`, damped by `frac`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, frac: f64) -> Result<f64> {
    let l = cholesky(x).ok_or_else(|| Error::Numerical("iterate lost definiteness".into()))?;
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular factor in step-length computation".into()))?;
    let m = &linv * dx * linv.transpose();
    let (vals, _) = sym_eigen_desc(&symmetrized(&m));
    let lmin = vals.last().copied().unwrap_or(0.0);
    Ok(if lmin >= 0.0 { 1.0 } else { (frac * -1.0 / lmin).min(1.0) })
}

fn inner(a: &[DMatrix<f64>; 3], b: &[DMatrix<f64>; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Cholesky factor of the Schur complement, regularized if needed.
struct SpdSolver {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdSolver {
    fn new(m: &DMatrix<f64>) -> Result<Self> {
        let f = crate::linalg::to_faer(m);
        let diag_max = m.diagonal().amax().max(1e-300);
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut fr = f.clone();
            for i in 0..m.nrows() {
                fr[(i, i)] += reg;
            }
            if let Ok(llt) = fr.llt(faer::Side::Lower) {
                return Ok(SpdSolver { llt });
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
        }
        Err(Error::Numerical("Schur complement is not positive definite".into()))
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let b = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = faer::linalg::solvers::Solve::solve(&self.llt, &b);
        DVector::from_fn(rhs.len(), |i, _| x[(i, 0)])
    }
}

fn slack(c: &Coords, a: &DMatrix<f64>, f0: &[DMatrix<f64>; 3], y: &DVector<f64>) -> [DMatrix<f64>; 3] {
    let lin = linear_blocks(c, a, y);
    std::array::from_fn(|k| &lin[k] - &f0[k])
}

/// Interior-point state: primal `X`, dual `(y, S)` with `S = 𝓕(y) − F_0`.
struct Ipm<'a> {
    c: &'a Coords,
    bl: &'a Blocks,
    a: &'a DMatrix<f64>,
    f0: &'a [DMatrix<f64>; 3],
    cvec: &'a DVector<f64>,
    x: [DMatrix<f64>; 3],
    y: DVector<f64>,
    s: [DMatrix<f64>; 3],
    dim_total: f64,
}

type Blocks3 = [DMatrix<f64>; 3];

impl Ipm<'_> {
    /// `r_p = b − 𝒜(X) = 𝓕*(X) − c`.
    fn primal_residual(&self) -> DVector<f64> {
        adjoint(self.c, self.bl, self.a, &self.x) - self.cvec
    }

    /// One predictor-corrector step; returns the primal and dual step lengths.
    fn step(&mut self, rp: &DVector<f64>, sigma_floor: f64) -> Result<(f64, f64)> {
        let (c, bl, a) = (self.c, self.bl, self.a);
        let mu = inner(&self.x, &self.s) / self.dim_total;
        let w: Blocks3 = [
            nt_scaling(&self.x[0], &self.s[0])?,
            nt_scaling(&self.x[1], &self.s[1])?,
            nt_scaling(&self.x[2], &self.s[2])?,
        ];
        let fac = SpdSolver::new(&schur(c, bl, a, &w))?;
        let mut s_inv = Vec::with_capacity(3);
        for b in &self.s {
            let inv = b
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("dual slack became singular".into()))?;
            s_inv.push(symmetrized(&inv));
        }

        // NT direction for target σμS⁻¹: ΔX + WΔSW = σμS⁻¹ − X,
        // ΔS = 𝓕(Δy), and M Δy = r_p + 𝓕*(σμS⁻¹ − X)
        let direction = |sigma: f64| -> (Blocks3, Blocks3, DVector<f64>) {
            let t: Blocks3 = std::array::from_fn(|k| &s_inv[k] * (sigma * mu) - &self.x[k]);
            let rhs = rp + adjoint(c, bl, a, &t);
            let mut dy = fac.solve(&rhs);
            // refine against the operator itself rather than the assembled M
            for _ in 0..2 {
                let f = linear_blocks(c, a, &dy);
                let wfw: Blocks3 = std::array::from_fn(|k| &w[k] * &f[k] * &w[k]);
                dy += fac.solve(&(&rhs - adjoint(c, bl, a, &wfw)));
            }
            let ds = linear_blocks(c, a, &dy);
            let dx: Blocks3 = std::array::from_fn(|k| symmetrized(&(&t[k] - &w[k] * &ds[k] * &w[k])));
            (dx, ds, dy)
        };
        let lengths = |dx: &Blocks3, ds: &Blocks3, frac: f64| -> Result<(f64, f64)> {
            let (mut ap, mut ad) = (1.0f64, 1.0f64);
            for k in 0..3 {
                ap = ap.min(max_step(&self.x[k], &dx[k], frac)?);
                ad = ad.min(max_step(&self.s[k], &ds[k], frac)?);
            }
            Ok((ap, ad))
        };

        let (dx, ds, _) = direction(0.0);
        let (ap, ad) = lengths(&dx, &ds, 1.0)?;
        let mu_aff: f64 = (0..3)
            .map(|k| (&self.x[k] + &dx[k] * ap).dot(&(&self.s[k] + &ds[k] * ad)))
            .sum::<f64>()
            / self.dim_total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(sigma_floor);

        let (dx, ds, dy) = direction(sigma);
        let (ap, ad) = lengths(&dx, &ds, 0.95)?;
        let y_new = &self.y + &dy * ad;
        if !y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("interior-point iterate diverged".into()));
        }
        let s_new = slack(c, a, self.f0, &y_new);
        if s_new.iter().any(|b| cholesky(b).is_none()) {
            return Err(Error::Numerical("dual slack lost definiteness to round-off".into()));
        }
        for k in 0..3 {
            self.x[k] = symmetrized(&(&self.x[k] + &dx[k] * ap));
        }
        self.y = y_new;
        self.s = s_new;
        Ok((ap, ad))
    }
}

/// Solves the stabilization SDP for `a_r`.
pub fn stabilize_posterior(a_r: &DMatrix<f64>) -> Result<StabilizationResult> {
    stabilize_with(a_r, &SdpOptions::default())
}

pub fn stabilize_with(a_r: &DMatrix<f64>, opts: &SdpOptions) -> Result<StabilizationResult> {
    let n = a_r.nrows();
    if a_r.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!("A_r is {}x{}, expected a nonempty square matrix", n, a_r.ncols())));
    }
    if a_r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("A_r has non-finite entries".into()));
    }
    let rho_before = dense_spectral_radius(a_r);
    let c = Coords::new(n);
    let bl = Blocks::new(&c);
    let d = c.dim();
    let f0 = f0_blocks(n, opts.margin);
    // objective: minimize α, i.e. maximize bᵀy with b = −e_α
    let mut cvec = DVector::zeros(d);
    cvec[c.alpha()] = 1.0;

    // strictly feasible dual start: P = 2I, ΔY = −PA (so R = 0), α ≫ ‖ΔY‖²
    let mut y = DVector::zeros(d);
    for (i, &(pa, pb)) in c.pairs.iter().enumerate() {
        if pa == pb {
            y[i] = 2.0;
        }
    }
    let dy0 = a_r * -2.0;
    for k in 0..n {
        for l in 0..n {
            y[c.y_index(k, l)] = dy0[(k, l)];
        }
    }
    y[c.alpha()] = 2.0 * dy0.norm_squared() + 1.0;
    let mut st = Ipm {
        c: &c,
        bl: &bl,
        a: a_r,
        f0: &f0,
        cvec: &cvec,
        s: slack(&c, a_r, &f0, &y),
        y,
        x: [DMatrix::identity(n, n), DMatrix::identity(2 * n, 2 * n), DMatrix::identity(2 * n, 2 * n)],
        dim_total: (5 * n) as f64,
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let mut stalled = 0;
    let (mut rp_norm, mut gap) = (f64::INFINITY, f64::INFINITY);
    for it in 0..opts.max_iter {
        iters = it + 1;
        let rp = st.primal_residual();
        rp_norm = rp.norm() / (1.0 + cvec.norm());
        gap = inner(&st.x, &st.s);
        history.push(rp_norm + gap / st.dim_total);
        let alpha_now = st.y[c.alpha()];
        if rp_norm <= opts.feas_tol && gap <= opts.gap_tol * (1.0 + alpha_now.abs()) {
            converged = true;
            break;
        }
        match st.step(&rp, opts.sigma_floor) {
            Ok((ap, ad)) => {
                stalled = if ap.max(ad) < 1e-3 { stalled + 1 } else { 0 };
                if stalled >= 3 {
                    break;
                }
            }
            // the dual iterate is still strictly feasible, so its certificate stands
            Err(e) if it > 0 => {
                log::debug!("stabilization SDP stopped early: {e}");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !converged {
        let level = if rp_norm <= 1e-6 && gap <= 1e-6 * (1.0 + st.y[c.alpha()].abs()) {
            log::Level::Debug
        } else {
            log::Level::Warn
        };
        log::log!(
            level,
            "stabilization SDP stopped after {iters} iterations (primal residual {rp_norm:.2e}, gap {gap:.2e})"
        );
    }
    let y = st.y;

    let (p, mut dy, alpha) = unpack(&c, &y);
    // α's optimum is zero whenever A is already certified by this P
    if let Some(zero_ok) = certifies_without_perturbation(&p, a_r, opts.margin) {
        if zero_ok {
            dy.fill(0.0);
        }
    }
    let pchol = nalgebra::Cholesky::new(symmetrized(&p))
        .ok_or_else(|| Error::Numerical("Lyapunov certificate P is not positive definite".into()))?;
    let delta_a = pchol.solve(&dy);
    let a_stab = a_r + &delta_a;
    let rho_after = dense_spectral_radius(&a_stab);
    if !(rho_after < 1.0) {
        return Err(Error::Numerical(format!(
            "stabilized matrix still has spectral radius {rho_after:.9} (before: {rho_before:.9})"
        )));
    }
    Ok(StabilizationResult {
        delta_norm2: norm2(&delta_a),
        delta_a,
        a_stab,
        p,
        alpha: if dy.iter().all(|&v| v == 0.0) { 0.0 } else { alpha },
        rho_before,
        rho_after,
        iterations: iters,
        primal_residual: rp_norm,
        gap,
        merit_history: history,
    })
}

/// Whether `[[P, (PA)ᵀ], [PA, P]] ⪰ εI` holds, i.e. `ΔY = 0` is feasible.
fn certifies_without_perturbation(p: &DMatrix<f64>, a: &DMatrix<f64>, margin: f64) -> Option<bool> {
    let n = p.nrows();
    let pa = p * a;
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(p);
    b.view_mut((n, n), (n, n)).copy_from(p);
    b.view_mut((n, 0), (n, n)).copy_from(&pa);
    b.view_mut((0, n), (n, n)).copy_from(&pa.transpose());
    for i in 0..2 * n {
        b[(i, i)] -= margin;
    }
    let (vals, _) = sym_eigen_desc(&symmetrized(&b));
    vals.last().map(|&l| l > 0.0)
}

/// Writes the SDP for `a_r` in SDPA sparse format (`minimize cᵀy` subject to
/// `Σ F_i y_i − F_0 ⪰ 0`), variables ordered `vech(P)`, `vec(ΔY)` row-major, `α`.
pub fn write_sdpa<W: Write>(a_r: &DMatrix<f64>, margin: f64, mut w: W) -> std::io::Result<()> {
    let n = a_r.nrows();
    let c = Coords::new(n);
    writeln!(w, "\"stabilization SDP, n_r = {n}, margin = {margin:e}")?;
    writeln!(w, "{} = mDIM", c.dim())?;
    writeln!(w, "3 = nBLOCK")?;
    writeln!(w, "{} {} {} = bLOCKsTRUCT", n, 2 * n, 2 * n)?;
    let cv: Vec<String> = (0..c.dim()).map(|i| if i == c.alpha() { "1".into() } else { "0".into() }).collect();
    writeln!(w, "{}", cv.join(" "))?;
    let f0 = f0_blocks(n, margin);
    for (k, b) in f0.iter().enumerate() {
        for i in 0..b.nrows() {
            for j in i..b.ncols() {
                if b[(i, j)] != 0.0 {
                    writeln!(w, "0 {} {} {} {:?}", k + 1, i + 1, j + 1, b[(i, j)])?;
                }
            }
        }
    }
    for idx in 0..c.dim() {
        let mut e = DVector::zeros(c.dim());
        e[idx] = 1.0;
        let blocks = linear_blocks(&c, a_r, &e);
        for (k, b) in blocks.iter().enumerate() {
            for i in 0..b.nrows() {
                for j in i..b.ncols() {
                    if b[(i, j)] != 0.0 {
                        writeln!(w, "{} {} {} {} {:?}", idx + 1, k + 1, i + 1, j + 1, b[(i, j)])?;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_s_to_x() {
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 3.0]);
        let w = nt_scaling(&x, &s).unwrap();
        assert!((&w * &s * &w - &x).norm() < 1e-12);
    }

    #[test]
    fn schur_matches_definition() {
        let n = 2;
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.3, -0.2, 1.1]);
        let c = Coords::new(n);
        let bl = Blocks::new(&c);
        let w = [
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7]),
            DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 }),
            DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.05 * (i + j) as f64 }),
        ];
        let m = schur(&c, &bl, &a, &w);
        let basis = |i: usize| {
            let mut e = DVector::zeros(c.dim());
            e[i] = 1.0;
            linear_blocks(&c, &a, &e)
        };
        for i in 0..c.dim() {
            for j in 0..c.dim() {
                let (fi, fj) = (basis(i), basis(j));
                let direct: f64 = (0..3).map(|k| (&fi[k] * &w[k] * &fj[k] * &w[k]).trace()).sum();
                assert!((m[(i, j)] - direct).abs() < 1e-12, "({i},{j}) {} vs {direct}", m[(i, j)]);
            }
        }
        // adjoint consistency: ⟨𝓕(e_i), X⟩ = 𝓕*(X)_i
        let adj = adjoint(&c, &bl, &a, &w);
        for i in 0..c.dim() {
            let fi = basis(i);
            let direct: f64 = (0..3).map(|k| fi[k].dot(&w[k])).sum();
            assert!((adj[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_distance_to_boundary() {
        let r = stabilize_posterior(&DMatrix::from_element(1, 1, 1.1)).unwrap();
        let da = r.delta_a[(0, 0)];
        assert!(r.rho_after < 1.0);
        assert!(da.abs() >= 0.1 && da.abs() <= 0.11, "Δa = {da}");
    }

    #[test]
    fn stable_input_needs_no_perturbation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.5]);
        let r = stabilize_posterior(&a).unwrap();
        assert!(r.delta_norm2 <= 1e-6, "{}", r.delta_norm2);
    }
}
