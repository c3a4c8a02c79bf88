//! Small linear-algebra layer shared by every module: a CSR newtype with
//! allocation-free products and dense helpers. Matrices are nalgebra types
//! throughout; eigen- and singular-value decompositions go through faer,
//! whose nonsymmetric QR iteration does not stall on shift-like matrices.

use nalgebra::{Complex, DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Row-compressed sparse matrix used for the transport operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    csr: CsrMatrix<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut coo = CooMatrix::new(nrows, ncols);
        for (r, c, v) in triplets {
            if v != 0.0 {
                coo.push(r, c, v);
            }
        }
        Self { csr: CsrMatrix::from(&coo) }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let triplets = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j, m[(i, j)])));
        Self::from_triplets(m.nrows(), m.ncols(), triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    pub fn nrows(&self) -> usize {
        self.csr.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.csr.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    /// Fraction of structurally zero entries.
    pub fn sparsity(&self) -> f64 {
        let total = (self.nrows() * self.ncols()) as f64;
        if total == 0.0 {
            return 1.0;
        }
        1.0 - self.nnz() as f64 / total
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.csr.triplet_iter().map(|(r, c, v)| (r, c, *v))
    }

    /// Entries of one row as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let offsets = self.csr.row_offsets();
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        self.csr.col_indices()[lo..hi]
            .iter()
            .copied()
            .zip(self.csr.values()[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols());
        debug_assert_eq!(y.len(), self.nrows());
        let offsets = self.csr.row_offsets();
        let cols = self.csr.col_indices();
        let vals = self.csr.values();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *yi = acc;
        }
    }

    /// `y = Aᵀ x` without forming the transpose.
    pub fn tr_mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows());
        debug_assert_eq!(y.len(), self.ncols());
        y.iter_mut().for_each(|v| *v = 0.0);
        let offsets = self.csr.row_offsets();
        let cols = self.csr.col_indices();
        let vals = self.csr.values();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in offsets[i]..offsets[i + 1] {
                y[cols[k]] += vals[k] * xi;
            }
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows());
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Sparse times dense, column by column.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), m.ncols());
        for j in 0..m.ncols() {
            let src: Vec<f64> = m.column(j).iter().copied().collect();
            let mut dst = vec![0.0; self.nrows()];
            self.mul_vec_into(&src, &mut dst);
            out.column_mut(j).copy_from_slice(&dst);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self { csr: self.csr.transpose() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Symmetric PSD factor `W ≈ L Lᵀ` from the eigendecomposition, keeping the
/// eigenpairs above `rel_tol · λ_max`. Returns `L` with one column per kept
/// eigenvalue, in descending order.
///
/// Negative eigenvalues larger than `1e-8 · λ_max` in magnitude are rejected
/// as an indefinite input.
pub fn psd_factor(w: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let (vals, vecs) = sym_eigen_desc(&symmetrized(w));
    let lmax = vals.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let lmin = vals.last().copied().unwrap_or(0.0);
    if lmin < -1e-8 * lmax {
        return Err(Error::Numerical(format!(
            "matrix is indefinite: smallest eigenvalue {lmin:.3e} vs largest {lmax:.3e}"
        )));
    }
    let k = vals.iter().take_while(|&&l| l > rel_tol * lmax).count();
    let mut l = vecs.columns(0, k).into_owned();
    for (j, v) in vals[..k].iter().enumerate() {
        l.column_mut(j).scale_mut(v.sqrt());
    }
    Ok(l)
}

pub fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let f = to_faer(m);
    match f.self_adjoint_eigen(faer::Side::Lower) {
        Ok(e) => {
            let s = e.S().column_vector();
            let u = e.U();
            // faer sorts ascending
            let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
            let vecs = DMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
            (vals, vecs)
        }
        Err(_) => {
            let e = symmetrized(m).symmetric_eigen();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
            let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
            let vecs = DMatrix::from_fn(n, n, |i, j| e.eigenvectors[(i, order[j])]);
            (vals, vecs)
        }
    }
}

/// Thin SVD `M = U diag(σ) Vᵀ` with `σ` in descending order.
pub fn svd_sorted(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if m.is_empty() {
        return Ok((DMatrix::zeros(m.nrows(), 0), Vec::new(), DMatrix::zeros(m.ncols(), 0)));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((from_faer(svd.U()), sigma, from_faer(svd.V())))
}

/// All eigenvalues of a general real matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let ev = to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration did not converge: {e:?}")))?;
    Ok(ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match to_faer(m).singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => m.singular_values().iter().copied().fold(0.0, f64::max),
    }
}

/// Relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F` (zero for the zero matrix).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.norm();
    if n == 0.0 {
        0.0
    } else {
        (m - m.transpose()).norm() / n
    }
}

/// Spectral radius from the full dense eigenvalue computation. A failed
/// eigenvalue iteration reports `+∞` so callers treat the matrix as unstable.
pub fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    match eigenvalues(m) {
        Ok(ev) => ev.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Settings for [`dominant_eigenvalue`].
#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Subspace dimension.
    pub block: usize,
    /// Iteration cap; raised to `2 n` for larger matrices.
    pub max_iter: usize,
    /// Relative change of the dominant Ritz magnitude that counts as converged.
    pub tol: f64,
    /// Matrices up to this size go straight to the dense eigensolver, and
    /// matrices up to `dense_fallback` fall back to it on non-convergence.
    pub dense_direct: usize,
    pub dense_fallback: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            block: 12,
            max_iter: 6000,
            tol: 1e-9,
            dense_direct: 300,
            dense_fallback: 2500,
        }
    }
}

fn dense_dominant(m: &DMatrix<f64>) -> Result<Complex<f64>> {
    Ok(eigenvalues(m)?
        .into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)))
        .unwrap_or(Complex::new(0.0, 0.0)))
}

/// Residual `‖A Q y − λ Q y‖` of the Ritz pair for `λ`, with `y` the
/// (complex) eigenvector of the projected matrix `H = Qᵀ A Q`.
fn ritz_residual(h: &DMatrix<f64>, q: &DMatrix<f64>, aq: &DMatrix<f64>, lam: Complex<f64>) -> f64 {
    let p = h.nrows();
    let shifted = DMatrix::from_fn(p, p, |i, j| {
        Complex::new(h[(i, j)], 0.0) - if i == j { lam } else { Complex::new(0.0, 0.0) }
    });
    let svd = shifted.svd(false, true);
    let vt = match svd.v_t {
        Some(v) => v,
        None => return f64::INFINITY,
    };
    let k = (0..p)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(0);
    let y: Vec<Complex<f64>> = (0..p).map(|j| vt[(k, j)].conj()).collect();
    let yr = DVector::from_iterator(p, y.iter().map(|c| c.re));
    let yi = DVector::from_iterator(p, y.iter().map(|c| c.im));
    let (qr, qi) = (q * &yr, q * &yi);
    let (ar, ai) = (aq * &yr, aq * &yi);
    // (ar + i ai) − (λr + i λi)(qr + i qi)
    let rr = &ar - &qr * lam.re + &qi * lam.im;
    let ri = &ai - &qi * lam.re - &qr * lam.im;
    (rr.norm_squared() + ri.norm_squared()).sqrt()
}

/// Largest-magnitude eigenvalue of a sparse matrix by block subspace
/// iteration with Rayleigh–Ritz extraction, which also resolves complex
/// conjugate pairs. Small matrices use the dense eigensolver.
pub fn dominant_eigenvalue(a: &SparseMatrix, opts: &EigOptions) -> Result<Complex<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if n == 0 {
        return Ok(Complex::new(0.0, 0.0));
    }
    if n <= opts.dense_direct.max(opts.block) {
        return dense_dominant(&a.to_dense());
    }
    let p = opts.block;
    // deterministic, generic start block
    let mut q = DMatrix::from_fn(n, p, |i, j| ((i as f64 + 1.0) * (0.7548776662 + 0.31 * j as f64)).fract() - 0.5);
    q = q.qr().q();
    let mut z = DMatrix::zeros(n, p);
    let mut last = f64::NAN;
    let mut stable_checks = 0;
    // a transport transient lasts as long as the longest flow path, which is
    // bounded by n; the cap never cuts iteration short of that
    let max_iter = opts.max_iter.max(2 * n);
    let mut it = 0;
    while it < max_iter {
        for _ in 0..5 {
            for j in 0..p {
                let src = q.column(j).clone_owned();
                a.mul_vec_into(src.as_slice(), z.column_mut(j).as_mut_slice());
            }
            std::mem::swap(&mut q, &mut z);
            it += 1;
        }
        q = q.qr().q();
        let mut aq = DMatrix::zeros(n, p);
        for j in 0..p {
            let src = q.column(j).clone_owned();
            a.mul_vec_into(src.as_slice(), aq.column_mut(j).as_mut_slice());
        }
        let h = q.transpose() * &aq;
        if aq.norm() == 0.0 {
            return Ok(Complex::new(0.0, 0.0));
        }
        // non-normal transport chains put spurious Ritz values near the unit
        // circle; only converged pairs count
        let mut ritz = eigenvalues(&h)?;
        ritz.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
        let converged = ritz
            .iter()
            .copied()
            .find(|&l| l.norm() > 0.0 && ritz_residual(&h, &q, &aq, l) <= 1e-7 * l.norm());
        let Some(lam) = converged else {
            stable_checks = 0;
            last = f64::NAN;
            continue;
        };
        let mag = lam.norm();
        if (mag - last).abs() <= opts.tol * mag {
            stable_checks += 1;
            if stable_checks >= 2 {
                return Ok(lam);
            }
        } else {
            stable_checks = 0;
        }
        last = mag;
    }
    if n <= opts.dense_fallback {
        log::debug!("subspace iteration stalled at n = {n}; using the dense eigensolver");
        return dense_dominant(&a.to_dense());
    }
    Err(Error::Numerical(format!(
        "dominant eigenvalue did not converge in {max_iter} iterations (last estimate {last:.12})"
    )))
}
