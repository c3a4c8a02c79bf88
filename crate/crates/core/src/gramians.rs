//! Controllability and observability Gramians.
//!
//! Exact Gramians solve `W − A W Aᵀ = Q` by Smith doubling; the m-step
//! versions come from impulse-response snapshots.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, SparseMatrix};
use crate::wqss::LtiSystem;

/// Largest `n_x` for which dense Gramians are attempted.
pub const DEFAULT_DENSE_THRESHOLD: usize = 3000;

/// Default cap, in bytes, on any single dense snapshot matrix.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

const MAX_DOUBLINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianMethod {
    Lyapunov,
    FiniteSum { m: usize },
}

#[derive(Debug, Clone)]
pub struct GramianPair {
    pub wc: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub method: GramianMethod,
}

/// Solves the Stein equation `W − A W Aᵀ = Q` with the doubling iteration
/// `W ← W + A_j W A_jᵀ`, `A_{j+1} = A_j²`.
pub fn solve_dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if asymmetry(q) > 1e-10 {
        return Err(Error::Numerical(format!("Q is not symmetric (relative asymmetry {:.2e})", asymmetry(q))));
    }
    let mut w = q.clone();
    let mut ak = a.clone();
    let mut tmp = DMatrix::zeros(n, n);
    let mut term = DMatrix::zeros(n, n);
    for _ in 0..MAX_DOUBLINGS {
        tmp.gemm(1.0, &ak, &w, 0.0);
        term.gemm(1.0, &tmp, &ak.transpose(), 0.0);
        let tn = term.norm();
        w += &term;
        if !tn.is_finite() {
            break;
        }
        if tn <= f64::EPSILON * w.norm() {
            let w = (&w + w.transpose()) * 0.5;
            return Ok(w);
        }
        tmp.gemm(1.0, &ak, &ak, 0.0);
        std::mem::swap(&mut ak, &mut tmp);
    }
    Err(Error::Numerical(format!(
        "Smith iteration did not converge in {MAX_DOUBLINGS} doublings; the spectral radius of A is at or above 1"
    )))
}

/// Exact Gramians of a system, refusing sizes above `dense_threshold`.
pub fn gramians(sys: &LtiSystem, dense_threshold: usize) -> Result<GramianPair> {
    let n = sys.a.nrows();
    if n > dense_threshold {
        return Err(Error::Intractable(format!(
            "exact Gramians need dense n_x x n_x matrices; n_x = {n} exceeds the dense threshold {dense_threshold}"
        )));
    }
    let a = sys.a.to_dense();
    let c = sys.c.to_dense();
    let (wc, wo) = rayon::join(
        || solve_dlyap(&a, &(&sys.b * sys.b.transpose())),
        || solve_dlyap(&a.transpose(), &(c.transpose() * &c)),
    );
    Ok(GramianPair {
        wc: wc?,
        wo: wo?,
        method: GramianMethod::Lyapunov,
    })
}

fn check_budget(rows: usize, cols: usize, budget: usize) -> Result<()> {
    let bytes = rows.saturating_mul(cols).saturating_mul(8);
    if bytes > budget {
        return Err(Error::Intractable(format!(
            "a {rows}x{cols} snapshot matrix needs {:.1} GiB, above the {:.1} GiB budget",
            bytes as f64 / (1u64 << 30) as f64,
            budget as f64 / (1u64 << 30) as f64
        )));
    }
    Ok(())
}

/// Impulse-response snapshots `[B, AB, …, A^{m−1}B]`, ordered input-major:
/// column `i·m + k` holds `A^k b_i`.
pub fn impulse_snapshots(a: &SparseMatrix, b: &DMatrix<f64>, m: usize, budget: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_budget(n, m * b.ncols(), budget)?;
    let mut x = DMatrix::zeros(n, m * b.ncols());
    let mut blocks: Vec<_> = x.as_mut_slice().chunks_mut(n * m.max(1)).collect();
    blocks.par_iter_mut().enumerate().for_each(|(i, block)| {
        let mut cur: Vec<f64> = b.column(i).iter().copied().collect();
        let mut next = vec![0.0; n];
        for k in 0..m {
            block[k * n..(k + 1) * n].copy_from_slice(&cur);
            if k + 1 < m {
                a.mul_vec_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
    });
    Ok(x)
}

/// m-step controllability Gramian `W_Cm = X_m X_mᵀ` together with `X_m`.
pub fn mstep_ctrl_gramian(sys: &LtiSystem, m: usize, budget: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m == 0 {
        return Err(Error::Config("snapshot length m must be at least 1".into()));
    }
    let n = sys.a.nrows();
    check_budget(n, n, budget)?;
    let x = impulse_snapshots(&sys.a, &sys.b, m, budget)?;
    let w = &x * x.transpose();
    Ok((w, x))
}
