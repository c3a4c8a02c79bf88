use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{MorOptions, Method, OrderSelection, ReducedModel, SpectrumKind, SpectrumReport};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, svd_sorted, SparseMatrix};
use crate::wqss::LtiSystem;

/// Snapshot columns are generated and consumed in blocks of this width.
const CHUNK: usize = 256;

/// Markov parameters `C A^k B` for `k < count`.
pub fn markov_parameters(sys: &LtiSystem, count: usize) -> Vec<DMatrix<f64>> {
    let (n, n_u, n_y) = (sys.a.nrows(), sys.b.ncols(), sys.c.nrows());
    let per_input: Vec<Vec<Vec<f64>>> = (0..n_u)
        .into_par_iter()
        .map(|j| {
            let mut x: Vec<f64> = sys.b.column(j).iter().copied().collect();
            let mut xn = vec![0.0; n];
            let mut y = vec![0.0; n_y];
            let mut out = Vec::with_capacity(count);
            for k in 0..count {
                sys.c.mul_vec_into(&x, &mut y);
                out.push(y.clone());
                if k + 1 < count {
                    sys.a.mul_vec_into(&x, &mut xn);
                    std::mem::swap(&mut x, &mut xn);
                }
            }
            out
        })
        .collect();
    (0..count)
        .map(|k| DMatrix::from_fn(n_y, n_u, |i, j| per_input[j][k][i]))
        .collect()
}

/// Block Hankel matrix `H_m = Y_mᵀ X_m` assembled from Markov parameters:
/// row `l·m + i`, column `k·m + j` holds `c_lᵀ A^{i+j} b_k`.
pub fn hankel_blocks(markov: &[DMatrix<f64>], m: usize) -> DMatrix<f64> {
    let (n_y, n_u) = markov[0].shape();
    DMatrix::from_fn(m * n_y, m * n_u, |r, c| {
        let (l, i) = (r / m, r % m);
        let (k, j) = (c / m, c % m);
        markov[i + j][(l, k)]
    })
}

/// Calls `f(channel, first_step, block)` for consecutive blocks of the
/// impulse snapshots `A^j v_channel`, `j < m`. Channels run in parallel and
/// each returns its own accumulator.
fn stream_snapshots<T, F>(a: &SparseMatrix, starts: &DMatrix<f64>, m: usize, init: impl Fn() -> T + Sync, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut T, usize, usize, &DMatrix<f64>) + Sync,
{
    let n = a.nrows();
    (0..starts.ncols())
        .into_par_iter()
        .map(|ch| {
            let mut acc = init();
            let mut x: Vec<f64> = starts.column(ch).iter().copied().collect();
            let mut xn = vec![0.0; n];
            let mut j0 = 0;
            while j0 < m {
                let w = CHUNK.min(m - j0);
                let mut block = DMatrix::zeros(n, w);
                for c in 0..w {
                    block.column_mut(c).copy_from_slice(&x);
                    a.mul_vec_into(&x, &mut xn);
                    std::mem::swap(&mut x, &mut xn);
                }
                f(&mut acc, ch, j0, &block);
                j0 += w;
            }
            acc
        })
        .collect()
}

/// `Σ_j snap_j ⊗ coef[row(ch, j)]`, i.e. the snapshot matrix times `coef`.
fn snapshots_times(a: &SparseMatrix, starts: &DMatrix<f64>, m: usize, coef: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = (a.nrows(), coef.ncols());
    let parts = stream_snapshots(
        a,
        starts,
        m,
        || DMatrix::zeros(n, r),
        |acc, ch, j0, block| {
            let rows = coef.rows(ch * m + j0, block.ncols());
            acc.gemm(1.0, block, &rows, 1.0);
        },
    );
    parts.into_iter().fold(DMatrix::zeros(n, r), |s, p| s + p)
}

/// `X Xᵀ` accumulated block by block.
fn snapshot_gram(a: &SparseMatrix, starts: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let parts = stream_snapshots(
        a,
        starts,
        m,
        || DMatrix::zeros(n, n),
        |acc, _, _, block| acc.gemm(1.0, block, &block.transpose(), 1.0),
    );
    parts.into_iter().fold(DMatrix::zeros(n, n), |s, p| s + p)
}

/// Balanced POD from `m`-step impulse snapshots of the primal and dual systems.
///
/// `H_m = Y_mᵀ X_m = U Σ Vᵀ`, `T_r = X_m V_r Σ_r^{-1/2}`,
/// `S_r = Σ_r^{-1/2} U_rᵀ Y_mᵀ`. Snapshots are never stored whole: either
/// `H_m` is built from Markov parameters and the projections are streamed,
/// or (when `n_x` is the smaller side) the SVD is taken on
/// `L_Yᵀ L_X` with `X Xᵀ = L_X L_Xᵀ`, `Y Yᵀ = L_Y L_Yᵀ`, which has the same
/// nonzero singular triplets.
pub fn reduce_bpod(
    sys: &LtiSystem,
    m: usize,
    order: OrderSelection,
    opts: &MorOptions,
) -> Result<(ReducedModel, SpectrumReport)> {
    if m == 0 {
        return Err(Error::Config("snapshot length m must be at least 1".into()));
    }
    let (n, n_u, n_y) = (sys.a.nrows(), sys.b.ncols(), sys.c.nrows());
    let (p, q) = ((m * n_y) as f64, (m * n_u) as f64);
    let nf = n as f64;
    let direct_cost = 4.0 * p * q * p.min(q);
    let factored_cost = if n <= opts.dense_threshold {
        2.0 * nf * nf * (p + q) + 40.0 * nf * nf * nf
    } else {
        f64::INFINITY
    };
    let h_bytes = p * q * 8.0;
    let at = sys.a.transpose();
    let ct = sys.c.to_dense().transpose();

    let direct = direct_cost <= factored_cost || !factored_cost.is_finite();
    if direct && h_bytes > opts.memory_budget as f64 {
        return Err(Error::Intractable(format!(
            "the {}x{} Hankel matrix exceeds the memory budget and n_x = {n} is above the dense threshold",
            m * n_y,
            m * n_u
        )));
    }

    let (u, sigma, v, route) = if direct {
        let h = hankel_blocks(&markov_parameters(sys, 2 * m - 1), m);
        let (u, s, v) = svd_sorted(&h)?;
        (u, s, v, Route::Direct)
    } else {
        let (gx, gy) = rayon::join(|| snapshot_gram(&sys.a, &sys.b, m), || snapshot_gram(&at, &ct, m));
        let tol = nf * f64::EPSILON;
        let lx = psd_factor(&gx, tol)?;
        let ly = psd_factor(&gy, tol)?;
        let (u, s, v) = svd_sorted(&(ly.transpose() * &lx))?;
        (u, s, v, Route::Factored { lx, ly })
    };
    let spectrum = SpectrumReport::new(SpectrumKind::Hankel, sigma.clone());
    let mut n_r = spectrum.select(order)?;
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let kept = sigma.iter().take_while(|&&s| s > 1e-12 * s1).count();
    if n_r > kept {
        log::warn!("BPOD: only {kept} Hankel singular values exceed 1e-12·σ_1; truncating n_r from {n_r} to {kept}");
        n_r = kept;
    }
    if n_r == 0 {
        return Err(Error::Numerical("the Hankel matrix is zero; nothing to reduce".into()));
    }
    let inv_sqrt: Vec<f64> = sigma[..n_r].iter().map(|s| 1.0 / s.sqrt()).collect();
    let scale_cols = |mut mtx: DMatrix<f64>| {
        for (j, f) in inv_sqrt.iter().enumerate() {
            mtx.column_mut(j).scale_mut(*f);
        }
        mtx
    };
    let (t, s) = match route {
        Route::Direct => {
            let t = scale_cols(snapshots_times(&sys.a, &sys.b, m, &v.columns(0, n_r).into_owned()));
            let st = scale_cols(snapshots_times(&at, &ct, m, &u.columns(0, n_r).into_owned()));
            (t, st.transpose())
        }
        Route::Factored { lx, ly } => {
            let t = scale_cols(&lx * v.columns(0, n_r));
            let st = scale_cols(&ly * u.columns(0, n_r));
            (t, st.transpose())
        }
    };
    let energy = spectrum.energy(n_r);
    let rm = ReducedModel::project(sys, t, s, Method::Bpod, Some(m), energy)?;
    Ok((rm, spectrum))
}

enum Route {
    Direct,
    Factored { lx: DMatrix<f64>, ly: DMatrix<f64> },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_io_with_one_step_is_coordinate_truncation() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.3, 0.1, 0.0, 0.0, 0.2]);
        let i3 = DMatrix::identity(3, 3);
        let sys = LtiSystem::from_dense(&a, &i3, &i3, &DMatrix::zeros(3, 3), 1.0).unwrap();
        let h = hankel_blocks(&markov_parameters(&sys, 1), 1);
        assert_eq!(h, i3);
        let (rm, spec) = reduce_bpod(&sys, 1, OrderSelection::Fixed(3), &MorOptions::default()).unwrap();
        assert_eq!(spec.values, vec![1.0, 1.0, 1.0]);
        assert!((&rm.s * &rm.t - &i3).norm() < 1e-12);
        assert!((&rm.a - rm.t.transpose() * &a * &rm.t).norm() < 1e-12);
    }
}
