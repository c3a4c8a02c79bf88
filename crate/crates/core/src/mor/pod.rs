use nalgebra::DMatrix;

use super::{MorOptions, Method, OrderSelection, ReducedModel, SpectrumKind, SpectrumReport};
use crate::error::{Error, Result};
use crate::gramians::impulse_snapshots;
use crate::linalg::sym_eigen_desc;
use crate::wqss::LtiSystem;

/// Snapshot POD with Galerkin projection.
///
/// The eigenproblem is solved on whichever of `X_mᵀX_m` and `X_m X_mᵀ` is
/// smaller; both share their nonzero eigenvalues. `T_r` has orthonormal
/// columns and `S_r = T_rᵀ`, so nothing here preserves stability.
pub fn reduce_pod(
    sys: &LtiSystem,
    m: usize,
    order: OrderSelection,
    opts: &MorOptions,
) -> Result<(ReducedModel, SpectrumReport)> {
    if m == 0 {
        return Err(Error::Config("snapshot length m must be at least 1".into()));
    }
    let n = sys.a.nrows();
    let x = impulse_snapshots(&sys.a, &sys.b, m, opts.memory_budget)?;
    let cols = x.ncols();

    let (lambda, basis) = if cols <= n {
        let (lambda, u) = sym_eigen_desc(&(x.transpose() * &x));
        (lambda, Basis::Snapshot(u))
    } else {
        if n > opts.dense_threshold {
            return Err(Error::Intractable(format!(
                "POD with m·n_u = {cols} > n_x = {n} needs an n_x x n_x eigenproblem above the dense threshold"
            )));
        }
        let (lambda, v) = sym_eigen_desc(&(&x * x.transpose()));
        (lambda, Basis::State(v))
    };
    let spectrum = SpectrumReport::new(SpectrumKind::PodEigen, lambda.clone());
    let n_r = spectrum.select(order)?;
    if n_r > cols.min(n) {
        return Err(Error::Config(format!(
            "n_r = {n_r} exceeds the snapshot count m·n_u = {cols} (or n_x = {n})"
        )));
    }
    let lmax = lambda.first().copied().unwrap_or(0.0);
    let rank = lambda.iter().take_while(|&&l| l > 1e-12 * lmax).count();
    if rank < n_r {
        return Err(Error::Numerical(format!(
            "snapshot matrix has only {rank} eigenvalues above 1e-12·λ_max, fewer than n_r = {n_r}"
        )));
    }
    let t = match basis {
        Basis::Snapshot(u) => {
            let mut t = &x * u.columns(0, n_r);
            for (j, l) in lambda[..n_r].iter().enumerate() {
                t.column_mut(j).scale_mut(1.0 / l.sqrt());
            }
            t
        }
        Basis::State(v) => v.columns(0, n_r).into_owned(),
    };
    let s = t.transpose();
    let energy = spectrum.energy(n_r);
    let rm = ReducedModel::project(sys, t, s, Method::Pod, Some(m), energy)?;
    Ok((rm, spectrum))
}

enum Basis {
    Snapshot(DMatrix<f64>),
    State(DMatrix<f64>),
}
