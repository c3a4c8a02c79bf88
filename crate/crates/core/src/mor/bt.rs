use nalgebra::DMatrix;

use super::{MorOptions, Method, OrderSelection, ReducedModel, SpectrumKind, SpectrumReport};
use crate::error::{Error, Result};
use crate::gramians::gramians;
use crate::linalg::{psd_factor, svd_sorted};
use crate::wqss::LtiSystem;

/// Balanced truncation by the square-root method: with `W_C = L_C L_Cᵀ`,
/// `W_O = L_O L_Oᵀ` and `L_Oᵀ L_C = U Σ Vᵀ`, the projections are
/// `T_r = L_C V_r Σ_r^{-1/2}` and `S_r = Σ_r^{-1/2} U_rᵀ L_Oᵀ`. The
/// singular values are the Hankel singular values, i.e. `√λ(W_O W_C)`.
pub fn reduce_bt(sys: &LtiSystem, order: OrderSelection, opts: &MorOptions) -> Result<(ReducedModel, SpectrumReport)> {
    let n = sys.a.nrows();
    let g = gramians(sys, opts.dense_threshold)?;
    let tol = n as f64 * f64::EPSILON;
    let lc = psd_factor(&g.wc, tol)?;
    let lo = psd_factor(&g.wo, tol)?;
    let (u, sigma, v) = svd_sorted(&(lo.transpose() * &lc))?;
    let spectrum = SpectrumReport::new(SpectrumKind::Hankel, sigma.clone());

    let n_r = spectrum.select(order)?;
    if n_r > n {
        return Err(Error::Config(format!("requested n_r = {n_r} exceeds n_x = {n}")));
    }
    let rank = sigma.iter().take_while(|&&s| s > 1e-14 * sigma[0]).count();
    if n_r > rank {
        return Err(Error::Numerical(format!(
            "requested n_r = {n_r} but the balanced realization has numerical rank {rank}"
        )));
    }
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n_r,
        sigma[..n_r].iter().map(|s| 1.0 / s.sqrt()),
    ));
    let t = &lc * v.columns(0, n_r) * &scale;
    let s = &scale * u.columns(0, n_r).transpose() * lo.transpose();
    let energy = spectrum.energy(n_r);
    let rm = ReducedModel::project(sys, t, s, Method::Bt, None, energy)?;
    Ok((rm, spectrum))
}
