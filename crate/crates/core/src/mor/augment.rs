use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mor::{ReducedModel, SpectrumReport};
use crate::wqss::LtiSystem;

/// Folds a nonzero initial state into an extra input channel:
/// `B̃ = [B, A x0]`, `D̃ = [D, C x0]`.
///
/// Driving the new channel with a unit impulse at `k = 0` (and zero
/// afterwards) from a zero state reproduces the original trajectory.
pub fn augment_nonzero_ic(sys: &LtiSystem, x0: &DVector<f64>) -> Result<LtiSystem> {
    let n = sys.a.nrows();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    let ax0 = sys.a.mul_vec(x0);
    let cx0 = sys.c.mul_vec(x0);
    let nu = sys.b.ncols();
    let b = sys.b.clone().insert_column(nu, 0.0);
    let mut b = b;
    b.column_mut(nu).copy_from(&ax0);
    let mut d = sys.d.clone().insert_column(nu, 0.0);
    d.column_mut(nu).copy_from(&cx0);
    let mut out = LtiSystem::new(sys.a.clone(), b, sys.c.clone(), d, sys.dt)?;
    out.layout = sys.layout.clone();
    Ok(out)
}

/// Appends the impulse channel `[1, 0, 0, …]` to an input sequence.
pub fn augmented_input(u: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let nu = u.nrows();
    let mut out = u.clone().insert_row(nu, 0.0);
    if out.ncols() > 0 {
        out[(nu, 0)] = 1.0;
    }
    out
}

/// Runs a reducer on the system with `x0` folded in as an input channel.
/// A zero (or absent) `x0` reduces the original system.
pub fn reduce_with_initial_state<F>(sys: &LtiSystem, x0: Option<&DVector<f64>>, reduce: F) -> Result<(ReducedModel, SpectrumReport)>
where
    F: FnOnce(&LtiSystem) -> Result<(ReducedModel, SpectrumReport)>,
{
    match x0 {
        Some(x) if x.iter().any(|&v| v != 0.0) => {
            let aug = augment_nonzero_ic(sys, x)?;
            let (mut rm, sp) = reduce(&aug)?;
            rm.augmented = true;
            Ok((rm, sp))
        }
        _ => reduce(sys),
    }
}
