//! Full-versus-reduced validation: step experiments, RMSE and reports.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenvalue, eigenvalues, EigOptions, SparseMatrix};
use crate::mor::{augmented_input, ReducedLtv, ReducedModel};
use crate::wqss::{simulate, step_input, StateSpace};

/// Largest eigenvalue magnitude of a dense matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("spectral radius of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest eigenvalue magnitude of a sparse matrix by block subspace iteration.
pub fn spectral_radius_sparse(a: &SparseMatrix) -> Result<f64> {
    Ok(dominant_eigenvalue(a, &EigOptions::default())?.norm())
}

/// `sqrt((1/K) Σ_k ‖y(k) − ŷ(k)‖²)` over the columns of two `n_y × K` records.
pub fn rmse(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    if y.shape() != yhat.shape() {
        return Err(Error::Dimension(format!(
            "output records are {}x{} and {}x{}",
            y.nrows(),
            y.ncols(),
            yhat.nrows(),
            yhat.ncols()
        )));
    }
    if y.ncols() == 0 {
        return Err(Error::Dimension("empty output record".into()));
    }
    Ok(((y - yhat).norm_squared() / y.ncols() as f64).sqrt())
}

/// Reduced models that can stand in for a full one in an experiment.
pub trait Reduced: StateSpace {
    /// Whether the last input channel is the initial-condition impulse.
    fn augmented(&self) -> bool;
    /// Reduced initial state for a full initial state (non-augmented models).
    fn project_initial(&self, x0: &DVector<f64>) -> DVector<f64>;
    fn rho(&self) -> f64;
    fn label(&self) -> (String, Option<usize>);
}

impl Reduced for ReducedModel {
    fn augmented(&self) -> bool {
        self.augmented
    }
    fn project_initial(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.s * x0
    }
    fn rho(&self) -> f64 {
        self.rho
    }
    fn label(&self) -> (String, Option<usize>) {
        (self.method.to_string(), self.m)
    }
}

impl Reduced for ReducedLtv {
    fn augmented(&self) -> bool {
        self.pieces[0].augmented
    }
    fn project_initial(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.pieces[0].s * x0
    }
    fn rho(&self) -> f64 {
        self.pieces.iter().map(|p| p.rho).fold(0.0, f64::max)
    }
    fn label(&self) -> (String, Option<usize>) {
        (self.pieces[0].method.to_string(), self.pieces[0].m)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub assemble_s: f64,
    pub reduce_s: f64,
    pub sim_full_s: f64,
    pub sim_reduced_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub network: String,
    pub method: String,
    pub n_x: usize,
    pub n_r: usize,
    pub m: Option<usize>,
    pub x0_mode: String,
    pub rmse: f64,
    pub rmse_per_output: Vec<f64>,
    pub max_err: f64,
    pub rho_ar: f64,
    pub timings: Timings,
    #[serde(skip)]
    pub dt: f64,
    /// `y − ŷ`, `n_y × steps`.
    #[serde(skip)]
    pub error: DMatrix<f64>,
    #[serde(skip)]
    pub y_full: DMatrix<f64>,
    #[serde(skip)]
    pub y_reduced: DMatrix<f64>,
}

/// Applies the same constant input to both models and compares outputs.
///
/// With a nonzero `x0` the full model starts from `x0`; an augmented reduced
/// model receives the impulse channel from a zero state, any other reduced
/// model starts from `S_r x0`.
pub fn step_experiment<F, R>(full: &F, reduced: &R, amplitudes: &[f64], steps: usize, x0: Option<&DVector<f64>>) -> Result<ComparisonReport>
where
    F: StateSpace + ?Sized,
    R: Reduced + ?Sized,
{
    let n_u = full.n_u();
    if amplitudes.len() != n_u {
        return Err(Error::Dimension(format!("{} amplitudes for {n_u} inputs", amplitudes.len())));
    }
    if full.n_y() != reduced.n_y() {
        return Err(Error::Dimension(format!("full model has {} outputs, reduced {}", full.n_y(), reduced.n_y())));
    }
    let expected_ru = n_u + usize::from(reduced.augmented());
    if reduced.n_u() != expected_ru {
        return Err(Error::Dimension(format!(
            "reduced model has {} inputs, expected {expected_ru}",
            reduced.n_u()
        )));
    }
    let nonzero = x0.is_some_and(|x| x.iter().any(|&v| v != 0.0));
    let u = step_input(amplitudes, steps);

    let t0 = Instant::now();
    let full_run = simulate(full, &u, x0, steps, false)?;
    let sim_full_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let red_run = if reduced.augmented() {
        let ua = augmented_input(&u);
        if !nonzero {
            // a zero impulse channel: keep the extra column but drive nothing
            let mut ua = ua;
            ua.row_mut(n_u).fill(0.0);
            simulate(reduced, &ua, None, steps, false)?
        } else {
            simulate(reduced, &ua, None, steps, false)?
        }
    } else {
        let xr0 = match x0 {
            Some(x) if nonzero => Some(reduced.project_initial(x)),
            _ => None,
        };
        simulate(reduced, &u, xr0.as_ref(), steps, false)?
    };
    let sim_reduced_s = t0.elapsed().as_secs_f64();

    let error = &full_run.y - &red_run.y;
    let per_output = (0..error.nrows())
        .map(|i| (error.row(i).norm_squared() / steps as f64).sqrt())
        .collect();
    let (method, m) = reduced.label();
    Ok(ComparisonReport {
        network: String::new(),
        method,
        n_x: full.n_x(),
        n_r: reduced.n_x(),
        m,
        x0_mode: if nonzero { "nonzero".into() } else { "zero".into() },
        rmse: rmse(&full_run.y, &red_run.y)?,
        rmse_per_output: per_output,
        max_err: error.amax(),
        rho_ar: reduced.rho(),
        timings: Timings {
            sim_full_s,
            sim_reduced_s,
            ..Timings::default()
        },
        dt: full.dt(),
        error,
        y_full: full_run.y,
        y_reduced: red_run.y,
    })
}

pub const REPORT_HEADER: &str =
    "network,method,n_x,n_r,m,x0_mode,rmse,max_err,rho_Ar,t_assemble_s,t_reduce_s,t_sim_s";

impl ComparisonReport {
    /// One CSV row. Timing columns hold `NA` unless `timings` is set, so that
    /// repeated runs write identical files.
    pub fn csv_row(&self, timings: bool) -> String {
        let m = self.m.map(|m| m.to_string()).unwrap_or_else(|| "NA".into());
        let t = |v: f64| if timings { format!("{v:.6}") } else { "NA".into() };
        format!(
            "{},{},{},{},{},{},{:e},{:e},{:.12},{},{},{}",
            self.network,
            self.method,
            self.n_x,
            self.n_r,
            m,
            self.x0_mode,
            self.rmse,
            self.max_err,
            self.rho_ar,
            t(self.timings.assemble_s),
            t(self.timings.reduce_s),
            t(self.timings.sim_reduced_s)
        )
    }

    /// The matching row for the full model itself (zero error, its own
    /// simulation time).
    pub fn full_row(&self, rho_full: f64, timings: bool) -> String {
        let t = |v: f64| if timings { format!("{v:.6}") } else { "NA".into() };
        format!(
            "{},FULL,{},{},NA,{},0e0,0e0,{:.12},{},NA,{}",
            self.network,
            self.n_x,
            self.n_x,
            self.x0_mode,
            rho_full,
            t(self.timings.assemble_s),
            t(self.timings.sim_full_s)
        )
    }

    /// Time series `t, y_full..., y_reduced..., err...`.
    pub fn series_csv(&self) -> String {
        let ny = self.error.nrows();
        let mut s = String::from("t");
        for prefix in ["y", "yr", "e"] {
            for i in 0..ny {
                let _ = write!(s, ",{prefix}{}", i + 1);
            }
        }
        s.push('\n');
        for k in 0..self.error.ncols() {
            let _ = write!(s, "{}", k as f64 * self.dt);
            for mtx in [&self.y_full, &self.y_reduced, &self.error] {
                for i in 0..ny {
                    let _ = write!(s, ",{:e}", mtx[(i, k)]);
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wqss::LtiSystem;

    #[test]
    fn radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -0.8]));
        assert!((spectral_radius(&d).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rmse_definition() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let yh = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        assert!((rmse(&y, &yh).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn identity_reduction_has_zero_error() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.8]);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let sys = LtiSystem::from_dense(&a, &b, &c, &DMatrix::zeros(1, 1), 1.0).unwrap();
        let i = DMatrix::identity(2, 2);
        let rm = ReducedModel::project(&sys, i.clone(), i, crate::mor::Method::Bt, None, 1.0).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -0.2]);
        let r = step_experiment(&sys, &rm, &[2.0], 50, Some(&x0)).unwrap();
        assert_eq!(r.rmse, 0.0);
    }
}
