//! Projection-based model order reduction.
//!
//! Every method produces a [`ReducedModel`] holding the reduced tuple and
//! the two projections `T_r` (n_x × n_r) and `S_r` (n_r × n_x), so that
//! `A_r = S_r A T_r (+ ΔA_r)`, `B_r = S_r B`, `C_r = C T_r`, `D_r = D`.

mod augment;
mod bpod;
mod bt;
pub mod io;
mod mbar;
mod pod;
mod sbpod;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramians::{DEFAULT_DENSE_THRESHOLD, DEFAULT_MEMORY_BUDGET};
use crate::linalg::dense_spectral_radius;
use crate::wqss::{LtiSystem, StateSpace};

pub use augment::{augment_nonzero_ic, augmented_input, reduce_with_initial_state};
pub use bpod::{hankel_blocks, markov_parameters, reduce_bpod};
pub use bt::reduce_bt;
pub use mbar::{mbar_settling_time, mbar_travel_time, mbar_travel_time_with_initial_state, SettlingBound, TravelBound};
pub use pod::reduce_pod;
pub use sbpod::{reduce_sbpod, reduce_sbpod_ltv, ReducedLtv, SbpodAttempt, SbpodMode, SbpodReport, DEFAULT_SAFETY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bt,
    Pod,
    Bpod,
    Sbpod,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bt => "BT",
            Method::Pod => "POD",
            Method::Bpod => "BPOD",
            Method::Sbpod => "SBPOD",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" => Ok(Method::Bt),
            "pod" => Ok(Method::Pod),
            "bpod" => Ok(Method::Bpod),
            "sbpod" => Ok(Method::Sbpod),
            _ => Err(Error::Config(format!("unknown reduction method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stabilization {
    None,
    Posterior,
    Priori,
}

/// How the reduced order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderSelection {
    Fixed(usize),
    /// Smallest `n_r` whose cumulative spectrum fraction reaches the level.
    Energy(f64),
}

impl Default for OrderSelection {
    fn default() -> Self {
        OrderSelection::Energy(0.9999)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Hankel,
    PodEigen,
}

/// Descending spectrum driving order selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub kind: SpectrumKind,
    pub values: Vec<f64>,
}

impl SpectrumReport {
    pub fn new(kind: SpectrumKind, mut values: Vec<f64>) -> Self {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
        values.sort_by(|a, b| b.total_cmp(a));
        SpectrumReport { kind, values }
    }

    /// Cumulative fraction `Σ_{j≤n} v_j / Σ v_i`.
    pub fn energy(&self, n: usize) -> f64 {
        let total: f64 = self.values.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        let part: f64 = self.values.iter().take(n).sum();
        (part / total).min(1.0)
    }

    pub fn select(&self, sel: OrderSelection) -> Result<usize> {
        match sel {
            OrderSelection::Fixed(n) => {
                if n == 0 {
                    return Err(Error::Config("reduced order must be at least 1".into()));
                }
                Ok(n)
            }
            OrderSelection::Energy(level) => {
                if !(level > 0.0 && level <= 1.0) {
                    return Err(Error::Config(format!("energy level {level} is outside (0, 1]")));
                }
                let total: f64 = self.values.iter().sum();
                let mut acc = 0.0;
                for (i, v) in self.values.iter().enumerate() {
                    acc += v;
                    if acc >= level * total {
                        return Ok(i + 1);
                    }
                }
                Ok(self.values.len().max(1))
            }
        }
    }

    /// CSV with columns `index,value,energy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value,energy\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{:e},{:.12}\n", i + 1, v, self.energy(i + 1)));
        }
        s
    }
}

/// Resource limits shared by the reduction methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorOptions {
    /// Largest `n_x` for dense Gramians and dense `n_x × n_x` work.
    pub dense_threshold: usize,
    /// Bytes allowed for one dense snapshot matrix.
    pub memory_budget: usize,
    /// Largest reduced order handed to the posterior SDP.
    pub sdp_max_order: usize,
}

impl Default for MorOptions {
    fn default() -> Self {
        MorOptions {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            sdp_max_order: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
    /// `n_x × n_r`.
    pub t: DMatrix<f64>,
    /// `n_r × n_x`.
    pub s: DMatrix<f64>,
    /// Perturbation added by posterior stabilization.
    pub delta_a: Option<DMatrix<f64>>,
    pub method: Method,
    pub m: Option<usize>,
    pub energy: f64,
    pub stabilized_by: Stabilization,
    /// Spectral radius of `A_r`.
    pub rho: f64,
    /// True when the last input column carries the initial-condition impulse.
    pub augmented: bool,
}

impl ReducedModel {
    /// Projects `sys` with the given bases.
    pub fn project(
        sys: &LtiSystem,
        t: DMatrix<f64>,
        s: DMatrix<f64>,
        method: Method,
        m: Option<usize>,
        energy: f64,
    ) -> Result<Self> {
        let n = sys.a.nrows();
        if t.nrows() != n || s.ncols() != n || t.ncols() != s.nrows() {
            return Err(Error::Dimension(format!(
                "projections T {}x{} and S {}x{} do not fit n_x = {n}",
                t.nrows(),
                t.ncols(),
                s.nrows(),
                s.ncols()
            )));
        }
        let at = sys.a.mul_dense(&t);
        let a = &s * at;
        let b = &s * &sys.b;
        let c = sys.c.mul_dense(&t);
        let rho = dense_spectral_radius(&a);
        Ok(ReducedModel {
            a,
            b,
            c,
            d: sys.d.clone(),
            dt: sys.dt,
            t,
            s,
            delta_a: None,
            method,
            m,
            energy,
            stabilized_by: Stabilization::None,
            rho,
            augmented: false,
        })
    }

    pub fn n_r(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.t.nrows()
    }

    /// Recomputes the reduced tuple from the stored projections.
    pub fn reconstruct(&self, sys: &LtiSystem) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut a = &self.s * sys.a.mul_dense(&self.t);
        if let Some(da) = &self.delta_a {
            a += da;
        }
        (a, &self.s * &sys.b, sys.c.mul_dense(&self.t), sys.d.clone())
    }

    /// Maps a full state into reduced coordinates, `x_r = S_r x`.
    pub fn reduce_state(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.s * x
    }

    /// Lifts a reduced state back, `x ≈ T_r x_r`.
    pub fn lift_state(&self, xr: &DVector<f64>) -> DVector<f64> {
        &self.t * xr
    }

    /// Applies a posterior perturbation and refreshes `ρ(A_r)`.
    pub fn apply_perturbation(&mut self, delta: DMatrix<f64>) {
        self.a += &delta;
        self.delta_a = Some(match self.delta_a.take() {
            Some(d) => d + delta,
            None => delta,
        });
        self.rho = dense_spectral_radius(&self.a);
        self.stabilized_by = Stabilization::Posterior;
    }
}

impl StateSpace for ReducedModel {
    fn n_x(&self) -> usize {
        self.a.nrows()
    }
    fn n_u(&self) -> usize {
        self.b.ncols()
    }
    fn n_y(&self) -> usize {
        self.c.nrows()
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, _k: usize, x: &[f64], u: &[f64], x_next: &mut [f64]) {
        gemv_into(&self.a, x, x_next, 0.0);
        gemv_into(&self.b, u, x_next, 1.0);
    }
    fn output(&self, _k: usize, x: &[f64], u: &[f64], y: &mut [f64]) {
        gemv_into(&self.c, x, y, 0.0);
        gemv_into(&self.d, u, y, 1.0);
    }
}

fn gemv_into(m: &DMatrix<f64>, x: &[f64], out: &mut [f64], beta: f64) {
    use nalgebra::{DVectorView, DVectorViewMut};
    let xv = DVectorView::from_slice(x, x.len());
    let n = out.len();
    let mut ov = DVectorViewMut::from_slice(out, n);
    ov.gemv(1.0, m, &xv, beta);
}
