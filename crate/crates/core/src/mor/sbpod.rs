use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::mbar::{mbar_settling_time, SettlingBound};
use super::{augment_nonzero_ic, reduce_bpod, MorOptions, Method, OrderSelection, ReducedModel, SpectrumReport, Stabilization};
use crate::error::{Error, Result};
use crate::stabilize::{stabilize_posterior, StabilizationResult};
use crate::wqss::{LtiSystem, LtvSystem, StateSpace};

/// Default factor applied to the snapshot-length lower bound.
pub const DEFAULT_SAFETY: f64 = 1.5;

/// Spectral radius at or above which posterior mode perturbs `A_r`.
const UNSTABLE_RHO: f64 = 1.0 - 1e-9;

/// How SBPOD guarantees a stable reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum SbpodMode {
    /// Choose `m = ⌈safety · max(m̲_travel, m̲_settling)⌉`. The travel bound
    /// needs the network, so callers pass it in when they have one.
    Priori { travel_steps: Option<usize>, safety: f64 },
    /// Use the given `m` and repair instability with the SDP.
    Posterior { m: usize },
}

impl SbpodMode {
    pub fn priori(travel_steps: Option<usize>) -> Self {
        SbpodMode::Priori {
            travel_steps,
            safety: DEFAULT_SAFETY,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SbpodAttempt {
    pub m: usize,
    pub n_r: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SbpodReport {
    pub travel_steps: Option<usize>,
    pub settling: Option<SettlingBound>,
    /// `max(travel, settling)` when computed.
    pub m_bar: Option<usize>,
    pub attempts: Vec<SbpodAttempt>,
    #[serde(skip)]
    pub stabilization: Option<StabilizationResult>,
    pub augmented: bool,
}

impl SbpodReport {
    pub fn m_used(&self) -> usize {
        self.attempts.last().map(|a| a.m).unwrap_or(0)
    }
}

/// Stability-preserving BPOD.
///
/// A nonzero `x0` is first folded into an extra impulse input channel.
/// In priori mode an unstable result at the chosen `m` is retried with `m`
/// doubled (twice), then handed to the SDP when `n_r` is small enough; the
/// returned model always has `ρ(A_r) < 1`.
pub fn reduce_sbpod(
    sys: &LtiSystem,
    order: OrderSelection,
    mode: SbpodMode,
    x0: Option<&DVector<f64>>,
    opts: &MorOptions,
) -> Result<(ReducedModel, SpectrumReport, SbpodReport)> {
    let augmented_sys;
    let (sys, augmented) = match x0 {
        Some(x0) if x0.iter().any(|&v| v != 0.0) => {
            augmented_sys = augment_nonzero_ic(sys, x0)?;
            (&augmented_sys, true)
        }
        Some(x0) if x0.len() != sys.a.nrows() => {
            return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.a.nrows())))
        }
        _ => (sys, false),
    };
    let mut report = SbpodReport {
        travel_steps: None,
        settling: None,
        m_bar: None,
        attempts: Vec::new(),
        stabilization: None,
        augmented,
    };

    let (mut rm, mut spectrum) = match mode {
        SbpodMode::Priori { travel_steps, safety } => {
            if !(safety >= 1.0) {
                return Err(Error::Config(format!("safety factor {safety} must be at least 1")));
            }
            let settling = mbar_settling_time(sys)?;
            let m_bar = travel_steps.unwrap_or(0).max(settling.steps);
            report.travel_steps = travel_steps;
            report.settling = Some(settling);
            report.m_bar = Some(m_bar);
            let mut m = ((m_bar as f64) * safety).ceil() as usize;
            let mut tries = 0;
            loop {
                let (rm, sp) = reduce_bpod(sys, m, order, opts)?;
                report.attempts.push(SbpodAttempt { m, n_r: rm.n_r(), rho: rm.rho });
                if rm.rho < 1.0 || tries == 2 {
                    break (rm, sp);
                }
                log::warn!("SBPOD: m = {m} gave rho(A_r) = {:.9}; retrying with m = {}", rm.rho, 2 * m);
                m *= 2;
                tries += 1;
            }
        }
        SbpodMode::Posterior { m } => {
            let (rm, sp) = reduce_bpod(sys, m, order, opts)?;
            report.attempts.push(SbpodAttempt { m, n_r: rm.n_r(), rho: rm.rho });
            (rm, sp)
        }
    };
    rm.method = Method::Sbpod;
    rm.augmented = augmented;
    let needs_sdp = match mode {
        SbpodMode::Priori { .. } => !(rm.rho < 1.0),
        SbpodMode::Posterior { .. } => !(rm.rho < UNSTABLE_RHO),
    };
    if needs_sdp {
        if rm.n_r() > opts.sdp_max_order {
            return Err(Error::Numerical(format!(
                "reduced model is unstable (rho = {:.9}) and n_r = {} exceeds the SDP limit of {}",
                rm.rho,
                rm.n_r(),
                opts.sdp_max_order
            )));
        }
        let res = stabilize_posterior(&rm.a)?;
        rm.apply_perturbation(res.delta_a.clone());
        report.stabilization = Some(res);
    } else if matches!(mode, SbpodMode::Priori { .. }) {
        rm.stabilized_by = Stabilization::Priori;
    }
    if !(rm.rho < 1.0) {
        return Err(Error::Numerical(format!("SBPOD result has rho(A_r) = {:.12}", rm.rho)));
    }
    spectrum.values.shrink_to_fit();
    Ok((rm, spectrum, report))
}

/// Reduced piecewise-LTI model. Each piece keeps its own projections; when
/// the active piece changes from `i` to `j` the reduced state is mapped by
/// `S_j T_i`.
#[derive(Debug, Clone)]
pub struct ReducedLtv {
    pub pieces: Vec<ReducedModel>,
    pub steps: Vec<usize>,
    /// `transition[i] = S_{i+1} T_i` (cyclic).
    pub transition: Vec<DMatrix<f64>>,
}

impl ReducedLtv {
    fn period(&self) -> usize {
        self.steps.iter().sum()
    }

    /// Piece index at sample `k` and whether `k` is its last sample.
    fn locate(&self, k: usize) -> (usize, bool) {
        let mut r = k % self.period();
        for (i, &s) in self.steps.iter().enumerate() {
            if r < s {
                return (i, r + 1 == s);
            }
            r -= s;
        }
        unreachable!()
    }

    pub fn n_r(&self) -> usize {
        self.pieces[0].n_r()
    }
}

impl StateSpace for ReducedLtv {
    fn n_x(&self) -> usize {
        self.n_r()
    }
    fn n_u(&self) -> usize {
        self.pieces[0].b.ncols()
    }
    fn n_y(&self) -> usize {
        self.pieces[0].c.nrows()
    }
    fn dt(&self) -> f64 {
        self.pieces[0].dt
    }
    fn step(&self, k: usize, x: &[f64], u: &[f64], x_next: &mut [f64]) {
        let (i, last) = self.locate(k);
        self.pieces[i].step(k, x, u, x_next);
        if last && self.pieces.len() > 1 {
            let v = DVector::from_column_slice(x_next);
            let mapped = &self.transition[i] * v;
            x_next.copy_from_slice(mapped.as_slice());
        }
    }
    fn output(&self, k: usize, x: &[f64], u: &[f64], y: &mut [f64]) {
        let (i, _) = self.locate(k);
        self.pieces[i].output(k, x, u, y)
    }
}

/// SBPOD on every piece with a shared reduced order (the largest any piece
/// selects). Pieces whose Hankel rank falls short are zero-padded.
pub fn reduce_sbpod_ltv(
    ltv: &LtvSystem,
    order: OrderSelection,
    mode: SbpodMode,
    x0: Option<&DVector<f64>>,
    opts: &MorOptions,
) -> Result<(ReducedLtv, Vec<SbpodReport>)> {
    let first: Vec<_> = ltv
        .pieces()
        .iter()
        .map(|p| reduce_sbpod(&p.system, order, mode, x0, opts))
        .collect::<Result<_>>()?;
    let shared = first.iter().map(|(rm, _, _)| rm.n_r()).max().unwrap_or(0);
    let mut pieces = Vec::new();
    let mut reports = Vec::new();
    for (p, (rm, _, rep)) in ltv.pieces().iter().zip(first) {
        let (mut rm, rep) = if rm.n_r() < shared {
            let (rm2, _, rep2) = reduce_sbpod(&p.system, OrderSelection::Fixed(shared), mode, x0, opts)?;
            (rm2, rep2)
        } else {
            (rm, rep)
        };
        if rm.n_r() < shared {
            pad(&mut rm, shared);
        }
        pieces.push(rm);
        reports.push(rep);
    }
    let k = pieces.len();
    let transition = (0..k).map(|i| &pieces[(i + 1) % k].s * &pieces[i].t).collect();
    Ok((
        ReducedLtv {
            pieces,
            steps: ltv.pieces().iter().map(|p| p.steps).collect(),
            transition,
        },
        reports,
    ))
}

fn pad(rm: &mut ReducedModel, n: usize) {
    let r = rm.n_r();
    let grow = |m: &DMatrix<f64>, rows: usize, cols: usize| {
        let mut out = DMatrix::zeros(rows, cols);
        out.view_mut((0, 0), m.shape()).copy_from(m);
        out
    };
    rm.a = grow(&rm.a, n, n);
    rm.b = grow(&rm.b, n, rm.b.ncols());
    rm.c = grow(&rm.c, rm.c.nrows(), n);
    rm.t = grow(&rm.t, rm.t.nrows(), n);
    rm.s = grow(&rm.s, n, rm.s.ncols());
    if let Some(da) = rm.delta_a.as_mut() {
        *da = grow(da, n, n);
    }
    log::warn!("LTV SBPOD: piece padded from n_r = {r} to {n}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_posterior_is_untouched() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.6, 0.2, 0.0, 0.0, 0.7]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.5, 0.2]);
        let c = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let sys = LtiSystem::from_dense(&a, &b, &c, &DMatrix::zeros(1, 1), 1.0).unwrap();
        let (rm, _, rep) =
            reduce_sbpod(&sys, OrderSelection::Fixed(2), SbpodMode::Posterior { m: 50 }, None, &MorOptions::default())
                .unwrap();
        assert!(rep.stabilization.is_none());
        assert!(rm.delta_a.is_none());
        assert_eq!(rm.stabilized_by, Stabilization::None);
        assert!(rm.rho < 1.0);
    }
}
