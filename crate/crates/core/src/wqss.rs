//! Full-order water-quality state-space assembly and simulation.
//!
//! Each hydraulic period yields one LTI tuple `(A, B, C, D)`. Pipes are cut
//! into segments updated by a conservative Lax–Wendroff stencil, junctions
//! mix their inflows by flow weight, tanks are completely mixed and
//! reservoirs are memoryless sources driven only by boosters.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::netmodel::{courant_number, HydraulicPeriod, HydraulicScenario, LinkKind, Network, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRole {
    Junction { node: usize },
    Reservoir { node: usize },
    Tank { node: usize },
    /// `segment` counts from 1 at the declared `from` end.
    PipeSegment { link: usize, segment: usize },
    Pump { link: usize },
    Valve { link: usize },
}

/// Assignment of state indices: junctions, reservoirs, tanks, then pipe
/// segments, pumps and valves, each group in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    roles: Vec<StateRole>,
    node_state: Vec<usize>,
    link_states: Vec<Range<usize>>,
    n_nodes: usize,
    node_ids: Vec<String>,
    link_ids: Vec<String>,
}

impl StateLayout {
    pub fn new(net: &Network, default_segments: usize) -> Self {
        use crate::netmodel::{LinkKindTag as L, NodeKindTag as N};
        let mut roles = Vec::new();
        let mut node_state = vec![usize::MAX; net.nodes.len()];
        for tag in [N::Junction, N::Reservoir, N::Tank] {
            for (i, n) in net.nodes.iter().enumerate().filter(|(_, n)| n.tag() == tag) {
                node_state[i] = roles.len();
                roles.push(match n.kind {
                    NodeKind::Junction => StateRole::Junction { node: i },
                    NodeKind::Reservoir { .. } => StateRole::Reservoir { node: i },
                    NodeKind::Tank { .. } => StateRole::Tank { node: i },
                });
            }
        }
        let n_nodes = roles.len();
        let mut link_states = vec![0..0; net.links.len()];
        for tag in [L::Pipe, L::Pump, L::Valve] {
            for (i, l) in net.links.iter().enumerate().filter(|(_, l)| l.tag() == tag) {
                let start = roles.len();
                match l.kind {
                    LinkKind::Pipe { .. } => {
                        for s in 1..=l.segments(default_segments) {
                            roles.push(StateRole::PipeSegment { link: i, segment: s });
                        }
                    }
                    LinkKind::Pump => roles.push(StateRole::Pump { link: i }),
                    LinkKind::Valve => roles.push(StateRole::Valve { link: i }),
                }
                link_states[i] = start..roles.len();
            }
        }
        StateLayout {
            roles,
            node_state,
            link_states,
            n_nodes,
            node_ids: net.nodes.iter().map(|n| n.id.clone()).collect(),
            link_ids: net.links.iter().map(|l| l.id.clone()).collect(),
        }
    }

    pub fn n_x(&self) -> usize {
        self.roles.len()
    }

    /// `n_N`.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// `n_L`.
    pub fn n_links(&self) -> usize {
        self.roles.len() - self.n_nodes
    }

    pub fn role(&self, i: usize) -> StateRole {
        self.roles[i]
    }

    pub fn node_state(&self, node: usize) -> usize {
        self.node_state[node]
    }

    pub fn link_states(&self, link: usize) -> Range<usize> {
        self.link_states[link].clone()
    }

    pub fn node_state_by_id(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id).map(|i| self.node_state[i])
    }

    pub fn label(&self, i: usize) -> String {
        match self.roles[i] {
            StateRole::Junction { node } | StateRole::Reservoir { node } | StateRole::Tank { node } => {
                self.node_ids[node].clone()
            }
            StateRole::PipeSegment { link, segment } => format!("{}[{}]", self.link_ids[link], segment),
            StateRole::Pump { link } | StateRole::Valve { link } => self.link_ids[link].clone(),
        }
    }

    /// State vector from per-component concentrations. Entries for pipes
    /// fill every segment of that pipe; unnamed components default to `fill`.
    pub fn state_from_components<'a, I>(&self, fill: f64, values: I) -> Result<DVector<f64>>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut x = DVector::from_element(self.n_x(), fill);
        for (id, v) in values {
            if let Some(n) = self.node_ids.iter().position(|n| n == id) {
                x[self.node_state[n]] = v;
            } else if let Some(l) = self.link_ids.iter().position(|l| l == id) {
                for i in self.link_states(l) {
                    x[i] = v;
                }
            } else {
                return Err(Error::semantic("initial condition", id, "no such node or link"));
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub node: String,
    /// Multiplies the injected mass; 1.0 means `u` is mg injected per sample.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IoPlacement {
    pub boosters: Vec<Booster>,
    pub sensors: Vec<String>,
}

impl IoPlacement {
    pub fn new(boosters: &[(&str, f64)], sensors: &[&str]) -> Self {
        IoPlacement {
            boosters: boosters
                .iter()
                .map(|&(n, g)| Booster {
                    node: n.to_string(),
                    gain: g,
                })
                .collect(),
            sensors: sensors.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// `(booster index, sensor index)` pairs sharing a node.
    pub fn collocated(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, b) in self.boosters.iter().enumerate() {
            for (j, s) in self.sensors.iter().enumerate() {
                if &b.node == s {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn resolve(&self, net: &Network) -> Result<(Vec<usize>, Vec<usize>)> {
        let lookup = |id: &str, what: &'static str| {
            net.node_index(id).ok_or_else(|| {
                if net.link_index(id).is_some() {
                    Error::semantic(what, id, "placement inside a link is not supported; use a node")
                } else {
                    Error::semantic(what, id, "no such node")
                }
            })
        };
        let boosters = self
            .boosters
            .iter()
            .map(|b| {
                if !b.gain.is_finite() {
                    return Err(Error::semantic("booster", b.node.clone(), "gain must be finite"));
                }
                lookup(&b.node, "booster")
            })
            .collect::<Result<Vec<_>>>()?;
        let sensors = self.sensors.iter().map(|s| lookup(s, "sensor")).collect::<Result<Vec<_>>>()?;
        Ok((boosters, sensors))
    }
}

/// One discrete-time LTI tuple with sparse `A` and `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: SparseMatrix,
    pub b: DMatrix<f64>,
    pub c: SparseMatrix,
    pub d: DMatrix<f64>,
    pub dt: f64,
    pub layout: Option<Arc<StateLayout>>,
}

impl LtiSystem {
    pub fn new(a: SparseMatrix, b: DMatrix<f64>, c: SparseMatrix, d: DMatrix<f64>, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(LtiSystem {
            a,
            b,
            c,
            d,
            dt,
            layout: None,
        })
    }

    pub fn from_dense(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, dt: f64) -> Result<Self> {
        Self::new(SparseMatrix::from_dense(a), b.clone(), SparseMatrix::from_dense(c), d.clone(), dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtvPiece {
    pub system: LtiSystem,
    pub steps: usize,
}

/// Piecewise-constant sequence of LTI systems. Simulation past the last
/// piece wraps around to the first, so a daily scenario repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    pieces: Vec<LtvPiece>,
}

impl LtvSystem {
    pub fn new(pieces: Vec<LtvPiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::Dimension("an LTV system needs at least one piece".into()))?;
        let dims = (first.system.n_x(), first.system.n_u(), first.system.n_y());
        for p in &pieces {
            if (p.system.n_x(), p.system.n_u(), p.system.n_y()) != dims {
                return Err(Error::Dimension("LTV pieces disagree on (n_x, n_u, n_y)".into()));
            }
            if p.steps == 0 {
                return Err(Error::Dimension("LTV piece with zero steps".into()));
            }
        }
        Ok(LtvSystem { pieces })
    }

    pub fn pieces(&self) -> &[LtvPiece] {
        &self.pieces
    }

    pub fn period_steps(&self) -> usize {
        self.pieces.iter().map(|p| p.steps).sum()
    }

    /// Index of the piece active at sample `k`.
    pub fn piece_index(&self, k: usize) -> usize {
        let mut k = k % self.period_steps();
        for (i, p) in self.pieces.iter().enumerate() {
            if k < p.steps {
                return i;
            }
            k -= p.steps;
        }
        unreachable!()
    }

    pub fn first(&self) -> &LtiSystem {
        &self.pieces[0].system
    }

    pub fn layout(&self) -> Option<&Arc<StateLayout>> {
        self.first().layout.as_ref()
    }
}

/// Dense state-space tuple, used for reduced models.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

/// Common interface of everything that can be simulated.
pub trait StateSpace: Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn dt(&self) -> f64;
    /// `x_next = A(k) x + B(k) u`.
    fn step(&self, k: usize, x: &[f64], u: &[f64], x_next: &mut [f64]);
    /// `y = C(k) x + D(k) u`.
    fn output(&self, k: usize, x: &[f64], u: &[f64], y: &mut [f64]);
}

fn add_dense_mul(m: &DMatrix<f64>, u: &[f64], out: &mut [f64]) {
    for (j, &uj) in u.iter().enumerate() {
        if uj != 0.0 {
            for (o, &v) in out.iter_mut().zip(m.column(j).iter()) {
                *o += v * uj;
            }
        }
    }
}

impl StateSpace for LtiSystem {
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
        self.a.mul_vec_into(x, x_next);
        add_dense_mul(&self.b, u, x_next);
    }
    fn output(&self, _k: usize, x: &[f64], u: &[f64], y: &mut [f64]) {
        self.c.mul_vec_into(x, y);
        add_dense_mul(&self.d, u, y);
    }
}

impl StateSpace for LtvSystem {
    fn n_x(&self) -> usize {
        self.first().n_x()
    }
    fn n_u(&self) -> usize {
        self.first().n_u()
    }
    fn n_y(&self) -> usize {
        self.first().n_y()
    }
    fn dt(&self) -> f64 {
        self.first().dt
    }
    fn step(&self, k: usize, x: &[f64], u: &[f64], x_next: &mut [f64]) {
        self.pieces[self.piece_index(k)].system.step(k, x, u, x_next)
    }
    fn output(&self, k: usize, x: &[f64], u: &[f64], y: &mut [f64]) {
        self.pieces[self.piece_index(k)].system.output(k, x, u, y)
    }
}

impl StateSpace for DenseSystem {
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
        x_next.iter_mut().for_each(|v| *v = 0.0);
        add_dense_mul(&self.a, x, x_next);
        add_dense_mul(&self.b, u, x_next);
    }
    fn output(&self, _k: usize, x: &[f64], u: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        add_dense_mul(&self.c, x, y);
        add_dense_mul(&self.d, u, y);
    }
}

// ---------------------------------------------------------------------------
// assembly

/// Assembles one LTI system per hydraulic period.
pub fn assemble(
    net: &Network,
    scenario: &HydraulicScenario,
    io: &IoPlacement,
    segments_per_pipe: usize,
) -> Result<LtvSystem> {
    if segments_per_pipe < 2 {
        return Err(Error::Config(format!(
            "segments_per_pipe must be at least 2, got {segments_per_pipe}"
        )));
    }
    let (boosters, sensors) = io.resolve(net)?;
    let layout = Arc::new(StateLayout::new(net, segments_per_pipe));
    let n_x = layout.n_x();

    let c = SparseMatrix::from_triplets(
        sensors.len(),
        n_x,
        sensors.iter().enumerate().map(|(i, &n)| (i, layout.node_state(n), 1.0)),
    );
    let d = DMatrix::zeros(sensors.len(), boosters.len());

    let mut pieces = Vec::with_capacity(scenario.periods.len());
    for (k, period) in scenario.periods.iter().enumerate() {
        let a = assemble_transport(net, &layout, period, scenario.dt_s, k)?;
        let mut b = DMatrix::zeros(n_x, boosters.len());
        for (j, &node) in boosters.iter().enumerate() {
            b[(layout.node_state(node), j)] = booster_gain(net, period, scenario.dt_s, node, io.boosters[j].gain, k)?;
        }
        let mut sys = LtiSystem::new(a, b, c.clone(), d.clone(), scenario.dt_s)?;
        sys.layout = Some(layout.clone());
        pieces.push(LtvPiece {
            system: sys,
            steps: period.steps(scenario.dt_s),
        });
    }
    LtvSystem::new(pieces)
}

/// Concentration increment per unit input at a booster node.
fn booster_gain(net: &Network, period: &HydraulicPeriod, dt: f64, node: usize, gain: f64, k: usize) -> Result<f64> {
    if let NodeKind::Tank { volume_l } = net.nodes[node].kind {
        return Ok(gain / volume_l);
    }
    let (mut inflow, mut outflow) = (0.0, 0.0);
    for (l, &q) in net.links.iter().zip(&period.link_flow) {
        let (up, down) = if q >= 0.0 { (l.from, l.to) } else { (l.to, l.from) };
        if down == node {
            inflow += q.abs();
        }
        if up == node {
            outflow += q.abs();
        }
    }
    let throughput = if inflow > 0.0 { inflow } else { outflow };
    if throughput <= 0.0 {
        return Err(Error::semantic(
            "booster",
            net.nodes[node].id.clone(),
            format!("node carries no flow in period {k}, so the dose has no carrier"),
        ));
    }
    // u is mg per sample; throughput·1000·dt is the liters passing per sample
    Ok(gain / (throughput * 1000.0 * dt))
}

/// Link upstream node and the state index at its downstream end for a given flow sign.
fn link_ends(net: &Network, layout: &StateLayout, link: usize, q: f64) -> (usize, usize) {
    let l = &net.links[link];
    let r = layout.link_states(link);
    if q >= 0.0 {
        (l.from, r.end - 1)
    } else {
        (l.to, r.start)
    }
}

fn assemble_transport(
    net: &Network,
    layout: &StateLayout,
    period: &HydraulicPeriod,
    dt: f64,
    k: usize,
) -> Result<SparseMatrix> {
    let n_x = layout.n_x();
    let decay = (-period.decay_per_s * dt).exp();
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * n_x);

    // inflow links per node: (outlet state, |q|)
    let mut inflows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.nodes.len()];
    for (i, &q) in period.link_flow.iter().enumerate() {
        if q != 0.0 {
            let l = &net.links[i];
            let down = if q > 0.0 { l.to } else { l.from };
            inflows[down].push((link_ends(net, layout, i, q).1, q.abs()));
        }
    }

    for (n, node) in net.nodes.iter().enumerate() {
        let row = layout.node_state(n);
        let total: f64 = inflows[n].iter().map(|x| x.1).sum();
        match node.kind {
            NodeKind::Junction => {
                for &(col, q) in &inflows[n] {
                    trip.push((row, col, q / total));
                }
            }
            NodeKind::Reservoir { .. } => {}
            NodeKind::Tank { volume_l } => {
                let v = volume_l / 1000.0;
                let frac = dt * total / v;
                if frac > 1.0 {
                    return Err(Error::semantic(
                        "node",
                        node.id.clone(),
                        format!(
                            "tank volume {volume_l} L is smaller than one sample of inflow ({:.3} L) in period {k}",
                            dt * total * 1000.0
                        ),
                    ));
                }
                trip.push((row, row, decay * (1.0 - frac)));
                for &(col, q) in &inflows[n] {
                    trip.push((row, col, decay * dt * q / v));
                }
            }
        }
    }

    for (i, l) in net.links.iter().enumerate() {
        let q = period.link_flow[i];
        let states = layout.link_states(i);
        if q == 0.0 {
            let hold = if l.is_pipe() { decay } else { 1.0 };
            trip.extend(states.map(|s| (s, s, hold)));
            continue;
        }
        let up_state = layout.node_state(link_ends(net, layout, i, q).0);
        match l.kind {
            LinkKind::Pump | LinkKind::Valve => trip.push((states.start, up_state, 1.0)),
            LinkKind::Pipe { length_m, .. } => {
                let s = states.len();
                let nu = courant_number(period.link_velocity[i], dt, length_m, s);
                if nu > 1.0 + 1e-12 {
                    return Err(Error::semantic(
                        "link",
                        l.id.clone(),
                        format!("Courant number {nu:.4} exceeds 1 in period {k}; use fewer segments or a smaller dt"),
                    ));
                }
                let nu = nu.min(1.0);
                // segment indices in flow order
                let order: Vec<usize> = if q > 0.0 { states.collect() } else { states.rev().collect() };
                lax_wendroff_rows(&order, up_state, nu, decay, &mut trip);
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n_x, n_x, trip))
}

/// Conservative Lax–Wendroff rows for one pipe. Interior interfaces use the
/// L-W flux; the inflow and outflow interfaces are upwinded, so the columns
/// of the block (plus the inflow term) sum to one and `ν = 1` is an exact shift.
fn lax_wendroff_rows(order: &[usize], up: usize, nu: f64, decay: f64, trip: &mut Vec<(usize, usize, f64)>) {
    let s = order.len();
    if s == 1 {
        trip.push((order[0], up, decay * nu));
        trip.push((order[0], order[0], decay * (1.0 - nu)));
        return;
    }
    let alpha = 0.5 * nu * (1.0 + nu);
    let beta = 1.0 - nu * nu;
    let gamma = -0.5 * nu * (1.0 - nu);
    for (j, &row) in order.iter().enumerate() {
        if j == 0 {
            trip.push((row, up, decay * nu));
            trip.push((row, row, decay * (1.0 - alpha)));
            trip.push((row, order[1], decay * gamma));
        } else if j == s - 1 {
            trip.push((row, order[j - 1], decay * alpha));
            trip.push((row, row, decay * (1.0 - alpha)));
        } else {
            trip.push((row, order[j - 1], decay * alpha));
            trip.push((row, row, decay * beta));
            trip.push((row, order[j + 1], decay * gamma));
        }
    }
}

/// Water volume (m³) carried by each state in one period, used for mass
/// accounting. Tanks and pipe segments hold their physical volume.
/// Junctions, pumps and valves hold no water but pass their state on one
/// sample later, so they carry the throughput of one sample, `|q| Δt`.
/// Reservoirs are external sources and carry nothing.
pub fn state_volumes(net: &Network, layout: &StateLayout, period: &HydraulicPeriod, dt: f64) -> Vec<f64> {
    let mut inflow = vec![0.0; net.nodes.len()];
    for (l, &q) in net.links.iter().zip(&period.link_flow) {
        inflow[if q >= 0.0 { l.to } else { l.from }] += q.abs();
    }
    (0..layout.n_x())
        .map(|i| match layout.role(i) {
            StateRole::Junction { node } => inflow[node] * dt,
            StateRole::Reservoir { .. } => 0.0,
            StateRole::Tank { node } => match net.nodes[node].kind {
                NodeKind::Tank { volume_l } => volume_l / 1000.0,
                _ => 0.0,
            },
            StateRole::PipeSegment { link, .. } => match net.links[link].kind {
                LinkKind::Pipe {
                    length_m, diameter_m, ..
                } => {
                    let s = layout.link_states(link).len() as f64;
                    std::f64::consts::PI * diameter_m * diameter_m / 4.0 * length_m / s
                }
                _ => 0.0,
            },
            StateRole::Pump { link } | StateRole::Valve { link } => period.link_flow[link].abs() * dt,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// simulation

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub dt: f64,
    /// `n_u × steps`.
    pub u: DMatrix<f64>,
    /// `n_y × steps`; column `k` is `y(k)`.
    pub y: DMatrix<f64>,
    /// `n_x × (steps + 1)` when requested.
    pub x: Option<DMatrix<f64>>,
    pub x_final: DVector<f64>,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.y.ncols()
    }

    /// CSV with columns `t, u..., y...`; time in seconds.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.u.nrows() {
            let _ = write!(s, ",u{}", i + 1);
        }
        for i in 0..self.y.nrows() {
            let _ = write!(s, ",y{}", i + 1);
        }
        s.push('\n');
        for k in 0..self.steps() {
            let _ = write!(s, "{}", k as f64 * self.dt);
            for v in self.u.column(k).iter().chain(self.y.column(k).iter()) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Constant input `amplitudes` for every sample.
pub fn step_input(amplitudes: &[f64], steps: usize) -> DMatrix<f64> {
    DMatrix::from_fn(amplitudes.len(), steps, |i, _| amplitudes[i])
}

/// Runs `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k) + D u(k)` for `k < steps`.
pub fn simulate<S: StateSpace + ?Sized>(
    sys: &S,
    u: &DMatrix<f64>,
    x0: Option<&DVector<f64>>,
    steps: usize,
    keep_states: bool,
) -> Result<SimResult> {
    let (n_x, n_u, n_y) = (sys.n_x(), sys.n_u(), sys.n_y());
    if steps == 0 {
        return Err(Error::Dimension("simulation needs at least one step".into()));
    }
    if u.nrows() != n_u || u.ncols() < steps {
        return Err(Error::Dimension(format!(
            "input is {}x{}, system expects {n_u} inputs over {steps} steps",
            u.nrows(),
            u.ncols()
        )));
    }
    let mut x = match x0 {
        Some(x0) if x0.len() != n_x => {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n_x}", x0.len())))
        }
        Some(x0) => x0.as_slice().to_vec(),
        None => vec![0.0; n_x],
    };
    let mut xn = vec![0.0; n_x];
    let mut y = DMatrix::zeros(n_y, steps);
    let mut states = keep_states.then(|| DMatrix::zeros(n_x, steps + 1));
    let mut uk = vec![0.0; n_u];
    let mut yk = vec![0.0; n_y];
    for k in 0..steps {
        uk.iter_mut().zip(u.column(k).iter()).for_each(|(a, b)| *a = *b);
        if let Some(st) = states.as_mut() {
            st.column_mut(k).copy_from_slice(&x);
        }
        sys.output(k, &x, &uk, &mut yk);
        y.column_mut(k).copy_from_slice(&yk);
        sys.step(k, &x, &uk, &mut xn);
        std::mem::swap(&mut x, &mut xn);
    }
    if let Some(st) = states.as_mut() {
        st.column_mut(steps).copy_from_slice(&x);
    }
    Ok(SimResult {
        dt: sys.dt(),
        u: u.columns(0, steps).into_owned(),
        y,
        x: states,
        x_final: DVector::from_vec(x),
    })
}

// ---------------------------------------------------------------------------
// sparse triplet export

/// Writes `(A, B, C, D)` as text: a header `n_x n_u n_y dt` followed by
/// `# A nnz`, `# B nnz`, `# C nnz`, `# D nnz` sections of `row col value` lines.
pub fn write_triplets<W: Write>(sys: &LtiSystem, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {} {} {:?}", sys.n_x(), sys.n_u(), sys.n_y(), sys.dt)?;
    let dense_trip = |m: &DMatrix<f64>| -> Vec<(usize, usize, f64)> {
        let mut v = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    v.push((i, j, m[(i, j)]));
                }
            }
        }
        v
    };
    let sections: [(&str, Vec<(usize, usize, f64)>); 4] = [
        ("A", sys.a.triplets().collect()),
        ("B", dense_trip(&sys.b)),
        ("C", sys.c.triplets().collect()),
        ("D", dense_trip(&sys.d)),
    ];
    for (name, t) in sections {
        writeln!(w, "# {name} {}", t.len())?;
        for (r, c, v) in t {
            writeln!(w, "{r} {c} {v:?}")?;
        }
    }
    Ok(())
}

pub fn read_triplets<R: BufRead>(r: R) -> Result<LtiSystem> {
    let bad = |line: usize, msg: &str| Error::Syntax {
        line,
        column: 1,
        message: msg.to_string(),
    };
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let header = header?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(bad(1, "expected header 'n_x n_u n_y dt'"));
    }
    let parse_usize = |s: &str, line| s.parse::<usize>().map_err(|_| bad(line, "expected an integer"));
    let (n_x, n_u, n_y) = (parse_usize(h[0], 1)?, parse_usize(h[1], 1)?, parse_usize(h[2], 1)?);
    let dt: f64 = h[3].parse().map_err(|_| bad(1, "expected a number for dt"))?;
    let mut mats: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let lno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let name = rest.split_whitespace().next().unwrap_or("");
            let expect = ["A", "B", "C", "D"].get(mats.len()).copied();
            if Some(name) != expect {
                return Err(bad(lno, "sections must appear in the order A, B, C, D"));
            }
            mats.push(Vec::new());
            continue;
        }
        let cur = mats.last_mut().ok_or_else(|| bad(lno, "entry before the first section"))?;
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad(lno, "expected 'row col value'"));
        }
        let v: f64 = f[2].parse().map_err(|_| bad(lno, "bad value"))?;
        cur.push((parse_usize(f[0], lno)?, parse_usize(f[1], lno)?, v));
    }
    if mats.len() != 4 {
        return Err(bad(1, "missing matrix sections"));
    }
    let dims = [(n_x, n_x), (n_x, n_u), (n_y, n_x), (n_y, n_u)];
    for (m, &(r, c)) in mats.iter().zip(&dims) {
        if m.iter().any(|&(i, j, _)| i >= r || j >= c) {
            return Err(Error::Dimension("triplet index outside the declared size".into()));
        }
    }
    let dense = |t: &[(usize, usize, f64)], r, c| {
        let mut m = DMatrix::zeros(r, c);
        for &(i, j, v) in t {
            m[(i, j)] += v;
        }
        m
    };
    LtiSystem::new(
        SparseMatrix::from_triplets(n_x, n_x, mats[0].iter().copied()),
        dense(&mats[1], n_x, n_u),
        SparseMatrix::from_triplets(n_y, n_x, mats[2].iter().copied()),
        dense(&mats[3], n_y, n_u),
        dt,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    fn three_node() -> LtvSystem {
        let (net, sc) = parse_network(include_str!("../fixtures/three_node.json")).unwrap();
        assemble(&net, &sc, &IoPlacement::new(&[("J2", 1.0)], &["TK3"]), 150).unwrap()
    }

    #[test]
    fn three_node_dimensions() {
        let sys = three_node();
        let l = sys.layout().unwrap();
        assert_eq!((l.n_nodes(), l.n_links(), l.n_x()), (3, 151, 154));
        assert_eq!((sys.n_u(), sys.n_y()), (1, 1));
        assert_eq!(l.label(0), "J2");
        assert_eq!(l.label(3), "P23[1]");
        assert_eq!(l.label(153), "PM12");
    }

    #[test]
    fn pipe_rows_sum_to_decay() {
        let sys = three_node();
        let a = &sys.first().a;
        let decay = (-5e-6f64 * 20.0).exp();
        for i in 3..153 {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            assert!((s - decay).abs() < 1e-14, "row {i}: {s}");
        }
    }

    #[test]
    fn unit_courant_is_a_shift() {
        let mut order = Vec::new();
        lax_wendroff_rows(&[1, 2, 3], 0, 1.0, 1.0, &mut order);
        let a = SparseMatrix::from_triplets(4, 4, order).to_dense();
        let expect = DMatrix::from_row_slice(4, 4, &[0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.]);
        assert_eq!(a, expect);
    }

    #[test]
    fn zero_input_zero_output() {
        let sys = three_node();
        let r = simulate(&sys, &DMatrix::zeros(1, 50), None, 50, false).unwrap();
        assert!(r.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let sys = three_node();
        assert!(simulate(&sys, &DMatrix::zeros(2, 5), None, 5, false).is_err());
        assert!(simulate(&sys, &DMatrix::zeros(1, 5), Some(&DVector::zeros(3)), 5, false).is_err());
    }

    #[test]
    fn pipe_interior_placement_rejected() {
        let (net, sc) = parse_network(include_str!("../fixtures/three_node.json")).unwrap();
        let err = assemble(&net, &sc, &IoPlacement::new(&[("P23", 1.0)], &["TK3"]), 150).unwrap_err();
        assert!(err.to_string().contains("not supported"), "{err}");
    }

    #[test]
    fn triplets_round_trip() {
        let sys = three_node();
        let mut buf = Vec::new();
        write_triplets(sys.first(), &mut buf).unwrap();
        let back = read_triplets(&buf[..]).unwrap();
        assert_eq!(back.a, sys.first().a);
        assert_eq!(back.b, sys.first().b);
        assert_eq!(back.c, sys.first().c);
        assert_eq!(back.dt, 20.0);
    }
}
