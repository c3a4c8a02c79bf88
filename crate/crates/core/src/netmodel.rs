//! Water-network description and hydraulic scenario.
//!
//! The on-disk format is JSON (see `docs/network-format.md`). Parsing goes
//! through a plain serde mirror of the file and then into validated domain
//! types; [`Network::to_json`] runs the same mapping backwards.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKindTag {
    Junction,
    Reservoir,
    Tank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKindTag {
    Pipe,
    Pump,
    Valve,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Junction,
    Reservoir { source_concentration: Option<f64> },
    /// Volume in liters.
    Tank { volume_l: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn tag(&self) -> NodeKindTag {
        match self.kind {
            NodeKind::Junction => NodeKindTag::Junction,
            NodeKind::Reservoir { .. } => NodeKindTag::Reservoir,
            NodeKind::Tank { .. } => NodeKindTag::Tank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkKind {
    Pipe {
        length_m: f64,
        diameter_m: f64,
        /// Per-pipe override of the segment count.
        segments: Option<usize>,
    },
    Pump,
    Valve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub kind: LinkKind,
    /// Index into [`Network::nodes`].
    pub from: usize,
    pub to: usize,
}

impl Link {
    pub fn tag(&self) -> LinkKindTag {
        match self.kind {
            LinkKind::Pipe { .. } => LinkKindTag::Pipe,
            LinkKind::Pump => LinkKindTag::Pump,
            LinkKind::Valve => LinkKindTag::Valve,
        }
    }

    pub fn is_pipe(&self) -> bool {
        matches!(self.kind, LinkKind::Pipe { .. })
    }

    pub fn length_m(&self) -> Option<f64> {
        match self.kind {
            LinkKind::Pipe { length_m, .. } => Some(length_m),
            _ => None,
        }
    }

    /// Segment count for this pipe given the run-wide default.
    pub fn segments(&self, default: usize) -> usize {
        match self.kind {
            LinkKind::Pipe { segments, .. } => segments.unwrap_or(default),
            _ => 1,
        }
    }
}

/// Component counts `{n_J, n_R, n_TK, n_P, n_M, n_V}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComponentCounts {
    pub junctions: usize,
    pub reservoirs: usize,
    pub tanks: usize,
    pub pipes: usize,
    pub pumps: usize,
    pub valves: usize,
}

impl ComponentCounts {
    pub fn as_array(&self) -> [usize; 6] {
        [self.junctions, self.reservoirs, self.tanks, self.pipes, self.pumps, self.valves]
    }

    pub fn nodes(&self) -> usize {
        self.junctions + self.reservoirs + self.tanks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
}

impl Network {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn counts(&self) -> ComponentCounts {
        let mut c = ComponentCounts {
            junctions: 0,
            reservoirs: 0,
            tanks: 0,
            pipes: 0,
            pumps: 0,
            valves: 0,
        };
        for n in &self.nodes {
            match n.tag() {
                NodeKindTag::Junction => c.junctions += 1,
                NodeKindTag::Reservoir => c.reservoirs += 1,
                NodeKindTag::Tank => c.tanks += 1,
            }
        }
        for l in &self.links {
            match l.tag() {
                LinkKindTag::Pipe => c.pipes += 1,
                LinkKindTag::Pump => c.pumps += 1,
                LinkKindTag::Valve => c.valves += 1,
            }
        }
        c
    }

    /// Number of node states `n_N`.
    pub fn node_states(&self) -> usize {
        self.nodes.len()
    }

    /// Number of link states `n_L` for a default segment count.
    pub fn link_states(&self, default_segments: usize) -> usize {
        self.links.iter().map(|l| l.segments(default_segments)).sum()
    }

    pub fn to_json(&self, scenario: &HydraulicScenario) -> String {
        let file = NetworkFile::from_domain(self, scenario);
        serde_json::to_string_pretty(&file).expect("network file serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicPeriod {
    pub duration_s: f64,
    /// Signed flow per link index; negative means reverse of the declared direction.
    pub link_flow: Vec<f64>,
    /// Velocity magnitude per link index (zero for pumps and valves).
    pub link_velocity: Vec<f64>,
    /// Demand per node index (only junctions may be nonzero).
    pub node_demand: Vec<f64>,
    pub decay_per_s: f64,
}

impl HydraulicPeriod {
    /// Number of samples covered by this period.
    pub fn steps(&self, dt: f64) -> usize {
        (self.duration_s / dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicScenario {
    pub dt_s: f64,
    pub periods: Vec<HydraulicPeriod>,
}

impl HydraulicScenario {
    pub fn total_steps(&self) -> usize {
        self.periods.iter().map(|p| p.steps(self.dt_s)).sum()
    }
}

// ---------------------------------------------------------------------------
// serde mirror of the file format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    #[serde(default = "default_version")]
    format_version: u32,
    name: String,
    nodes: Vec<NodeRecord>,
    links: Vec<LinkRecord>,
    scenario: ScenarioRecord,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    kind: NodeKindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    volume_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_mg_l: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRecord {
    id: String,
    kind: LinkKindTag,
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diameter_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    dt_s: f64,
    periods: Vec<PeriodRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodRecord {
    duration_s: f64,
    #[serde(default)]
    flows: BTreeMap<String, f64>,
    #[serde(default)]
    velocities: BTreeMap<String, f64>,
    #[serde(default)]
    demands: BTreeMap<String, f64>,
    #[serde(default)]
    decay_per_s: f64,
}

impl NetworkFile {
    fn from_domain(net: &Network, sc: &HydraulicScenario) -> Self {
        let nodes = net
            .nodes
            .iter()
            .map(|n| {
                let (volume_l, source_mg_l) = match n.kind {
                    NodeKind::Junction => (None, None),
                    NodeKind::Reservoir { source_concentration } => (None, source_concentration),
                    NodeKind::Tank { volume_l } => (Some(volume_l), None),
                };
                NodeRecord {
                    id: n.id.clone(),
                    kind: n.tag(),
                    volume_l,
                    source_mg_l,
                }
            })
            .collect();
        let links = net
            .links
            .iter()
            .map(|l| {
                let (length_m, diameter_m, segments) = match l.kind {
                    LinkKind::Pipe {
                        length_m,
                        diameter_m,
                        segments,
                    } => (Some(length_m), Some(diameter_m), segments),
                    _ => (None, None, None),
                };
                LinkRecord {
                    id: l.id.clone(),
                    kind: l.tag(),
                    from: net.nodes[l.from].id.clone(),
                    to: net.nodes[l.to].id.clone(),
                    length_m,
                    diameter_m,
                    segments,
                }
            })
            .collect();
        let periods = sc
            .periods
            .iter()
            .map(|p| PeriodRecord {
                duration_s: p.duration_s,
                flows: net
                    .links
                    .iter()
                    .zip(&p.link_flow)
                    .map(|(l, &q)| (l.id.clone(), q))
                    .collect(),
                velocities: net
                    .links
                    .iter()
                    .zip(&p.link_velocity)
                    .filter(|(l, _)| l.is_pipe())
                    .map(|(l, &v)| (l.id.clone(), v))
                    .collect(),
                demands: net
                    .nodes
                    .iter()
                    .zip(&p.node_demand)
                    .filter(|(n, _)| n.tag() == NodeKindTag::Junction)
                    .map(|(n, &d)| (n.id.clone(), d))
                    .collect(),
                decay_per_s: p.decay_per_s,
            })
            .collect();
        NetworkFile {
            format_version: FORMAT_VERSION,
            name: net.name.clone(),
            nodes,
            links,
            scenario: ScenarioRecord { dt_s: sc.dt_s, periods },
        }
    }

    fn into_domain(self) -> Result<(Network, HydraulicScenario)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::semantic(
                "file",
                self.name,
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        if self.nodes.is_empty() {
            return Err(Error::semantic("network", self.name, "node list is empty"));
        }

        let mut node_index = HashMap::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for rec in self.nodes {
            if node_index.contains_key(&rec.id) {
                return Err(Error::semantic("node", rec.id, "duplicate identifier"));
            }
            let kind = match rec.kind {
                NodeKindTag::Junction => {
                    if rec.volume_l.is_some() || rec.source_mg_l.is_some() {
                        return Err(Error::semantic("node", rec.id, "junctions take no volume or source"));
                    }
                    NodeKind::Junction
                }
                NodeKindTag::Reservoir => {
                    if rec.volume_l.is_some() {
                        return Err(Error::semantic("node", rec.id, "reservoirs take no volume"));
                    }
                    if let Some(c) = rec.source_mg_l {
                        if !(c >= 0.0) || !c.is_finite() {
                            return Err(Error::semantic("node", rec.id, "source concentration must be >= 0"));
                        }
                    }
                    NodeKind::Reservoir {
                        source_concentration: rec.source_mg_l,
                    }
                }
                NodeKindTag::Tank => {
                    let v = rec
                        .volume_l
                        .ok_or_else(|| Error::semantic("node", rec.id.clone(), "tank requires volume_l"))?;
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::semantic("node", rec.id, "tank volume must be > 0"));
                    }
                    if rec.source_mg_l.is_some() {
                        return Err(Error::semantic("node", rec.id, "tanks take no source concentration"));
                    }
                    NodeKind::Tank { volume_l: v }
                }
            };
            node_index.insert(rec.id.clone(), nodes.len());
            nodes.push(Node { id: rec.id, kind });
        }

        let mut link_index = HashMap::new();
        let mut links = Vec::with_capacity(self.links.len());
        for rec in self.links {
            if link_index.contains_key(&rec.id) {
                return Err(Error::semantic("link", rec.id, "duplicate identifier"));
            }
            let from = *node_index
                .get(&rec.from)
                .ok_or_else(|| Error::semantic("link", rec.id.clone(), format!("unknown node '{}'", rec.from)))?;
            let to = *node_index
                .get(&rec.to)
                .ok_or_else(|| Error::semantic("link", rec.id.clone(), format!("unknown node '{}'", rec.to)))?;
            if from == to {
                return Err(Error::semantic("link", rec.id, "link must join two distinct nodes"));
            }
            let kind = match rec.kind {
                LinkKindTag::Pipe => {
                    let length_m = rec
                        .length_m
                        .ok_or_else(|| Error::semantic("link", rec.id.clone(), "pipe requires length_m"))?;
                    let diameter_m = rec
                        .diameter_m
                        .ok_or_else(|| Error::semantic("link", rec.id.clone(), "pipe requires diameter_m"))?;
                    if !(length_m > 0.0) || !length_m.is_finite() {
                        return Err(Error::semantic("link", rec.id, "pipe length must be > 0"));
                    }
                    if !(diameter_m > 0.0) || !diameter_m.is_finite() {
                        return Err(Error::semantic("link", rec.id, "pipe diameter must be > 0"));
                    }
                    if rec.segments == Some(0) {
                        return Err(Error::semantic("link", rec.id, "segment count must be positive"));
                    }
                    LinkKind::Pipe {
                        length_m,
                        diameter_m,
                        segments: rec.segments,
                    }
                }
                LinkKindTag::Pump | LinkKindTag::Valve => {
                    if rec.length_m.is_some() || rec.diameter_m.is_some() || rec.segments.is_some() {
                        return Err(Error::semantic("link", rec.id, "pumps and valves carry no length or diameter"));
                    }
                    if rec.kind == LinkKindTag::Pump {
                        LinkKind::Pump
                    } else {
                        LinkKind::Valve
                    }
                }
            };
            link_index.insert(rec.id.clone(), links.len());
            links.push(Link {
                id: rec.id,
                kind,
                from,
                to,
            });
        }

        let network = Network {
            name: self.name,
            nodes,
            links,
            node_index,
            link_index,
        };
        let scenario = scenario_from_record(&network, self.scenario)?;
        Ok((network, scenario))
    }
}

fn scenario_from_record(net: &Network, rec: ScenarioRecord) -> Result<HydraulicScenario> {
    if !(rec.dt_s > 0.0) || !rec.dt_s.is_finite() {
        return Err(Error::semantic("scenario", "dt_s", "sample time must be > 0"));
    }
    if rec.periods.is_empty() {
        return Err(Error::semantic("scenario", "periods", "at least one period is required"));
    }
    let mut periods = Vec::with_capacity(rec.periods.len());
    for (k, p) in rec.periods.into_iter().enumerate() {
        let pid = format!("period {k}");
        let ratio = p.duration_s / rec.dt_s;
        if !(p.duration_s > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::semantic(
                "period",
                pid,
                format!("duration {} s is not a positive multiple of dt = {} s", p.duration_s, rec.dt_s),
            ));
        }
        if !(p.decay_per_s >= 0.0) || !p.decay_per_s.is_finite() {
            return Err(Error::semantic("period", pid, "decay_per_s must be >= 0"));
        }
        let mut link_flow = vec![0.0; net.links.len()];
        for (id, q) in &p.flows {
            let i = net
                .link_index(id)
                .ok_or_else(|| Error::semantic("period", pid.clone(), format!("flow for unknown link '{id}'")))?;
            if !q.is_finite() {
                return Err(Error::semantic("link", id.clone(), "flow is not finite"));
            }
            link_flow[i] = *q;
        }
        let mut link_velocity = vec![0.0; net.links.len()];
        for (id, v) in &p.velocities {
            let i = net
                .link_index(id)
                .ok_or_else(|| Error::semantic("period", pid.clone(), format!("velocity for unknown link '{id}'")))?;
            if !net.links[i].is_pipe() {
                return Err(Error::semantic("link", id.clone(), "velocities apply to pipes only"));
            }
            if !v.is_finite() {
                return Err(Error::semantic("link", id.clone(), "velocity is not finite"));
            }
            link_velocity[i] = v.abs();
        }
        let mut node_demand = vec![0.0; net.nodes.len()];
        for (id, d) in &p.demands {
            let i = net
                .node_index(id)
                .ok_or_else(|| Error::semantic("period", pid.clone(), format!("demand for unknown node '{id}'")))?;
            if net.nodes[i].tag() != NodeKindTag::Junction {
                return Err(Error::semantic("node", id.clone(), "demands apply to junctions only"));
            }
            if !d.is_finite() {
                return Err(Error::semantic("node", id.clone(), "demand is not finite"));
            }
            node_demand[i] = *d;
        }
        for (l, (&q, &v)) in net.links.iter().zip(link_flow.iter().zip(&link_velocity)) {
            if l.is_pipe() && q != 0.0 && !(v > 0.0) {
                return Err(Error::semantic(
                    "link",
                    l.id.clone(),
                    format!("pipe carries flow {q} m3/s but has no positive velocity in {pid}"),
                ));
            }
        }
        let period = HydraulicPeriod {
            duration_s: p.duration_s,
            link_flow,
            link_velocity,
            node_demand,
            decay_per_s: p.decay_per_s,
        };
        check_conservation(net, &period, &pid)?;
        periods.push(period);
    }
    Ok(HydraulicScenario {
        dt_s: rec.dt_s,
        periods,
    })
}

/// Signed inflow, outflow and demand at every junction.
pub fn junction_balance(net: &Network, period: &HydraulicPeriod) -> Vec<(f64, f64, f64)> {
    let mut bal = vec![(0.0, 0.0, 0.0); net.nodes.len()];
    for (l, &q) in net.links.iter().zip(&period.link_flow) {
        let (up, down) = if q >= 0.0 { (l.from, l.to) } else { (l.to, l.from) };
        bal[up].1 += q.abs();
        bal[down].0 += q.abs();
    }
    for (b, &d) in bal.iter_mut().zip(&period.node_demand) {
        b.2 = d;
    }
    bal
}

fn check_conservation(net: &Network, period: &HydraulicPeriod, pid: &str) -> Result<()> {
    for (n, (inflow, outflow, demand)) in net.nodes.iter().zip(junction_balance(net, period)) {
        if n.tag() != NodeKindTag::Junction {
            continue;
        }
        let scale = inflow.max(outflow).max(demand.abs());
        let residual = inflow - demand - outflow;
        if residual.abs() > 1e-9 * scale + 1e-15 {
            return Err(Error::semantic(
                "node",
                n.id.clone(),
                format!(
                    "flow conservation violated in {pid}: inflow {inflow} - demand {demand} - outflow {outflow} = {residual} m3/s"
                ),
            ));
        }
    }
    Ok(())
}

/// Parses and validates a network file.
pub fn parse_network(text: &str) -> Result<(Network, HydraulicScenario)> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Config(format!(
            "schema error at line {}, column {}: {}",
            e.line(),
            e.column(),
            e
        )),
        _ => Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    file.into_domain()
}

pub fn load_network(path: &std::path::Path) -> Result<(Network, HydraulicScenario)> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

// ---------------------------------------------------------------------------
// Courant check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CourantEntry {
    pub pipe: String,
    pub segments: usize,
    pub worst_courant: f64,
    pub worst_period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CourantReport {
    pub entries: Vec<CourantEntry>,
}

impl CourantReport {
    pub fn max_courant(&self) -> f64 {
        self.entries.iter().map(|e| e.worst_courant).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.worst_courant <= 1.0 + 1e-12)
    }

    pub fn violations(&self) -> impl Iterator<Item = &CourantEntry> {
        self.entries.iter().filter(|e| e.worst_courant > 1.0 + 1e-12)
    }
}

/// Courant number `v·Δt/Δx` for one pipe in one period.
pub fn courant_number(velocity: f64, dt: f64, length: f64, segments: usize) -> f64 {
    velocity.abs() * dt * segments as f64 / length
}

/// Worst Courant number per pipe over all periods.
pub fn validate_courant(net: &Network, scenario: &HydraulicScenario, segments_per_pipe: usize) -> CourantReport {
    let entries = net
        .links
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let length = l.length_m()?;
            let s = l.segments(segments_per_pipe);
            let (worst_period, worst) = scenario
                .periods
                .iter()
                .enumerate()
                .map(|(k, p)| (k, courant_number(p.link_velocity[i], scenario.dt_s, length, s)))
                .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            Some(CourantEntry {
                pipe: l.id.clone(),
                segments: s,
                worst_courant: worst,
                worst_period,
            })
        })
        .collect();
    CourantReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_NODE: &str = include_str!("../fixtures/three_node.json");

    #[test]
    fn three_node_counts() {
        let (net, sc) = parse_network(THREE_NODE).unwrap();
        assert_eq!(net.counts().as_array(), [1, 1, 1, 1, 1, 0]);
        assert_eq!(sc.dt_s, 20.0);
        assert_eq!(net.node_states(), 3);
        assert_eq!(net.link_states(150), 151);
    }

    #[test]
    fn empty_node_list_is_semantic_error() {
        let text = r#"{"name":"x","nodes":[],"links":[],"scenario":{"dt_s":1,"periods":[{"duration_s":1}]}}"#;
        assert!(matches!(parse_network(text), Err(Error::Semantic { .. })));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_network("{\n  \"name\": \"x\",\n  oops }").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perturbed_demand_breaks_conservation_at_that_junction() {
        let mut v: serde_json::Value = serde_json::from_str(THREE_NODE).unwrap();
        let d = v["scenario"]["periods"][0]["demands"]["J2"].as_f64().unwrap_or(0.0);
        v["scenario"]["periods"][0]["demands"]["J2"] = serde_json::json!(d + 1.0);
        let err = parse_network(&v.to_string()).unwrap_err();
        match err {
            Error::Semantic { entity, id, reason } => {
                assert_eq!(entity, "node");
                assert_eq!(id, "J2");
                assert!(reason.contains("conservation"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_node_and_bad_length_are_named() {
        let text = r#"{"name":"x","nodes":[{"id":"A","kind":"junction"}],
            "links":[{"id":"L","kind":"pipe","from":"A","to":"B","length_m":1,"diameter_m":1}],
            "scenario":{"dt_s":1,"periods":[{"duration_s":1}]}}"#;
        let err = parse_network(text).unwrap_err().to_string();
        assert!(err.contains("'L'") && err.contains("unknown node 'B'"), "{err}");

        let text = r#"{"name":"x","nodes":[{"id":"A","kind":"junction"},{"id":"B","kind":"junction"}],
            "links":[{"id":"L","kind":"pipe","from":"A","to":"B","length_m":0,"diameter_m":1}],
            "scenario":{"dt_s":1,"periods":[{"duration_s":1}]}}"#;
        let err = parse_network(text).unwrap_err().to_string();
        assert!(err.contains("length"), "{err}");
    }

    #[test]
    fn pump_with_length_rejected() {
        let text = r#"{"name":"x","nodes":[{"id":"A","kind":"reservoir"},{"id":"B","kind":"junction"}],
            "links":[{"id":"M","kind":"pump","from":"A","to":"B","length_m":3}],
            "scenario":{"dt_s":1,"periods":[{"duration_s":1}]}}"#;
        assert!(parse_network(text).is_err());
    }

    #[test]
    fn duration_must_be_multiple_of_dt() {
        let text = r#"{"name":"x","nodes":[{"id":"A","kind":"junction"}],"links":[],
            "scenario":{"dt_s":20,"periods":[{"duration_s":30}]}}"#;
        assert!(parse_network(text).is_err());
    }

    #[test]
    fn courant_examples() {
        assert_eq!(courant_number(0.05, 20.0, 150.0, 150), 1.0);
        assert_eq!(courant_number(0.0, 20.0, 150.0, 150), 0.0);
        assert_eq!(courant_number(0.10, 20.0, 150.0, 150), 2.0);
    }

    #[test]
    fn courant_report_flags_doubled_velocity() {
        let text = r#"{"name":"x","nodes":[{"id":"R","kind":"reservoir"},{"id":"J","kind":"junction"}],
            "links":[{"id":"P","kind":"pipe","from":"R","to":"J","length_m":150,"diameter_m":0.2}],
            "scenario":{"dt_s":20,"periods":[
                {"duration_s":20,"flows":{"P":0.001},"velocities":{"P":0.05},"demands":{"J":0.001}},
                {"duration_s":20,"flows":{"P":0.002},"velocities":{"P":0.10},"demands":{"J":0.002}}]}}"#;
        let (net, sc) = parse_network(text).unwrap();
        let report = validate_courant(&net, &sc, 150);
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.entries[0].worst_courant, 2.0);
        assert_eq!(report.entries[0].worst_period, 1);
        assert!(!report.passes());
    }

    #[test]
    fn three_node_round_trip() {
        let (net, sc) = parse_network(THREE_NODE).unwrap();
        let (net2, sc2) = parse_network(&net.to_json(&sc)).unwrap();
        assert_eq!(net, net2);
        assert_eq!(sc, sc2);
    }
}
