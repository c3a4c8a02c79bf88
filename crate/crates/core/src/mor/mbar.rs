use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenvalue, EigOptions};
use crate::netmodel::{HydraulicScenario, LinkKind, Network};
use crate::wqss::{Booster, IoPlacement, LtiSystem};

/// Lower bound on the snapshot length from parcel travel times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TravelBound {
    pub steps: usize,
    pub seconds: f64,
    pub booster: String,
    pub sensor: String,
    pub period: usize,
}

/// Lower bound on the snapshot length from the settling time of the slowest pole.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlingBound {
    pub steps: usize,
    pub pole_re: f64,
    pub pole_im: f64,
}

impl SettlingBound {
    pub fn pole(&self) -> Complex<f64> {
        Complex::new(self.pole_re, self.pole_im)
    }
}

/// Steps needed to cover `x` samples, forgiving round-off just above an integer.
fn ceil_steps(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Longest booster-to-sensor travel time over the flow-direction graph,
/// maximized over periods. Pipes contribute `L/(|v|Δt)` samples; pumps and
/// valves none.
pub fn mbar_travel_time(net: &Network, scenario: &HydraulicScenario, io: &IoPlacement) -> Result<TravelBound> {
    let node = |id: &str, what: &'static str| net.node_index(id).ok_or_else(|| Error::semantic(what, id, "no such node"));
    let boosters = io.boosters.iter().map(|b| node(&b.node, "booster")).collect::<Result<Vec<_>>>()?;
    let sensors = io.sensors.iter().map(|s| node(s, "sensor")).collect::<Result<Vec<_>>>()?;
    let nn = net.nodes.len();

    let mut best: Option<TravelBound> = None;
    let mut reached = vec![false; sensors.len()];
    for (pi, period) in scenario.periods.iter().enumerate() {
        // adjacency in flow direction: (to, seconds)
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
        for (li, l) in net.links.iter().enumerate() {
            let q = period.link_flow[li];
            if q == 0.0 {
                continue;
            }
            let (u, v) = if q > 0.0 { (l.from, l.to) } else { (l.to, l.from) };
            let secs = match l.kind {
                LinkKind::Pipe { length_m, .. } => length_m / period.link_velocity[li],
                _ => 0.0,
            };
            adj[u].push((v, secs));
        }
        for (bi, &b) in boosters.iter().enumerate() {
            let longest = longest_paths_from(&adj, b, &sensors).map_err(|cyc| {
                Error::Numerical(format!(
                    "flow directions in period {pi} form a cycle through node '{}' on a route from booster '{}'; \
                     use the settling-time bound instead",
                    net.nodes[cyc].id, io.boosters[bi].node
                ))
            })?;
            for (si, &s) in sensors.iter().enumerate() {
                if let Some(t) = longest[s] {
                    reached[si] = true;
                    if best.as_ref().is_none_or(|bst| t > bst.seconds) {
                        best = Some(TravelBound {
                            steps: ceil_steps(t / scenario.dt_s),
                            seconds: t,
                            booster: io.boosters[bi].node.clone(),
                            sensor: io.sensors[si].clone(),
                            period: pi,
                        });
                    }
                }
            }
        }
    }
    if let Some(si) = reached.iter().position(|r| !r) {
        return Err(Error::semantic(
            "sensor",
            io.sensors[si].clone(),
            "not reachable from any booster in any period",
        ));
    }
    best.ok_or_else(|| Error::Config("travel-time bound needs at least one booster and one sensor".into()))
}

/// Travel-time bound when a nonzero initial state is folded in as an input:
/// that channel excites every node, so the longest route into a sensor from
/// any node counts, not only routes from boosters.
pub fn mbar_travel_time_with_initial_state(
    net: &Network,
    scenario: &HydraulicScenario,
    io: &IoPlacement,
) -> Result<TravelBound> {
    let from_boosters = mbar_travel_time(net, scenario, io)?;
    let everywhere = IoPlacement {
        boosters: net
            .nodes
            .iter()
            .map(|n| Booster {
                node: n.id.clone(),
                gain: 1.0,
            })
            .collect(),
        sensors: io.sensors.clone(),
    };
    let from_all = mbar_travel_time(net, scenario, &everywhere)?;
    Ok(if from_all.seconds > from_boosters.seconds {
        from_all
    } else {
        from_boosters
    })
}

/// Longest path lengths from `src` over the part of the graph that can reach
/// a target. Returns the node closing a cycle if that part is not acyclic.
fn longest_paths_from(adj: &[Vec<(usize, f64)>], src: usize, targets: &[usize]) -> std::result::Result<Vec<Option<f64>>, usize> {
    let n = adj.len();
    // nodes that can reach a target
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, edges) in adj.iter().enumerate() {
        for &(v, _) in edges {
            radj[v].push(u);
        }
    }
    let mut useful = vec![false; n];
    let mut stack: Vec<usize> = targets.to_vec();
    for &t in targets {
        useful[t] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in &radj[v] {
            if !useful[u] {
                useful[u] = true;
                stack.push(u);
            }
        }
    }
    // iterative DFS post-order for a topological order of the useful reachable part
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    let mut order = Vec::new();
    if useful[src] {
        let mut st: Vec<(usize, usize)> = vec![(src, 0)];
        mark[src] = Mark::Open;
        while let Some(&mut (u, ref mut next)) = st.last_mut() {
            if *next < adj[u].len() {
                let v = adj[u][*next].0;
                *next += 1;
                if !useful[v] {
                    continue;
                }
                match mark[v] {
                    Mark::Open => return Err(v),
                    Mark::New => {
                        mark[v] = Mark::Open;
                        st.push((v, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[u] = Mark::Done;
                order.push(u);
                st.pop();
            }
        }
    }
    let mut dist: Vec<Option<f64>> = vec![None; n];
    dist[src] = useful[src].then_some(0.0);
    for &u in order.iter().rev() {
        if let Some(du) = dist[u] {
            for &(v, w) in &adj[u] {
                if useful[v] && dist[v].is_none_or(|dv| du + w > dv) {
                    dist[v] = Some(du + w);
                }
            }
        }
    }
    Ok(dist)
}

/// Settling-time bound `⌈−4 / ln|p|⌉` for the dominant pole `p` of `A`.
pub fn mbar_settling_time(sys: &LtiSystem) -> Result<SettlingBound> {
    let p = dominant_eigenvalue(&sys.a, &EigOptions::default())?;
    settling_from_pole(p)
}

pub(crate) fn settling_from_pole(p: Complex<f64>) -> Result<SettlingBound> {
    let r = p.norm();
    if r >= 1.0 {
        return Err(Error::Numerical(format!("dominant pole |p| = {r} is not inside the unit circle")));
    }
    let steps = if r == 0.0 { 1 } else { ceil_steps(-4.0 / r.ln()).max(1) };
    Ok(SettlingBound {
        steps,
        pole_re: p.re,
        pole_im: p.im,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    #[test]
    fn settling_arithmetic() {
        assert_eq!(settling_from_pole(Complex::new((-4.0f64).exp(), 0.0)).unwrap().steps, 1);
        assert_eq!(settling_from_pole(Complex::new(0.99, 0.0)).unwrap().steps, 398);
        assert!(settling_from_pole(Complex::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn single_pipe_travel() {
        let text = r#"{"name":"p","nodes":[{"id":"R","kind":"reservoir"},{"id":"J","kind":"junction"}],
            "links":[{"id":"P","kind":"pipe","from":"R","to":"J","length_m":100,"diameter_m":0.1}],
            "scenario":{"dt_s":1,"periods":[{"duration_s":10,"flows":{"P":0.001},"velocities":{"P":1.0},"demands":{"J":0.001}}]}}"#;
        let (net, sc) = parse_network(text).unwrap();
        let b = mbar_travel_time(&net, &sc, &IoPlacement::new(&[("R", 1.0)], &["J"])).unwrap();
        assert_eq!(b.steps, 100);
    }

    #[test]
    fn cycle_and_unreachable_are_errors() {
        let text = r#"{"name":"c","nodes":[{"id":"A","kind":"junction"},{"id":"B","kind":"junction"},{"id":"C","kind":"junction"}],
            "links":[{"id":"AB","kind":"pump","from":"A","to":"B"},{"id":"BA","kind":"valve","from":"B","to":"A"}],
            "scenario":{"dt_s":1,"periods":[{"duration_s":1,"flows":{"AB":1.0,"BA":1.0}}]}}"#;
        let (net, sc) = parse_network(text).unwrap();
        let err = mbar_travel_time(&net, &sc, &IoPlacement::new(&[("A", 1.0)], &["B"])).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        let err = mbar_travel_time(&net, &sc, &IoPlacement::new(&[("A", 1.0)], &["C"])).unwrap_err();
        assert!(err.to_string().contains("not reachable"), "{err}");
    }
}
