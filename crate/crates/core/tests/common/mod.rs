//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod net3;

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use wqmor::linalg::dense_spectral_radius;
use wqmor::netmodel::{load_network, HydraulicScenario, Network};
use wqmor::wqss::{assemble, IoPlacement, LtiSystem, LtvSystem};

pub const DAG_DT: f64 = 7.0;

/// Segment count the random DAG pipes must support at Courant number <= 1.
pub const DAG_MAX_DEFAULT_SEGMENTS: usize = 3;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str, io: &IoPlacement, segments: usize) -> (Network, HydraulicScenario, LtvSystem) {
    let (net, scenario) = load_network(&fixture(name)).expect("fixture parses");
    let sys = assemble(&net, &scenario, io, segments).expect("fixture assembles");
    (net, scenario, sys)
}

pub fn three_node_io() -> IoPlacement {
    IoPlacement::new(&[("J2", 1.0)], &["TK3"])
}

pub fn net1_io() -> IoPlacement {
    IoPlacement::new(&[("J10", 1.0)], &["J22", "J23"])
}

pub fn randn<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Gaussian matrix rescaled to spectral radius `rho`.
pub fn matrix_with_radius<R: Rng>(rng: &mut R, n: usize, rho: f64) -> DMatrix<f64> {
    loop {
        let a = randn(rng, n, n);
        let r = dense_spectral_radius(&a);
        if r > 1e-6 {
            return a * (rho / r);
        }
    }
}

/// Dense random system with `ρ(A) = rho` and `D = 0`.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, n_u: usize, n_y: usize, rho: f64) -> LtiSystem {
    let a = matrix_with_radius(rng, n, rho);
    let b = randn(rng, n, n_u);
    let c = randn(rng, n_y, n);
    LtiSystem::from_dense(&a, &b, &c, &DMatrix::zeros(n_y, n_u), 1.0).expect("consistent shapes")
}

/// Random single-reservoir flow DAG with at most `max_links` links, as
/// network JSON plus an I/O placement. Pipes are long enough for
/// `DAG_MAX_DEFAULT_SEGMENTS` segments. With `unit_courant` every pipe length
/// is an exact multiple of `v Δt`, so the transport is a pure shift.
pub fn random_dag_network<R: Rng>(rng: &mut R, max_links: usize, unit_courant: bool) -> (String, IoPlacement) {
    let nj = rng.gen_range(3..=10);
    let mut edges: Vec<(usize, usize)> = (2..=nj).map(|j| (rng.gen_range(1..j), j)).collect();
    while edges.len() < max_links - 1 && rng.gen_bool(0.7) {
        let j = rng.gen_range(2..=nj);
        let p = rng.gen_range(1..j);
        if !edges.contains(&(p, j)) {
            edges.push((p, j));
        }
    }
    // flows from demands, swept from the last junction back
    let demand: Vec<f64> = (0..=nj).map(|j| if j == 0 { 0.0 } else { rng.gen_range(1e-3..5e-3) }).collect();
    let mut through = demand.clone();
    let mut flow = vec![0.0; edges.len()];
    for v in (2..=nj).rev() {
        let inc: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].1 == v).collect();
        let w: Vec<f64> = inc.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (&k, wk) in inc.iter().zip(&w) {
            flow[k] = through[v] * wk / total;
            through[edges[k].0] += flow[k];
        }
    }
    let node = |j: usize| if j == 0 { "R0".to_string() } else { format!("J{j}") };
    let mut nodes = vec![serde_json::json!({"id": "R0", "kind": "reservoir", "source_mg_l": 1.0})];
    let mut demands = serde_json::Map::new();
    for j in 1..=nj {
        nodes.push(serde_json::json!({"id": node(j), "kind": "junction"}));
        demands.insert(node(j), serde_json::json!(demand[j]));
    }
    let mut links = vec![serde_json::json!({"id": "PM0", "kind": "pump", "from": "R0", "to": "J1"})];
    let mut flows = serde_json::Map::new();
    let mut vel = serde_json::Map::new();
    flows.insert("PM0".into(), serde_json::json!(through[1]));
    for (k, &(p, j)) in edges.iter().enumerate() {
        let id = format!("P{k}");
        let v: f64 = rng.gen_range(0.1..1.5);
        let mut pipe = serde_json::json!({
            "id": id, "kind": "pipe", "from": node(p), "to": node(j),
            "length_m": rng.gen_range(10.0..500.0f64).max(DAG_MAX_DEFAULT_SEGMENTS as f64 * v * DAG_DT),
            "diameter_m": 0.2,
        });
        if unit_courant {
            let segments = rng.gen_range(2..6);
            pipe["segments"] = serde_json::json!(segments);
            pipe["length_m"] = serde_json::json!(segments as f64 * v * DAG_DT);
        }
        links.push(pipe);
        flows.insert(id.clone(), serde_json::json!(flow[k]));
        vel.insert(id, serde_json::json!(v));
    }
    let text = serde_json::json!({
        "format_version": 1, "name": "dag", "nodes": nodes, "links": links,
        "scenario": {"dt_s": DAG_DT, "periods": [{
            "duration_s": 3598.0, "flows": flows, "velocities": vel, "demands": demands, "decay_per_s": 0.0
        }]}
    })
    .to_string();
    let boosters: Vec<String> = {
        let mut b = vec![node(1)];
        if rng.gen_bool(0.5) {
            b.push(node(rng.gen_range(2..=nj)));
        }
        b
    };
    let sensors: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| node(rng.gen_range(2..=nj))).collect();
    let b: Vec<(&str, f64)> = boosters.iter().map(|s| (s.as_str(), 1.0)).collect();
    let s: Vec<&str> = sensors.iter().map(|s| s.as_str()).collect();
    (text, IoPlacement::new(&b, &s))
}
