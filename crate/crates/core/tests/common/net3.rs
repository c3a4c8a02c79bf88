//! Deterministic generator for a Net3-scale synthetic network.
//!
//! A layered flow DAG: two reservoirs pump into a trunk, junctions in later
//! layers draw from one or two earlier nodes, and three small tanks sit at
//! the leaves. Pipe lengths are set from a Courant number in [0.9, 1] so the
//! segment count fixes the state dimension.
//!
//! Shared by the acceptance test and the `gen_net3_scale` example.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const NET3_SEED: u64 = 3;
pub const NET3_DT: f64 = 5.0;
pub const NET3_BOOSTERS: [&str; 2] = ["J3", "J4"];
pub const NET3_SENSORS: [&str; 3] = ["J5", "J6", "J7"];

/// Sensors are wired directly below the boosters near the trunk.
const FORCED_PARENTS: [(usize, usize); 3] = [(4, 2), (5, 3), (6, 4)];
/// Pipes feeding junctions up to this index are short, so everything
/// upstream of a sensor is a few hundred samples away.
const SHORT_ZONE: usize = 6;

struct Pipe {
    from: usize,
    to: usize,
    flow: f64,
}

/// Network JSON with 97 nodes and 119 links.
pub fn net3_scale(seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_junctions: usize = 92;
    // node indices: 0..2 reservoirs, 2..94 junctions, 94..97 tanks
    let junction = |j: usize| 2 + j;
    let tank = |t: usize| 94 + t;
    let name = |i: usize| -> String {
        match i {
            0 | 1 => format!("R{}", i + 1),
            i if i < 94 => format!("J{}", i - 1),
            i => format!("TK{}", i - 93),
        }
    };

    // topology: each junction after the first two draws from one or two
    // earlier junctions within a sliding window, which keeps paths short
    let mut pipes: Vec<Pipe> = Vec::new();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); 97];
    for j in 2..n_junctions {
        let lo = j.saturating_sub(6);
        let drawn = rng.gen_range(lo..j);
        let p1 = FORCED_PARENTS.iter().find(|f| f.0 == j).map_or(drawn, |f| f.1);
        parents[junction(j)].push(junction(p1));
        if pipes.len() + (n_junctions - j) < 117 - 3 && rng.gen_bool(0.35) {
            let p2 = rng.gen_range(lo..j);
            if p2 != p1 {
                parents[junction(j)].push(junction(p2));
            }
        }
        for &p in &parents[junction(j)] {
            pipes.push(Pipe { from: p, to: junction(j), flow: 0.0 });
        }
    }
    // the two trunk junctions are joined once
    parents[junction(1)].push(junction(0));
    pipes.push(Pipe { from: junction(0), to: junction(1), flow: 0.0 });
    for t in 0..3 {
        let p = junction(n_junctions - 1 - 7 * t);
        parents[tank(t)].push(p);
        pipes.push(Pipe { from: p, to: tank(t), flow: 0.0 });
    }
    // pad with cross links until there are 117 pipes
    while pipes.len() < 117 {
        let j = rng.gen_range(10..n_junctions);
        let p = rng.gen_range(j - 6..j);
        if !parents[junction(j)].contains(&junction(p)) {
            parents[junction(j)].push(junction(p));
            pipes.push(Pipe { from: junction(p), to: junction(j), flow: 0.0 });
        }
    }

    // demands and tank filling, then flows by reverse topological sweep
    let mut demand = vec![0.0; 97];
    for j in 2..n_junctions {
        demand[junction(j)] = rng.gen_range(0.5e-3..3.0e-3);
    }
    for t in 0..3 {
        demand[tank(t)] = rng.gen_range(2.0e-3..4.0e-3);
    }
    let mut through = demand.clone();
    let order: Vec<usize> = (0..3).map(tank).chain((0..n_junctions).rev().map(junction)).collect();
    for &v in &order {
        let incoming: Vec<usize> = (0..pipes.len()).filter(|&k| pipes[k].to == v).collect();
        let weights: Vec<f64> = incoming.iter().map(|_| rng.gen_range(0.3..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&k, w) in incoming.iter().zip(&weights) {
            let q = through[v] * w / total;
            pipes[k].flow = q;
            through[pipes[k].from] += q;
        }
    }
    // the pumps split the trunk supply
    let supply = through[junction(0)];

    let mut nodes = vec![
        json!({"id": name(0), "kind": "reservoir", "source_mg_l": 1.0}),
        json!({"id": name(1), "kind": "reservoir", "source_mg_l": 0.8}),
    ];
    for j in 0..n_junctions {
        nodes.push(json!({"id": name(junction(j)), "kind": "junction"}));
    }
    for t in 0..3 {
        nodes.push(json!({"id": name(tank(t)), "kind": "tank", "volume_l": 800.0}));
    }
    let mut links = Vec::new();
    let mut flows = serde_json::Map::new();
    let mut velocities = serde_json::Map::new();
    let share = rng.gen_range(0.55..0.7);
    for (i, q) in [(0usize, supply * share), (1, supply * (1.0 - share))] {
        let id = format!("PM{}", i + 1);
        links.push(json!({"id": id, "kind": "pump", "from": name(i), "to": name(junction(0))}));
        flows.insert(id, json!(q));
    }
    for (k, p) in pipes.iter().enumerate() {
        let id = format!("P{}", k + 1);
        let v: f64 = rng.gen_range(0.3..1.0);
        let segments: usize = if p.to <= junction(SHORT_ZONE) {
            rng.gen_range(30..41)
        } else {
            rng.gen_range(165..201)
        };
        let nu: f64 = rng.gen_range(0.9..1.0);
        let length = segments as f64 * v * NET3_DT / nu;
        let diameter = (4.0 * p.flow / (std::f64::consts::PI * v)).sqrt();
        links.push(json!({
            "id": id, "kind": "pipe", "from": name(p.from), "to": name(p.to),
            "length_m": length, "diameter_m": diameter, "segments": segments,
        }));
        flows.insert(id.clone(), json!(p.flow));
        velocities.insert(id, json!(v));
    }
    let mut demands = serde_json::Map::new();
    for j in 0..n_junctions {
        demands.insert(name(junction(j)), json!(demand[junction(j)]));
    }
    json!({
        "format_version": 1,
        "name": "net3-scale",
        "nodes": nodes,
        "links": links,
        "scenario": {
            "dt_s": NET3_DT,
            "periods": [{
                "duration_s": 86400.0,
                "flows": flows,
                "velocities": velocities,
                "demands": demands,
                "decay_per_s": 1e-5
            }]
        }
    })
}
