import json, math, sys
dt = 15.0
kb = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-5
vol = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0e5
# id, from, to, flow m3/s, travel steps, segments
pipes = [
    ("P10", "J10", "J11", 0.080, 3, 3),
    ("P11", "J11", "J12", 0.060, 3, 3),
    ("P12", "J12", "J13", 0.020, 3, 3),
    ("P21", "J21", "J22", 0.002, 120, 100),
    ("P22", "J22", "J23", 0.025, 3, 3),
    ("P31", "J31", "J32", 0.006, 644, 280),
    ("P110", "TK2", "J12", -0.005, 20, 20),
    ("P111", "J11", "J21", 0.015, 700, 300),
    ("P112", "J12", "J22", 0.030, 3, 3),
    ("P113", "J13", "J23", 0.015, 3, 3),
    ("P121", "J21", "J31", 0.010, 700, 300),
    ("P122", "J22", "J32", -0.003, 600, 263),
]
demands = {"J10": 0.0, "J11": 0.005, "J12": 0.005, "J13": 0.005, "J21": 0.003,
           "J22": 0.010, "J23": 0.040, "J31": 0.004, "J32": 0.003}
nodes = [{"id": "R9", "kind": "reservoir", "source_mg_l": 1.0}]
nodes += [{"id": j, "kind": "junction"} for j in ["J10","J11","J12","J13","J21","J22","J23","J31","J32"]]
nodes.append({"id": "TK2", "kind": "tank", "volume_l": vol})
links = [{"id": "PM9", "kind": "pump", "from": "R9", "to": "J10"}]
flows = {"PM9": 0.08}
vel = {}
for pid, a, b, q, steps, seg in pipes:
    v = 0.75 if steps <= 3 else 0.5 if steps <= 20 else 0.05
    L = v * dt * steps
    d = math.sqrt(4 * abs(q) / (math.pi * v))
    links.append({"id": pid, "kind": "pipe", "from": a, "to": b, "length_m": L,
                  "diameter_m": round(d, 6), "segments": seg})
    flows[pid] = q
    vel[pid] = v
doc = {"format_version": 1, "name": "net1-style", "nodes": nodes, "links": links,
       "scenario": {"dt_s": dt, "periods": [{"duration_s": 86400.0, "flows": flows,
       "velocities": vel, "demands": demands, "decay_per_s": kb}]}}
print(json.dumps(doc, indent=2))
