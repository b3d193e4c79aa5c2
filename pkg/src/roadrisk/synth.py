"""Synthetic road networks with a planted, geometry-dependent accident risk.

The network is a jittered grid of ``grid_w x grid_h`` intersections joined
by two-way streets, with optional diagonal shortcuts that create sharp
turns.  Whole grid lines share a road class, and a fixed subset of classes
counts as "major".  Each node's accident probability is

    logistic(bias + sharp * (pi - straightness_v) + deg * street_count_v + hwy * [major road incident])

where straightness_v is the smallest straightness component of the angular
summaries of the edges ending at v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import BadSpec
from .geometry import angular_summary, angle_set, haversine
from .ingest import AccidentRecord
from .numkernel import make_rng
from .roadgraph import EdgeRecord, NodeRecord, RoadGraph, build_graph

ROAD_CLASSES = ("residential", "tertiary", "secondary", "primary", "motorway_link")
ROAD_CLASS_PROBS = (0.45, 0.2, 0.15, 0.12, 0.08)
MAJOR_CLASSES = frozenset({"primary", "motorway_link"})
NODE_TAGS = (None, None, None, "traffic_signals", "stop", "crossing")

_CLASS_ATTRS = {
    "residential": ("1", "25 mph"),
    "tertiary": ("2", "30 mph"),
    "secondary": ("2", "35 mph"),
    "primary": ("3", "45 mph"),
    "motorway_link": ("2", "50 mph"),
}

_EPOCH = datetime(2022, 1, 1)


@dataclass(frozen=True)
class SynthSpec:
    grid_w: int = 20
    grid_h: int = 20
    jitter: float = 0.15
    diag_prob: float = 0.15
    seed: int = 7
    risk_weights: tuple = (-6.5, 1.0, 0.3, 3.0)
    block_deg: float = 0.001
    origin: tuple = (41.85, -87.65)
    accidents_per_node: float = 1.0
    severity_tilt: float = 0.6

    def validate(self) -> None:
        if self.grid_w < 2 or self.grid_h < 2:
            raise BadSpec(f"grid must be at least 2x2, got {self.grid_w}x{self.grid_h}")
        for name in ("jitter", "diag_prob"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise BadSpec(f"{name} must lie in [0, 1], got {val}")
        if self.jitter >= 0.5:
            raise BadSpec("jitter must stay below 0.5 so intersections cannot coincide")
        if len(self.risk_weights) != 4:
            raise BadSpec("risk_weights must be (bias, sharp, deg, hwy)")
        if not self.block_deg > 0:
            raise BadSpec("block_deg must be positive")
        lat0, lon0 = self.origin
        if not (-80 <= lat0 and lat0 + self.grid_h * self.block_deg <= 80
                and -180 <= lon0 and lon0 + self.grid_w * self.block_deg <= 180):
            raise BadSpec("grid extends outside valid coordinates")


@dataclass
class SynthResult:
    graph: RoadGraph
    accidents: list
    risk: np.ndarray = field(repr=False)
    planted: dict = field(repr=False)


def node_straightness(g: RoadGraph) -> np.ndarray:
    """Per node, the minimum straightness over the angular summaries of its in-edges (pi if none)."""
    out = np.full(g.num_nodes, math.pi)
    for v in range(g.num_nodes):
        for k in g.in_adjacency[v]:
            out[v] = min(out[v], angular_summary(angle_set(g, k)).straightness)
    return out


def _build(spec: SynthSpec, rng: np.random.Generator) -> tuple[RoadGraph, np.ndarray]:
    w, h, c = spec.grid_w, spec.grid_h, spec.block_deg
    lat0, lon0 = spec.origin

    def nid(i: int, j: int) -> int:
        return j * w + i

    row_class = rng.choice(len(ROAD_CLASSES), size=h, p=ROAD_CLASS_PROBS)
    col_class = rng.choice(len(ROAD_CLASSES), size=w, p=ROAD_CLASS_PROBS)
    offsets = rng.uniform(-spec.jitter, spec.jitter, size=(h, w, 2)) * c
    tags = rng.integers(0, len(NODE_TAGS), size=(h, w))

    pairs: list[tuple[int, int, str]] = []
    for j in range(h):
        for i in range(w - 1):
            pairs.append((nid(i, j), nid(i + 1, j), ROAD_CLASSES[row_class[j]]))
    for i in range(w):
        for j in range(h - 1):
            pairs.append((nid(i, j), nid(i, j + 1), ROAD_CLASSES[col_class[i]]))
    diag_draw = rng.random(size=(h - 1, w - 1))
    diag_dir = rng.integers(0, 2, size=(h - 1, w - 1))
    for j in range(h - 1):
        for i in range(w - 1):
            if diag_draw[j, i] < spec.diag_prob:
                if diag_dir[j, i]:
                    pairs.append((nid(i, j), nid(i + 1, j + 1), "residential"))
                else:
                    pairs.append((nid(i + 1, j), nid(i, j + 1), "residential"))
    bridge_draw = rng.random(size=len(pairs))

    coords = {}
    for j in range(h):
        for i in range(w):
            coords[nid(i, j)] = (lat0 + j * c + offsets[j, i, 0], lon0 + i * c + offsets[j, i, 1])
    degree = np.zeros(w * h, dtype=np.int64)
    for a, b, _ in pairs:
        degree[a] += 1
        degree[b] += 1

    nodes = [NodeRecord(nid(i, j), coords[nid(i, j)][0], coords[nid(i, j)][1],
                        NODE_TAGS[tags[j, i]], int(degree[nid(i, j)]))
             for j in range(h) for i in range(w)]
    edges = []
    major = np.zeros(w * h, dtype=bool)
    for k, (a, b, cls) in enumerate(pairs):
        lanes, maxspeed = _CLASS_ATTRS[cls]
        length = haversine(coords[a], coords[b])
        bridge = "yes" if bridge_draw[k] < 0.02 else None
        for u, v in ((a, b), (b, a)):
            edges.append(EdgeRecord(u, v, cls, length, bridge, lanes, False, maxspeed, None, None, None))
        if cls in MAJOR_CLASSES:
            major[a] = major[b] = True
    return build_graph(nodes, edges), major


def generate(spec: SynthSpec) -> SynthResult:
    """Deterministic graph plus accident records for ``spec``."""
    spec.validate()
    rng = make_rng(spec.seed)
    g, major = _build(spec, rng)
    straight = node_straightness(g)
    street_count = np.array([n.street_count for n in g.nodes], dtype=np.float64)
    b0, b_sharp, b_deg, b_hwy = spec.risk_weights
    score = b0 + b_sharp * (math.pi - straight) + b_deg * street_count + b_hwy * major
    risk = 1.0 / (1.0 + np.exp(-score))

    hit = rng.random(g.num_nodes) < risk
    extra = rng.poisson(spec.accidents_per_node, size=g.num_nodes)
    levels = np.arange(1, 5, dtype=np.float64)
    accidents = []
    for v in np.flatnonzero(hit):
        node = g.nodes[v]
        logits = spec.severity_tilt * score[v] * (levels - 2.5)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        for _ in range(1 + int(extra[v])):
            sev = int(rng.choice(4, p=p)) + 1
            dlat, dlon = rng.uniform(-0.03, 0.03, size=2) * spec.block_deg
            ts = _EPOCH + timedelta(minutes=int(rng.integers(0, 365 * 24 * 60)))
            accidents.append(AccidentRecord(node.lat + dlat, node.lon + dlon, sev, ts.isoformat()))
    planted = {"straightness": straight, "street_count": street_count, "major": major,
               "score": score}
    return SynthResult(g, accidents, risk, planted)
