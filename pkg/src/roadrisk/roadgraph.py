"""Directed road-network data model and its CSV interchange format.

Nodes are intersections or dead ends, edges are directed road segments.  A
two-way road appears as two edges, exactly as drivable OSM extracts export
it; nothing here ever synthesizes reverse edges.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    CsvFormatError,
    DuplicateNodeId,
    IndexOutOfRange,
    InvalidRecord,
    SelfLoop,
    UnknownEndpoint,
)

NODE_COLUMNS = ("id", "lat", "lon", "highway", "street_count")
EDGE_COLUMNS = ("u", "v", "highway", "length", "bridge", "lanes", "oneway",
                "maxspeed", "access", "tunnel", "junction")
EDGE_CATEGORICAL = ("highway", "bridge", "lanes", "maxspeed", "access", "tunnel", "junction")

_TRUE = {"true", "yes", "1", "-1", "reverse"}
_FALSE = {"false", "no", "0", ""}


@dataclass(frozen=True)
class NodeRecord:
    id: int
    lat: float
    lon: float
    highway: Optional[str] = None
    street_count: int = 0


@dataclass(frozen=True)
class EdgeRecord:
    u: int
    v: int
    highway: Optional[str] = None
    length: float = 0.0
    bridge: Optional[str] = None
    lanes: Optional[str] = None
    oneway: bool = False
    maxspeed: Optional[str] = None
    access: Optional[str] = None
    tunnel: Optional[str] = None
    junction: Optional[str] = None


@dataclass(frozen=True, eq=False)
class RoadGraph:
    """Validated, immutable road graph.

    Node index ``i`` is the position of the i-th input record.  ``edge_index``
    holds dense (source, target) node indices per edge; ``index_of`` maps the
    external node id to its dense index.
    """

    nodes: tuple[NodeRecord, ...]
    edges: tuple[EdgeRecord, ...]
    in_adjacency: tuple[tuple[int, ...], ...]
    out_adjacency: tuple[tuple[int, ...], ...]
    index_of: dict
    edge_index: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoadGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    __hash__ = None

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def coords(self) -> np.ndarray:
        """N x 2 array of (lat, lon)."""
        return np.array([(n.lat, n.lon) for n in self.nodes], dtype=np.float64).reshape(-1, 2)

    def with_coords(self, latlon: np.ndarray) -> "RoadGraph":
        """Same topology and attributes, new node coordinates (no range check)."""
        nodes = tuple(NodeRecord(n.id, float(lat), float(lon), n.highway, n.street_count)
                      for n, (lat, lon) in zip(self.nodes, np.asarray(latlon)))
        return RoadGraph(nodes, self.edges, self.in_adjacency, self.out_adjacency,
                         self.index_of, self.edge_index)


def build_graph(nodes: Iterable[NodeRecord], edges: Iterable[EdgeRecord]) -> RoadGraph:
    nodes = tuple(nodes)
    edges = tuple(edges)
    index_of: dict[int, int] = {}
    for i, n in enumerate(nodes):
        if n.id in index_of:
            raise DuplicateNodeId(f"node record {i}: id {n.id} already used by record {index_of[n.id]}")
        if not (math.isfinite(n.lat) and -90.0 <= n.lat <= 90.0):
            raise InvalidRecord(f"node record {i}: latitude {n.lat} outside [-90, 90]")
        if not (math.isfinite(n.lon) and -180.0 <= n.lon <= 180.0):
            raise InvalidRecord(f"node record {i}: longitude {n.lon} outside [-180, 180]")
        if n.street_count < 0:
            raise InvalidRecord(f"node record {i}: negative street_count {n.street_count}")
        index_of[n.id] = i

    ins: list[list[int]] = [[] for _ in nodes]
    outs: list[list[int]] = [[] for _ in nodes]
    pairs = np.empty((len(edges), 2), dtype=np.int64)
    for k, e in enumerate(edges):
        for end in (e.u, e.v):
            if end not in index_of:
                raise UnknownEndpoint(f"edge record {k}: endpoint {end} is not a node id")
        if e.u == e.v:
            raise SelfLoop(f"edge record {k}: self-loop on node {e.u}")
        if not (math.isfinite(e.length) and e.length >= 0):
            raise InvalidRecord(f"edge record {k}: length {e.length} must be finite and >= 0")
        s, t = index_of[e.u], index_of[e.v]
        outs[s].append(k)
        ins[t].append(k)
        pairs[k] = (s, t)
    pairs.setflags(write=False)
    return RoadGraph(nodes, edges, tuple(map(tuple, ins)), tuple(map(tuple, outs)), index_of, pairs)


def _check_index(g: RoadGraph, v: int) -> None:
    if not 0 <= v < g.num_nodes:
        raise IndexOutOfRange(f"node index {v} outside [0, {g.num_nodes})")


def in_neighbors(g: RoadGraph, v: int) -> list[tuple[int, int]]:
    """(source node index, edge index) for every edge ending at ``v``, in insertion order."""
    _check_index(g, v)
    return [(int(g.edge_index[k, 0]), k) for k in g.in_adjacency[v]]


def out_neighbors(g: RoadGraph, v: int) -> list[tuple[int, int]]:
    _check_index(g, v)
    return [(int(g.edge_index[k, 1]), k) for k in g.out_adjacency[v]]


def road_neighbors(g: RoadGraph, v: int) -> list[int]:
    """Distinct nodes joined to ``v`` by an edge in either direction, first-seen order."""
    _check_index(g, v)
    seen: dict[int, None] = {}
    for k in g.in_adjacency[v]:
        seen.setdefault(int(g.edge_index[k, 0]))
    for k in g.out_adjacency[v]:
        seen.setdefault(int(g.edge_index[k, 1]))
    return list(seen)


# --- CSV interchange -------------------------------------------------------

def _opt(value: str) -> Optional[str]:
    return value if value != "" else None


def _fmt_opt(value: Optional[str]) -> str:
    return "" if value is None else value


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _reader(stream, required: Sequence[str], label: str) -> csv.DictReader:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise CsvFormatError(f"{label}: empty file, header row required")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise CsvFormatError(f"{label}: missing column(s) {', '.join(repr(c) for c in missing)}")
    return reader


def read_nodes_csv(stream, label: str = "nodes.csv") -> list[NodeRecord]:
    out = []
    for row in _reader(stream, NODE_COLUMNS, label):
        line = len(out) + 2
        try:
            out.append(NodeRecord(
                id=int(row["id"]),
                lat=float(row["lat"]),
                lon=float(row["lon"]),
                highway=_opt(row["highway"]),
                street_count=int(row["street_count"]) if row["street_count"] != "" else 0,
            ))
        except (TypeError, ValueError) as exc:
            raise CsvFormatError(f"{label}:{line}: {exc}") from exc
    return out


def read_edges_csv(stream, label: str = "edges.csv") -> list[EdgeRecord]:
    out = []
    for row in _reader(stream, EDGE_COLUMNS, label):
        line = len(out) + 2
        try:
            out.append(EdgeRecord(
                u=int(row["u"]),
                v=int(row["v"]),
                length=float(row["length"]) if row["length"] != "" else 0.0,
                oneway=parse_bool(row["oneway"]),
                **{c: _opt(row[c]) for c in EDGE_CATEGORICAL},
            ))
        except (TypeError, ValueError) as exc:
            raise CsvFormatError(f"{label}:{line}: {exc}") from exc
    return out


def nodes_to_csv(nodes: Iterable[NodeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(NODE_COLUMNS)
    for n in nodes:
        w.writerow([n.id, repr(float(n.lat)), repr(float(n.lon)), _fmt_opt(n.highway), n.street_count])
    return buf.getvalue()


def edges_to_csv(edges: Iterable[EdgeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EDGE_COLUMNS)
    for e in edges:
        w.writerow([e.u, e.v, _fmt_opt(e.highway), repr(float(e.length)), _fmt_opt(e.bridge),
                    _fmt_opt(e.lanes), "true" if e.oneway else "false", _fmt_opt(e.maxspeed),
                    _fmt_opt(e.access), _fmt_opt(e.tunnel), _fmt_opt(e.junction)])
    return buf.getvalue()


def serialize(g: RoadGraph) -> tuple[str, str]:
    """(nodes CSV text, edges CSV text); byte-stable for identical graphs."""
    return nodes_to_csv(g.nodes), edges_to_csv(g.edges)


def parse(nodes_text: str, edges_text: str) -> RoadGraph:
    return build_graph(read_nodes_csv(io.StringIO(nodes_text)), read_edges_csv(io.StringIO(edges_text)))


def load_graph(node_csv: str | Path, edge_csv: str | Path) -> RoadGraph:
    with open(node_csv, newline="", encoding="utf-8") as fn, open(edge_csv, newline="", encoding="utf-8") as fe:
        return build_graph(read_nodes_csv(fn, str(node_csv)), read_edges_csv(fe, str(edge_csv)))


def save_graph(g: RoadGraph, node_csv: str | Path, edge_csv: str | Path) -> None:
    nodes_text, edges_text = serialize(g)
    Path(node_csv).write_text(nodes_text, encoding="utf-8")
    Path(edge_csv).write_text(edges_text, encoding="utf-8")
