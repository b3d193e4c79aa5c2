"""Planar and spherical geometry for road graphs.

Angles treat (lon, lat) as planar (x, y).  Directed angles are
counterclockwise and normalised to [0, 2*pi).  Distances are haversine
great-circle metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegeneratePoint, EmptyGraph, OutOfRangeAngle
from .roadgraph import NodeRecord, RoadGraph, in_neighbors, road_neighbors

EARTH_RADIUS_M = 6_371_000.0
TWO_PI = 2.0 * math.pi
NEIGHBORHOODS = ("all", "in")


class AngularSummary(NamedTuple):
    min_angle: float
    max_angle: float
    straightness: float


class DirectionVector(NamedTuple):
    dlat: float
    dlon: float


EMPTY_SUMMARY = AngularSummary(math.pi, math.pi, math.pi)


def directed_angle(u: Sequence[float], v: Sequence[float], w: Sequence[float]) -> float:
    """Counterclockwise rotation carrying direction v-u onto direction v-w, in [0, 2*pi).

    Points are planar (x, y) pairs.
    """
    ax, ay = v[0] - u[0], v[1] - u[1]
    bx, by = v[0] - w[0], v[1] - w[1]
    if ax == 0.0 and ay == 0.0:
        raise DegeneratePoint(f"u coincides with v at {tuple(v)}")
    if bx == 0.0 and by == 0.0:
        raise DegeneratePoint(f"w coincides with v at {tuple(v)}")
    ang = math.atan2(ax * by - ay * bx, ax * bx + ay * by)
    if ang < 0.0:
        ang += TWO_PI
        if ang >= TWO_PI:
            ang = 0.0
    return ang


def _xy(node: NodeRecord) -> tuple[float, float]:
    return (node.lon, node.lat)


def angle_set(g: RoadGraph, edge: int, neighborhood: str = "all") -> list[float]:
    """Directed angles between edge (u, v) and every other road meeting at v.

    ``neighborhood="all"`` uses every distinct node joined to v in either
    direction; ``"in"`` restricts to sources of edges ending at v.  Every
    occurrence of u is excluded.  Neighbours sitting exactly on v contribute
    nothing, and if u itself sits on v the set is empty.
    """
    if neighborhood not in NEIGHBORHOODS:
        raise ValueError(f"neighborhood must be one of {NEIGHBORHOODS}, got {neighborhood!r}")
    s, t = (int(x) for x in g.edge_index[edge])
    if neighborhood == "all":
        others = road_neighbors(g, t)
    else:
        others = list(dict.fromkeys(src for src, _ in in_neighbors(g, t)))
    pu, pv = _xy(g.nodes[s]), _xy(g.nodes[t])
    if pu == pv:
        return []
    out = []
    for w in others:
        if w == s:
            continue
        pw = _xy(g.nodes[w])
        if pw == pv:
            continue
        out.append(directed_angle(pu, pv, pw))
    return out


def angular_summary(phi: Iterable[float]) -> AngularSummary:
    """(min, max, min |pi - phi|) of a set of directed angles; (pi, pi, pi) when empty."""
    phi = list(phi)
    if not phi:
        return EMPTY_SUMMARY
    for a in phi:
        if not (0.0 <= a < TWO_PI):
            raise OutOfRangeAngle(f"angle {a} outside [0, 2*pi)")
    return AngularSummary(min(phi), max(phi), min(abs(math.pi - a) for a in phi))


def edge_summaries(g: RoadGraph, neighborhood: str = "all") -> np.ndarray:
    """E x 3 matrix of angular summaries, one row per edge."""
    out = np.empty((g.num_edges, 3), dtype=np.float64)
    for k in range(g.num_edges):
        out[k] = angular_summary(angle_set(g, k, neighborhood))
    return out


def edge_direction(u: NodeRecord, v: NodeRecord) -> DirectionVector:
    return DirectionVector(v.lat - u.lat, v.lon - u.lon)


def edge_directions(g: RoadGraph) -> np.ndarray:
    """E x 2 matrix of (dlat, dlon)."""
    c = g.coords()
    if g.num_edges == 0:
        return np.zeros((0, 2))
    return c[g.edge_index[:, 1]] - c[g.edge_index[:, 0]]


def haversine(p: Sequence[float], q: Sequence[float]) -> float:
    """Great-circle distance in metres between (lat, lon) points given in degrees."""
    lat1, lon1 = math.radians(p[0]), math.radians(p[1])
    lat2, lon2 = math.radians(q[0]), math.radians(q[1])
    h = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def nearest_node_bruteforce(g: RoadGraph, p: Sequence[float]) -> int:
    """Exhaustive O(N) scan; ties go to the smallest node index."""
    if g.num_nodes == 0:
        raise EmptyGraph("cannot match a point against an empty graph")
    best, best_d = 0, math.inf
    for i, n in enumerate(g.nodes):
        d = haversine(p, (n.lat, n.lon))
        if d < best_d:
            best, best_d = i, d
    return best


@dataclass
class GridIndex:
    """Uniform lat/lon bucket index answering exact nearest-node queries.

    A ring search around the probe's cell finds a candidate; every cell that
    intersects the bounding box of the spherical cap of that radius is then
    scanned, so the answer always equals the exhaustive scan.
    """

    lats: np.ndarray
    lons: np.ndarray
    cell: float = 0.01

    def __post_init__(self) -> None:
        if len(self.lats) == 0:
            raise EmptyGraph("cannot index an empty graph")
        self._nlon = int(math.ceil(360.0 / self.cell))
        self._buckets: dict[tuple[int, int], list[int]] = {}
        for i, (la, lo) in enumerate(zip(self.lats, self.lons)):
            self._buckets.setdefault(self._key(la, lo), []).append(i)

    @classmethod
    def from_graph(cls, g: RoadGraph, cell: float = 0.01) -> "GridIndex":
        c = g.coords()
        return cls(c[:, 0].tolist(), c[:, 1].tolist(), cell)

    def _key(self, lat: float, lon: float) -> tuple[int, int]:
        return (int(math.floor(lat / self.cell)), int(math.floor((lon + 180.0) / self.cell)) % self._nlon)

    def _scan(self, p, cand: Iterable[int], best: int, best_d: float) -> tuple[int, float]:
        for i in cand:
            d = haversine(p, (self.lats[i], self.lons[i]))
            if d < best_d or (d == best_d and i < best):
                best, best_d = i, d
        return best, best_d

    def _all(self) -> Iterable[int]:
        return range(len(self.lats))

    def nearest(self, p: Sequence[float]) -> int:
        ci, cj = self._key(p[0], p[1])
        best, best_d = -1, math.inf
        visited = 0
        r = 0
        while best < 0:
            if visited > len(self._buckets):
                return self._scan(p, self._all(), -1, math.inf)[0]
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if max(abs(di), abs(dj)) != r:
                        continue
                    visited += 1
                    bucket = self._buckets.get((ci + di, (cj + dj) % self._nlon))
                    if bucket:
                        best, best_d = self._scan(p, bucket, best, best_d)
            r += 1

        # bounding box of the cap of radius best_d around p, padded by one cell
        ang = best_d / EARTH_RADIUS_M
        lat_r = math.radians(p[0])
        lat_lo = math.degrees(lat_r - ang) - self.cell
        lat_hi = math.degrees(lat_r + ang) + self.cell
        if lat_lo <= -90.0 or lat_hi >= 90.0:
            lon_span = 360.0
        else:
            s = math.sin(ang) / math.cos(lat_r)
            lon_span = 360.0 if s >= 1.0 else 2.0 * math.degrees(math.asin(s)) + 2.0 * self.cell
        i_lo = int(math.floor(lat_lo / self.cell))
        i_hi = int(math.floor(lat_hi / self.cell))
        if lon_span >= 360.0:
            ncols = self._nlon
            j_lo = 0
        else:
            j_lo = int(math.floor((p[1] - lon_span / 2.0 + 180.0) / self.cell))
            ncols = min(self._nlon, int(math.floor((p[1] + lon_span / 2.0 + 180.0) / self.cell)) - j_lo + 1)
        if (i_hi - i_lo + 1) * ncols > len(self._buckets):
            cols = None if ncols >= self._nlon else {(j_lo + k) % self._nlon for k in range(ncols)}
            cand = [i for (bi, bj), idx in self._buckets.items()
                    if i_lo <= bi <= i_hi and (cols is None or bj in cols) for i in idx]
        else:
            cand = []
            for bi in range(i_lo, i_hi + 1):
                for k in range(ncols):
                    cand.extend(self._buckets.get((bi, (j_lo + k) % self._nlon), ()))
        return self._scan(p, cand, best, best_d)[0]


def nearest_node(g: RoadGraph, p: Sequence[float], index: GridIndex | None = None) -> int:
    """Index of the node closest to (lat, lon) ``p`` by haversine distance, ties to the smallest index."""
    if g.num_nodes == 0:
        raise EmptyGraph("cannot match a point against an empty graph")
    if index is None:
        index = GridIndex.from_graph(g)
    return index.nearest(p)


def rotate_about(points: np.ndarray, center: Sequence[float], theta: float) -> np.ndarray:
    """Rotate planar points counterclockwise by ``theta`` about ``center``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    c, s = math.cos(theta), math.sin(theta)
    rel = pts - np.asarray(center, dtype=np.float64)
    out = np.empty_like(rel)
    out[:, 0] = c * rel[:, 0] - s * rel[:, 1]
    out[:, 1] = s * rel[:, 0] + c * rel[:, 1]
    return out + np.asarray(center, dtype=np.float64)


def rotate_graph_about(g: RoadGraph, v: int, theta: float) -> RoadGraph:
    """Copy of ``g`` with every node rotated about node ``v`` in the (lon, lat) plane."""
    c = g.coords()
    xy = c[:, ::-1]
    rot = rotate_about(xy, xy[v], theta)
    rot[v] = xy[v]
    return g.with_coords(rot[:, ::-1])
