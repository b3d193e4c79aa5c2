"""Raw node/edge/accident records to an encoded, labeled, split dataset."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import container
from .errors import BadRatios, CorruptFile, CsvFormatError, EmptyGraph, InvalidRecord
from .geometry import GridIndex, edge_directions, edge_summaries, haversine
from .roadgraph import RoadGraph

MISSING = "__missing__"
NUM_SEVERITY_CLASSES = 8
DEFAULT_RATIOS = (0.6, 0.2, 0.2)

DATASET_MAGIC = b"TAPD"
DATASET_VERSION = 1

ACCIDENT_COLUMNS = ("lat", "lon", "severity", "timestamp")

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)")


@dataclass(frozen=True)
class AccidentRecord:
    lat: float
    lon: float
    severity: int
    timestamp: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.severity <= 7:
            raise InvalidRecord(f"severity {self.severity} outside 1..7")
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise InvalidRecord(f"accident coordinates ({self.lat}, {self.lon}) out of range")


def read_accidents_csv(stream, label: str = "accidents.csv") -> list[AccidentRecord]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise CsvFormatError(f"{label}: empty file, header row required")
    missing = [c for c in ACCIDENT_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise CsvFormatError(f"{label}: missing column(s) {', '.join(repr(c) for c in missing)}")
    out = []
    for row in reader:
        line = len(out) + 2
        try:
            out.append(AccidentRecord(float(row["lat"]), float(row["lon"]),
                                      int(row["severity"]), row["timestamp"]))
        except (TypeError, ValueError) as exc:
            raise CsvFormatError(f"{label}:{line}: {exc}") from exc
    return out


def load_accidents(path: str | Path) -> list[AccidentRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_accidents_csv(fh, str(path))


def accidents_to_csv(accidents: Iterable[AccidentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ACCIDENT_COLUMNS)
    for a in accidents:
        w.writerow([repr(float(a.lat)), repr(float(a.lon)), a.severity, a.timestamp])
    return buf.getvalue()


# --- feature encoding -----------------------------------------------------

def parse_numeric(text: Optional[str]) -> float:
    """First number in an OSM free-text value ("30 mph" -> 30, "2;3" -> 2); NaN if none."""
    if text is None:
        return math.nan
    m = _NUMBER.search(text)
    return float(m.group()) if m else math.nan


def _categorical_block(name: str, values: Sequence[Optional[str]]) -> tuple[list[str], np.ndarray]:
    cats = sorted({v for v in values if v is not None} | {MISSING})
    col = {c: j for j, c in enumerate(cats)}
    out = np.zeros((len(values), len(cats)))
    for i, v in enumerate(values):
        out[i, col[MISSING if v is None else v]] = 1.0
    return [f"{name}={c}" for c in cats], out


def _boolean_block(name: str, values: Sequence[bool]) -> tuple[list[str], np.ndarray]:
    out = np.zeros((len(values), 2))
    out[np.arange(len(values)), np.asarray(values, dtype=np.int64)] = 1.0
    return [f"{name}=false", f"{name}=true"], out


@dataclass
class _Encoded:
    names: list[str]
    matrix: np.ndarray
    numeric: list[str]


def _assemble(blocks: dict[str, tuple[list[str], np.ndarray]], numeric: dict[str, np.ndarray],
              nrows: int) -> _Encoded:
    parts = dict(blocks)
    for name, col in numeric.items():
        parts[name] = ([name], np.asarray(col, dtype=np.float64).reshape(-1, 1))
    names: list[str] = []
    mats = []
    for key in sorted(parts):
        n, m = parts[key]
        names.extend(n)
        mats.append(m)
    matrix = np.hstack(mats) if mats else np.zeros((nrows, 0))
    return _Encoded(names, matrix.reshape(nrows, len(names)), sorted(numeric))


def _zscore(enc: _Encoded, rows: np.ndarray, prefix: str, stats: dict) -> None:
    for name in enc.numeric:
        j = enc.names.index(name)
        col = enc.matrix[:, j]
        fit = col[rows]
        fit = fit[~np.isnan(fit)]
        mean = float(fit.mean()) if fit.size else 0.0
        std = float(fit.std()) if fit.size else 0.0
        if not std > 0.0:
            std = 1.0
        col = np.where(np.isnan(col), mean, col)
        enc.matrix[:, j] = (col - mean) / std
        stats[f"{prefix}{name}"] = {"mean": mean, "std": std}


def encode_features(g: RoadGraph, train_mask: Optional[np.ndarray] = None):
    """One-hot categorical columns plus z-scored numeric columns.

    Returns ``(node_features, edge_features, feature_names, stats)`` where
    feature_names is ``{"node": [...], "edge": [...]}``.  Every string-valued
    categorical gets an explicit ``__missing__`` column.  Blocks are ordered
    alphabetically by feature name, categories alphabetically within a block.
    Numeric statistics come from training nodes and from edges whose target
    is a training node (all rows when ``train_mask`` is None); unparseable
    numeric values are imputed with the training mean, i.e. 0 after scaling.
    """
    n, e = g.num_nodes, g.num_edges
    nodes, edges = g.nodes, g.edges
    node_enc = _assemble(
        {"highway": _categorical_block("highway", [x.highway for x in nodes])},
        {"street_count": np.array([x.street_count for x in nodes], dtype=np.float64)},
        n,
    )
    cat_blocks = {c: _categorical_block(c, [getattr(x, c) for x in edges])
                  for c in ("access", "bridge", "highway", "junction", "lanes", "maxspeed", "tunnel")}
    cat_blocks["oneway"] = _boolean_block("oneway", [x.oneway for x in edges])
    edge_enc = _assemble(
        cat_blocks,
        {
            "length": np.array([x.length for x in edges], dtype=np.float64),
            "lanes_numeric": np.array([parse_numeric(x.lanes) for x in edges], dtype=np.float64),
            "maxspeed_numeric": np.array([parse_numeric(x.maxspeed) for x in edges], dtype=np.float64),
        },
        e,
    )
    if train_mask is None:
        node_rows = np.ones(n, dtype=bool)
    else:
        node_rows = np.asarray(train_mask, dtype=bool)
    edge_rows = node_rows[g.edge_index[:, 1]] if e else np.zeros(0, dtype=bool)
    stats: dict = {}
    _zscore(node_enc, node_rows, "node.", stats)
    _zscore(edge_enc, edge_rows, "edge.", stats)
    return node_enc.matrix, edge_enc.matrix, {"node": node_enc.names, "edge": edge_enc.names}, stats


# --- labels ---------------------------------------------------------------

def severity_class(mean_severity: float) -> int:
    """Bucket a mean accident severity into classes 1..7 with interval 0.5.

    1.0-1.49 -> 1, 1.5-1.99 -> 2, ..., 4.0 and above -> 7.  Class 0 is
    reserved for nodes without accidents and is never returned here.
    """
    return min(7, max(1, math.floor(2.0 * mean_severity) - 1))


def _labels_from_assignment(num_nodes: int, assigned: Sequence[int],
                            accidents: Sequence[AccidentRecord]) -> tuple[np.ndarray, np.ndarray]:
    total = np.zeros(num_nodes)
    count = np.zeros(num_nodes, dtype=np.int64)
    for node, acc in zip(assigned, accidents):
        total[node] += acc.severity
        count[node] += 1
    occurrence = (count > 0).astype(np.int64)
    severity = np.zeros(num_nodes, dtype=np.int64)
    for v in np.flatnonzero(count):
        severity[v] = severity_class(total[v] / count[v])
    return occurrence, severity


def assign_accidents(g: RoadGraph, accidents: Sequence[AccidentRecord],
                     index: Optional[GridIndex] = None) -> tuple[np.ndarray, np.ndarray]:
    """Map each accident to its nearest node; return (occurrence, severity class) per node."""
    if g.num_nodes == 0:
        raise EmptyGraph("cannot assign accidents to an empty graph")
    if index is None:
        index = GridIndex.from_graph(g)
    assigned = [index.nearest((a.lat, a.lon)) for a in accidents]
    return _labels_from_assignment(g.num_nodes, assigned, accidents)


def assign_accidents_bruteforce(g: RoadGraph, accidents: Sequence[AccidentRecord]):
    if g.num_nodes == 0:
        raise EmptyGraph("cannot assign accidents to an empty graph")
    coords = g.coords()
    assigned = []
    for a in accidents:
        d = [haversine((a.lat, a.lon), c) for c in coords]
        assigned.append(int(np.argmin(d)))
    return _labels_from_assignment(g.num_nodes, assigned, accidents)


# --- split ----------------------------------------------------------------

def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [math.floor(x) for x in exact]
    short = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def stratified_split(labels: Sequence[int], ratios: Sequence[float] = DEFAULT_RATIOS,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class shuffled train/val/test masks.

    Classes are visited in ascending label order and shuffled with a single
    PCG64 stream seeded by ``seed``.  Classes with fewer than three members
    go entirely to train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    masks = [np.zeros(labels.shape[0], dtype=bool) for _ in range(3)]
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 3:
            masks[0][members] = True
            continue
        members = rng.permutation(members)
        counts = _largest_remainder(members.size, ratios)
        start = 0
        for mask, c in zip(masks, counts):
            mask[members[start:start + c]] = True
            start += c
    return masks[0], masks[1], masks[2]


# --- dataset --------------------------------------------------------------

@dataclass
class Dataset:
    node_features: np.ndarray
    edge_features: np.ndarray
    edge_ang: np.ndarray
    edge_dir: np.ndarray
    edge_index: np.ndarray
    labels_occurrence: np.ndarray
    labels_severity: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    feature_names: dict = field(default_factory=dict)
    normalization_stats: dict = field(default_factory=dict)
    seed: int = 0
    ratios: tuple = DEFAULT_RATIOS
    neighborhood: str = "all"

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[0]

    def labels(self, task: str) -> np.ndarray:
        if task == "occurrence":
            return self.labels_occurrence
        if task == "severity":
            return self.labels_severity
        raise ValueError(f"unknown task {task!r}")

    def validate(self) -> None:
        n, e = self.num_nodes, self.num_edges
        rows = {"labels_occurrence": (self.labels_occurrence, n), "labels_severity": (self.labels_severity, n),
                "train_mask": (self.train_mask, n), "val_mask": (self.val_mask, n),
                "test_mask": (self.test_mask, n), "edge_features": (self.edge_features, e),
                "edge_ang": (self.edge_ang, e), "edge_dir": (self.edge_dir, e)}
        for name, (arr, want) in rows.items():
            if arr.shape[0] != want:
                raise InvalidRecord(f"{name} has {arr.shape[0]} rows, expected {want}")
        cover = self.train_mask.astype(int) + self.val_mask.astype(int) + self.test_mask.astype(int)
        if not np.all(cover == 1):
            raise InvalidRecord("train/val/test masks must be disjoint and cover every node")
        if not np.array_equal(self.labels_severity > 0, self.labels_occurrence == 1):
            raise InvalidRecord("severity class must be positive exactly where occurrence is 1")

    def to_bytes(self) -> bytes:
        return container.pack(DATASET_MAGIC, DATASET_VERSION, self._header(), self._arrays())

    def _header(self) -> dict:
        return {
            "kind": "dataset",
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "feature_names": self.feature_names,
            "normalization_stats": self.normalization_stats,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "neighborhood": self.neighborhood,
        }

    def _arrays(self) -> dict:
        return {
            "node_features": self.node_features,
            "edge_features": self.edge_features,
            "edge_ang": self.edge_ang,
            "edge_dir": self.edge_dir,
            "edge_index": self.edge_index,
            "labels_occurrence": self.labels_occurrence,
            "labels_severity": self.labels_severity,
            "train_mask": self.train_mask,
            "val_mask": self.val_mask,
            "test_mask": self.test_mask,
        }

    def checksum(self) -> int:
        return container.stored_crc(self.to_bytes())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def build_dataset(g: RoadGraph, accidents: Sequence[AccidentRecord], seed: int = 0,
                  ratios: Sequence[float] = DEFAULT_RATIOS, neighborhood: str = "all") -> Dataset:
    occurrence, severity = assign_accidents(g, accidents)
    train, val, test = stratified_split(occurrence, ratios, seed)
    node_x, edge_x, names, stats = encode_features(g, train)
    ds = Dataset(
        node_features=node_x,
        edge_features=edge_x,
        edge_ang=edge_summaries(g, neighborhood),
        edge_dir=edge_directions(g),
        edge_index=np.array(g.edge_index, dtype=np.int64).reshape(-1, 2),
        labels_occurrence=occurrence,
        labels_severity=severity,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        feature_names=names,
        normalization_stats=stats,
        seed=int(seed),
        ratios=tuple(float(r) for r in ratios),
        neighborhood=neighborhood,
    )
    ds.validate()
    return ds


def save_dataset(d: Dataset, path: str | Path) -> bytes:
    return container.write(path, DATASET_MAGIC, DATASET_VERSION, d._header(), d._arrays())


def dataset_from_bytes(data: bytes) -> Dataset:
    header, arrays = container.unpack(data, DATASET_MAGIC, DATASET_VERSION)
    return _dataset_from_parts(header, arrays)


def load_dataset(path: str | Path) -> Dataset:
    header, arrays = container.read(path, DATASET_MAGIC, DATASET_VERSION)
    return _dataset_from_parts(header, arrays)


def _dataset_from_parts(header: dict, arrays: dict) -> Dataset:
    try:
        ds = Dataset(
            node_features=arrays["node_features"],
            edge_features=arrays["edge_features"],
            edge_ang=arrays["edge_ang"],
            edge_dir=arrays["edge_dir"],
            edge_index=arrays["edge_index"],
            labels_occurrence=arrays["labels_occurrence"],
            labels_severity=arrays["labels_severity"],
            train_mask=arrays["train_mask"].astype(bool),
            val_mask=arrays["val_mask"].astype(bool),
            test_mask=arrays["test_mask"].astype(bool),
            feature_names=header["feature_names"],
            normalization_stats=header["normalization_stats"],
            seed=header["seed"],
            ratios=tuple(header["ratios"]),
            neighborhood=header.get("neighborhood", "all"),
        )
    except KeyError as exc:
        raise CorruptFile(f"dataset container lacks field {exc}") from exc
    ds.validate()
    return ds
