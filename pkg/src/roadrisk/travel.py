"""TRAVEL network (angular + directional message passing) and two baselines.

A TRAVEL layer runs two components side by side.  For node v the angular
component computes

    h_ang(v) = ReLU(W_ang h_v + sum over in-edges (u, v) of MLP_ang(h_u || e_uv || a_uv))

and the directional component does the same with the direction vector d_uv
in place of the angular summary a_uv.  The layer output is h_ang || h_dir.
Parallel edges each contribute one summand; nodes without in-edges receive a
zero message.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import container
from .errors import ShapeMismatch
from .ingest import Dataset
from .numkernel import (
    Linear,
    Mlp,
    Param,
    check_finite,
    dropout_backward,
    dropout_forward,
    make_rng,
    relu_backward,
    relu_forward,
)

MODEL_KINDS = ("travel", "mlp", "gnn")
CHECKPOINT_MAGIC = b"TAPW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GraphInputs:
    """Everything a forward pass reads from a dataset."""

    node_features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    edge_ang: np.ndarray
    edge_dir: np.ndarray

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "GraphInputs":
        ei = np.asarray(ds.edge_index, dtype=np.int64).reshape(-1, 2)
        return cls(ds.node_features, ei[:, 0], ei[:, 1], ds.edge_features, ds.edge_ang, ds.edge_dir)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.src.shape[0]

    def validate(self) -> None:
        e = self.num_edges
        for name in ("dst", "edge_features", "edge_ang", "edge_dir"):
            if getattr(self, name).shape[0] != e:
                raise ShapeMismatch(f"{name} has {getattr(self, name).shape[0]} rows, edge list has {e}")
        if self.edge_ang.shape[1:] != (3,) or self.edge_dir.shape[1:] != (2,):
            raise ShapeMismatch("edge_ang must be E x 3 and edge_dir E x 2")
        if e and (self.src.max() >= self.num_nodes or self.dst.max() >= self.num_nodes):
            raise ShapeMismatch("edge endpoint outside node range")


def scatter_sum(values: np.ndarray, index: np.ndarray, num_rows: int) -> np.ndarray:
    out = np.zeros((num_rows, values.shape[1]), dtype=values.dtype)
    np.add.at(out, index, values)
    return out


class _Component:
    """One half of a TRAVEL layer: ReLU(W h_v + sum MLP(h_u || e_uv || geo_uv))."""

    def __init__(self, in_dim: int, edge_dim: int, geo_dim: int, hidden: int,
                 rng: Optional[np.random.Generator], name: str):
        self.in_dim = in_dim
        self.self_lin = Linear(in_dim, hidden, rng, name=f"{name}.self")
        self.msg = Mlp(in_dim + edge_dim + geo_dim, hidden, hidden, rng, name=f"{name}.msg")
        self._pre = None
        self._dst = self._src = None

    def forward(self, H: np.ndarray, g: GraphInputs, geo: np.ndarray) -> np.ndarray:
        z = np.hstack([H[g.src], g.edge_features, geo])
        messages = scatter_sum(self.msg.forward(z), g.dst, H.shape[0])
        self._pre = self.self_lin.forward(H) + messages
        self._src, self._dst = g.src, g.dst
        return relu_forward(self._pre)

    def backward(self, dOut: np.ndarray) -> np.ndarray:
        dpre = relu_backward(dOut, self._pre)
        dH = self.self_lin.backward(dpre)
        dz = self.msg.backward(dpre[self._dst])
        np.add.at(dH, self._src, dz[:, :self.in_dim])
        return dH

    def linears(self) -> list[Linear]:
        return [self.self_lin] + self.msg.linears()

    def params(self) -> list[Param]:
        return self.self_lin.params() + self.msg.params()


class TravelLayer:
    def __init__(self, in_dim: int, edge_dim: int, hidden: int,
                 rng: Optional[np.random.Generator] = None, name: str = "travel"):
        self.hidden = hidden
        self.out_dim = 2 * hidden
        self.angular = _Component(in_dim, edge_dim, 3, hidden, rng, f"{name}.ang")
        self.directional = _Component(in_dim, edge_dim, 2, hidden, rng, f"{name}.dir")

    def forward(self, H: np.ndarray, g: GraphInputs) -> np.ndarray:
        return np.hstack([self.angular.forward(H, g, g.edge_ang),
                          self.directional.forward(H, g, g.edge_dir)])

    def backward(self, dOut: np.ndarray) -> np.ndarray:
        if dOut.shape[1] != self.out_dim:
            raise ShapeMismatch(f"layer output gradient has width {dOut.shape[1]}, expected {self.out_dim}")
        return (self.angular.backward(dOut[:, :self.hidden])
                + self.directional.backward(dOut[:, self.hidden:]))

    def linears(self) -> list[Linear]:
        return self.angular.linears() + self.directional.linears()

    def params(self) -> list[Param]:
        return self.angular.params() + self.directional.params()


class MeanGnnLayer:
    """ReLU(W_self h_v + W_nbr mean_{u in N(v)} h_u); no edge attributes."""

    def __init__(self, in_dim: int, hidden: int, rng: Optional[np.random.Generator] = None,
                 name: str = "gnn"):
        self.out_dim = hidden
        self.self_lin = Linear(in_dim, hidden, rng, name=f"{name}.self")
        self.nbr_lin = Linear(in_dim, hidden, rng, bias=False, name=f"{name}.nbr")
        self._pre = None

    def forward(self, H: np.ndarray, g: GraphInputs) -> np.ndarray:
        deg = np.bincount(g.dst, minlength=H.shape[0]).astype(np.float64)
        self._inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
        mean = scatter_sum(H[g.src], g.dst, H.shape[0]) * self._inv[:, None]
        self._src, self._dst = g.src, g.dst
        self._pre = self.self_lin.forward(H) + self.nbr_lin.forward(mean)
        return relu_forward(self._pre)

    def backward(self, dOut: np.ndarray) -> np.ndarray:
        dpre = relu_backward(dOut, self._pre)
        dH = self.self_lin.backward(dpre)
        dmean = self.nbr_lin.backward(dpre) * self._inv[:, None]
        np.add.at(dH, self._src, dmean[self._dst])
        return dH

    def linears(self) -> list[Linear]:
        return [self.self_lin, self.nbr_lin]

    def params(self) -> list[Param]:
        return self.self_lin.params() + self.nbr_lin.params()


class DenseLayer:
    """ReLU(W h_v + b); the graph argument is ignored."""

    def __init__(self, in_dim: int, hidden: int, rng: Optional[np.random.Generator] = None,
                 name: str = "dense"):
        self.out_dim = hidden
        self.lin = Linear(in_dim, hidden, rng, name=name)
        self._pre = None

    def forward(self, H: np.ndarray, g: GraphInputs) -> np.ndarray:
        self._pre = self.lin.forward(H)
        return relu_forward(self._pre)

    def backward(self, dOut: np.ndarray) -> np.ndarray:
        return self.lin.backward(relu_backward(dOut, self._pre))

    def linears(self) -> list[Linear]:
        return [self.lin]

    def params(self) -> list[Param]:
        return self.lin.params()


class NodeClassifier:
    """Two message-passing (or dense) layers, each followed by dropout, then a linear head."""

    kind = "base"

    def __init__(self, layers, num_classes: int, dropout: float, rng: Optional[np.random.Generator],
                 hyper: dict):
        self.layers = layers
        self.dropout = dropout
        self.num_classes = num_classes
        self.head = Linear(layers[-1].out_dim, num_classes, rng, name="head")
        self.hyper = dict(hyper, num_classes=num_classes, dropout=dropout)
        self._masks: list[np.ndarray] = []

    def forward(self, g: GraphInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
        H = check_finite(g.node_features, "node features")
        self._masks = []
        for layer in self.layers:
            H = layer.forward(H, g)
            H, mask = dropout_forward(H, self.dropout, rng, training)
            self._masks.append(mask)
        return check_finite(self.head.forward(H), "logits")

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        d = self.head.backward(dlogits)
        for layer, mask in zip(reversed(self.layers), reversed(self._masks)):
            d = layer.backward(dropout_backward(d, mask))
        return d

    def params(self) -> list[Param]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out + self.head.params()

    def astype(self, dtype) -> "NodeClassifier":
        """Deep copy with every parameter cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for layer in clone.layers:
            for lin in layer.linears():
                lin.astype(dtype)
        clone.head.astype(dtype)
        return clone

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad[...] = 0.0

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.params()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        missing = [p.name for p in params if p.name not in state]
        if missing or len(state) != len(params):
            raise ShapeMismatch(f"checkpoint parameters do not match model (missing {missing[:3]})")
        for p in params:
            src = np.asarray(state[p.name])
            if src.shape != p.value.shape:
                raise ShapeMismatch(f"{p.name}: checkpoint shape {src.shape} != model shape {p.value.shape}")
            p.value[...] = src


class TravelModel(NodeClassifier):
    kind = "travel"

    def __init__(self, in_dim: int, edge_dim: int, num_classes: int, hidden: int = 16,
                 dropout: float = 0.5, rng: Optional[np.random.Generator] = None):
        layers = [TravelLayer(in_dim, edge_dim, hidden, rng, "layer1"),
                  TravelLayer(2 * hidden, edge_dim, hidden, rng, "layer2")]
        super().__init__(layers, num_classes, dropout, rng,
                         {"in_dim": in_dim, "edge_dim": edge_dim, "hidden": hidden})


class MlpModel(NodeClassifier):
    kind = "mlp"

    def __init__(self, in_dim: int, edge_dim: int, num_classes: int, hidden: int = 16,
                 dropout: float = 0.5, rng: Optional[np.random.Generator] = None):
        layers = [DenseLayer(in_dim, hidden, rng, "layer1"), DenseLayer(hidden, hidden, rng, "layer2")]
        super().__init__(layers, num_classes, dropout, rng,
                         {"in_dim": in_dim, "edge_dim": edge_dim, "hidden": hidden})


class MeanGnnModel(NodeClassifier):
    kind = "gnn"

    def __init__(self, in_dim: int, edge_dim: int, num_classes: int, hidden: int = 16,
                 dropout: float = 0.5, rng: Optional[np.random.Generator] = None):
        layers = [MeanGnnLayer(in_dim, hidden, rng, "layer1"), MeanGnnLayer(hidden, hidden, rng, "layer2")]
        super().__init__(layers, num_classes, dropout, rng,
                         {"in_dim": in_dim, "edge_dim": edge_dim, "hidden": hidden})


_KINDS = {"travel": TravelModel, "mlp": MlpModel, "gnn": MeanGnnModel}


def build_model(kind: str, in_dim: int, edge_dim: int, num_classes: int, hidden: int = 16,
                dropout: float = 0.5, rng: Optional[np.random.Generator] = None) -> NodeClassifier:
    if kind not in _KINDS:
        raise ValueError(f"unknown model {kind!r}; choose from {MODEL_KINDS}")
    return _KINDS[kind](in_dim, edge_dim, num_classes, hidden, dropout, rng)


def model_for_dataset(kind: str, ds: Dataset, num_classes: int, hidden: int = 16,
                      dropout: float = 0.5, seed: int = 0) -> NodeClassifier:
    return build_model(kind, ds.node_features.shape[1], ds.edge_features.shape[1], num_classes,
                       hidden, dropout, make_rng(seed))


def model_forward(model: NodeClassifier, ds: Dataset | GraphInputs, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    g = ds if isinstance(ds, GraphInputs) else GraphInputs.from_dataset(ds)
    return model.forward(g, training, rng)


# --- checkpoints ----------------------------------------------------------

def save_checkpoint(model: NodeClassifier, path: str | Path, extra: Optional[dict] = None) -> bytes:
    header = {"kind": "checkpoint", "model": model.kind, "hyper": model.hyper,
              "params": [p.name for p in model.params()]}
    if extra:
        header["extra"] = extra
    return container.write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, model.state())


def load_checkpoint(path: str | Path) -> tuple[NodeClassifier, dict]:
    header, arrays = container.read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    h = header["hyper"]
    model = build_model(header["model"], h["in_dim"], h["edge_dim"], h["num_classes"],
                        h["hidden"], h["dropout"])
    model.load_state(arrays)
    return model, header
