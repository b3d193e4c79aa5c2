"""Graph builders and gradient-check helpers shared by the test modules."""

import numpy as np

from roadrisk.numkernel import assign_flat, cross_entropy, flatten, grad_check
from roadrisk.roadgraph import EdgeRecord, NodeRecord, build_graph


def edge(u, v, highway="residential", length=10.0, **kw):
    fields = dict(bridge=None, lanes=None, oneway=False, maxspeed=None, access=None, tunnel=None,
                  junction=None)
    fields.update(kw)
    return EdgeRecord(u, v, highway, length, **fields)


def two_way(pairs, **kw):
    out = []
    for a, b in pairs:
        out.append(edge(a, b, **kw))
        out.append(edge(b, a, **kw))
    return out


def random_graph(rng, n, p_edge=0.3, scale=0.01, lat0=40.0, lon0=-75.0):
    """Random directed graph with planar-spread coordinates and no self-loops."""
    nodes = [NodeRecord(i, lat0 + scale * rng.random(), lon0 + scale * rng.random(),
                        rng.choice(["stop", None]), int(rng.integers(0, 5))) for i in range(n)]
    edges = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p_edge:
                edges.append(edge(u, v, highway=str(rng.choice(["primary", "residential"])),
                                  length=float(rng.uniform(5, 500)),
                                  maxspeed=str(rng.choice(["25 mph", "40", None]))))
    return build_graph(nodes, edges)


def cross_graph():
    """Right-angle 4-way cross centred at node 0 = (0, 0); node 1 south, 2 east, 3 west, 4 north."""
    coords = [(0.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0)]
    nodes = [NodeRecord(i, lat, lon, None, 0) for i, (lat, lon) in enumerate(coords)]
    return build_graph(nodes, two_way([(1, 0), (2, 0), (3, 0), (4, 0)]))


def independent_ce(logits, y):
    """Mean softmax cross-entropy written out directly; works in any float dtype."""
    z = logits - logits.max(axis=1, keepdims=True)
    return np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(y)), y])


def model_grad_error(model, g, y):
    """Max relative error of a model's backward pass against central differences of the eval-mode loss.

    Coordinates where float64 differencing is too noisy are re-estimated on a
    long-double copy of the model with an independently written loss.
    """
    params = model.params()
    model.zero_grad()
    _, dlogits = cross_entropy(model.forward(g), y)
    model.backward(dlogits)
    analytic = flatten(params, "grad").copy()
    theta0 = flatten(params).copy()
    precise = model.astype(np.longdouble)
    pparams = precise.params()

    def f(theta):
        assign_flat(params, theta)
        return cross_entropy(model.forward(g), y)[0]

    def fp(theta):
        assign_flat(pparams, theta)
        return independent_ce(precise.forward(g), y)

    try:
        return grad_check(f, analytic, theta0, f_precise=fp)
    finally:
        assign_flat(params, theta0)


def kink_margin(model, g):
    """Smallest |pre-activation| over every ReLU in an eval-mode forward pass."""
    model.forward(g)
    pres = []
    for layer in model.layers:
        for part in (layer, getattr(layer, "angular", None), getattr(layer, "directional", None)):
            if part is None:
                continue
            for obj in (part, getattr(part, "msg", None)):
                if obj is not None and getattr(obj, "_pre", None) is not None:
                    pres.append(np.abs(obj._pre).min())
    return float(min(pres))
