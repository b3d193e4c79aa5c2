"""Training loop, evaluation metrics and multi-seed reporting."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NumericError, UndefinedAuc
from .ingest import NUM_SEVERITY_CLASSES, Dataset
from .numkernel import AdamState, adam_step, cross_entropy, make_rng, softmax
from .travel import MODEL_KINDS, GraphInputs, NodeClassifier, build_model

TASKS = ("occurrence", "severity")
METRIC_NAMES = ("f1", "weighted_f1", "auc", "accuracy")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 16
    seed: int = 1
    task: str = "occurrence"
    model: str = "travel"
    class_weighted: bool = False

    def __post_init__(self) -> None:
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.hidden <= 0:
            raise ValueError(f"hidden must be positive, got {self.hidden}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")

    @property
    def num_classes(self) -> int:
        return 2 if self.task == "occurrence" else NUM_SEVERITY_CLASSES


@dataclass
class Metrics:
    f1: float
    weighted_f1: float
    auc: float
    accuracy: float
    loss_trace: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES}


# --- metrics --------------------------------------------------------------

def confusion_counts(preds, labels, positive: int = 1) -> tuple[int, int, int, int]:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    p, t = preds == positive, labels == positive
    return int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)), int(np.sum(~p & ~t))


def f1_binary(preds, labels, positive: int = 1) -> float:
    tp, fp, fn, _ = confusion_counts(preds, labels, positive)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def weighted_f1(preds, labels, num_classes: int) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    total = 0.0
    for c in range(num_classes):
        support = int(np.sum(labels == c))
        if support:
            total += support * f1_binary(preds, labels, positive=c)
    return total / labels.size


def accuracy(preds, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.asarray(preds) == labels))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney rank sum, ties taking average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAuc(f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray, task: str) -> Metrics:
    """Metrics on the masked nodes only.

    For severity, ``f1`` and ``auc`` score the accident/no-accident split
    (class > 0, probability 1 - p(class 0)); ``weighted_f1`` and
    ``accuracy`` score all classes.
    """
    idx = np.flatnonzero(mask)
    y = np.asarray(labels)[idx]
    probs = softmax(logits[idx])
    preds = probs.argmax(axis=1)
    num_classes = logits.shape[1]
    if task == "occurrence":
        bin_pred, bin_true, score = preds, y, probs[:, 1]
    else:
        bin_pred, bin_true, score = (preds > 0).astype(int), (y > 0).astype(int), 1.0 - probs[:, 0]
    try:
        a = auc(score, bin_true)
    except UndefinedAuc:
        a = math.nan
    return Metrics(f1_binary(bin_pred, bin_true), weighted_f1(preds, y, num_classes), a, accuracy(preds, y))


def _selection_score(m: Metrics, task: str) -> float:
    return m.f1 if task == "occurrence" else m.weighted_f1


# --- training -------------------------------------------------------------

@dataclass
class TrainResult:
    model: NodeClassifier
    config: TrainConfig
    best_epoch: int
    loss_trace: list
    val_history: list
    test_metrics: Metrics


def train(ds: Dataset, config: TrainConfig) -> TrainResult:
    """Full-batch transductive training; keeps the parameters with the best validation score."""
    rng = make_rng(config.seed)
    # one stream drives both initialisation and dropout
    model = build_model(config.model, ds.node_features.shape[1], ds.edge_features.shape[1],
                        config.num_classes, config.hidden, config.dropout, rng)
    g = GraphInputs.from_dataset(ds)
    g.validate()
    labels = ds.labels(config.task)
    train_idx = np.flatnonzero(ds.train_mask)
    y_train = labels[train_idx]
    weights = None
    if config.class_weighted:
        counts = np.bincount(y_train, minlength=config.num_classes).astype(np.float64)
        per_class = np.where(counts > 0, y_train.size / (config.num_classes * np.maximum(counts, 1)), 0.0)
        weights = per_class[y_train]
    opt = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    params = model.params()

    best_score, best_epoch, best_state = -math.inf, 0, model.state()
    loss_trace: list[float] = []
    val_history: list[Metrics] = []
    for epoch in range(1, config.epochs + 1):
        try:
            model.zero_grad()
            logits = model.forward(g, training=True, rng=rng)
            loss, dlogits_train = cross_entropy(logits[train_idx], y_train, weights)
            dlogits = np.zeros_like(logits)
            dlogits[train_idx] = dlogits_train
            model.backward(dlogits)
            adam_step(params, opt)
            val = evaluate(model.forward(g, training=False), labels, ds.val_mask, config.task)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch} (seed {config.seed}, model {config.model}): {exc}") from exc
        loss_trace.append(loss)
        val_history.append(val)
        score = _selection_score(val, config.task)
        if score > best_score:
            best_score, best_epoch, best_state = score, epoch, model.state()

    model.load_state(best_state)
    test = evaluate(model.forward(g, training=False), labels, ds.test_mask, config.task)
    test.loss_trace = loss_trace
    return TrainResult(model, config, best_epoch, loss_trace, val_history, test)


def evaluate_model(model: NodeClassifier, ds: Dataset, task: str, mask: Optional[np.ndarray] = None) -> Metrics:
    logits = model.forward(GraphInputs.from_dataset(ds), training=False)
    return evaluate(logits, ds.labels(task), ds.test_mask if mask is None else mask, task)


# --- reports --------------------------------------------------------------

def format_pm(mean: float, std: float) -> str:
    """Percent mean and standard deviation with one decimal, e.g. "51.9±1.0"."""
    if math.isnan(mean):
        return "n/a"
    return f"{100.0 * mean:.1f}±{100.0 * std:.1f}"


@dataclass
class SeedRun:
    seed: int
    best_epoch: int
    test: dict
    final_loss: float
    result: Optional[TrainResult] = None


@dataclass
class Report:
    config: TrainConfig
    runs: list
    summary: dict

    def header_line(self) -> str:
        c = self.config
        return (f"model={c.model} task={c.task} epochs={c.epochs} hidden={c.hidden} dropout={c.dropout} "
                f"lr={c.lr} weight_decay={c.weight_decay} seeds={','.join(str(r.seed) for r in self.runs)}")

    def to_json(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("seed")
        return {
            "header": self.header_line(),
            "config": cfg,
            "seeds": [r.seed for r in self.runs],
            "runs": [{"seed": r.seed, "best_epoch": r.best_epoch, "final_loss": r.final_loss,
                      "test": r.test} for r in self.runs],
            "summary": self.summary,
        }

    def to_table(self) -> str:
        lines = [self.header_line()]
        width = max(len(m) for m in METRIC_NAMES)
        lines.append(f"{'metric'.ljust(width)}  {'mean±std (%)':>14}  " +
                     "  ".join(f"seed {r.seed:>3}" for r in self.runs))
        for m in METRIC_NAMES:
            per_seed = "  ".join(f"{100 * r.test[m]:8.1f}" if not math.isnan(r.test[m]) else f"{'n/a':>8}"
                                 for r in self.runs)
            lines.append(f"{m.ljust(width)}  {self.summary[m]['formatted']:>14}  {per_seed}")
        return "\n".join(lines)

    def dumps(self, fmt: str = "json") -> str:
        if fmt == "table":
            return self.to_table()
        return json.dumps(self.to_json(), indent=2, sort_keys=True, allow_nan=True)


def _run_seed(args) -> SeedRun:
    ds, config, keep = args
    res = train(ds, config)
    return SeedRun(config.seed, res.best_epoch, res.test_metrics.as_dict(), res.loss_trace[-1],
                   res if keep else None)


def summarize(runs: Sequence[SeedRun]) -> dict:
    out = {}
    for m in METRIC_NAMES:
        vals = np.array([r.test[m] for r in runs], dtype=np.float64)
        mean, std = float(np.mean(vals)), float(np.std(vals))
        out[m] = {"mean": mean, "std": std, "formatted": format_pm(mean, std)}
    return out


def multi_seed_report(ds: Dataset, config: TrainConfig, seeds: Sequence[int], jobs: int = 1,
                      keep_models: bool = False) -> Report:
    """Train once per seed and aggregate test metrics in seed order."""
    tasks = [(ds, replace(config, seed=int(s)), keep_models) for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_seed, tasks))
    else:
        runs = [_run_seed(t) for t in tasks]
    return Report(config, runs, summarize(runs))
