"""Target-replication loss, Adam with L2 weight decay, splits and the train loop."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import treelstm as tl
from .doctree import DocTree
from .embeddings import EmbeddingStore
from .metrics import auc, confusion_matrix, macro_f1
from .models import Model
from .numerics import NumericError, ParamSet, make_rng

log = logging.getLogger(__name__)

ENV_PREFIX = "STRUCTREE_"


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    batch_size: int = 64
    hidden_dim: int = 128
    epochs: int = 10
    seed: int = 0
    lam: float = 0.5
    replication_level: int = 0
    model: str = "tree-lstm"
    variant: str = "zero"
    use_category: bool = False
    category_scale: float = 1.0
    selection: str = "macro_f1"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.hidden_dim < 1 or self.epochs < 0:
            raise ConfigError("batch_size and hidden_dim must be positive, epochs non-negative")
        if self.replication_level < 0:
            raise ConfigError("replication_level must be >= 0")
        if self.selection not in ("macro_f1", "auc"):
            raise ConfigError(f"unknown selection metric {self.selection!r}")

    @classmethod
    def preset(cls, granularity: str, **kw) -> "TrainConfig":
        """Batch/hidden pairs for sentence-leaf (64/128) and word-leaf (32/64) runs."""
        base = {"sentence": {"batch_size": 64, "hidden_dim": 128}, "word": {"batch_size": 32, "hidden_dim": 64}}
        return cls(**{**base[granularity], **kw})

    def updated(self, values: dict[str, Any]) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(self)}
        current = dataclasses.asdict(self)
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            current[key] = _coerce(fields[key].type, raw, key)
        return TrainConfig(**current)


def _coerce(typ, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if typ in ("float", float):
            return float(raw)
        if typ in ("int", int):
            return int(raw)
        if typ in ("bool", bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw.strip()


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    out = {}
    for key, val in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in fields or name == "lambda":
                out[name] = val
    return out


# ---------------------------------------------------------------------------
# loss


def replicated_loss(
    tree: DocTree,
    trace: tl.TreeTrace,
    params: ParamSet,
    lam: float = 0.0,
    level: int = 0,
    label: int | None = None,
    grad: bool = False,
    weight: float = 1.0,
) -> float:
    """Root loss plus lam times the mean loss of the nodes at depth ``level``.

    Intermediate nodes are classified by the shared output layer. Level 0
    turns replication off; a level deeper than the tree contributes nothing.
    With ``grad`` the gradient of ``weight * loss`` is accumulated.
    """
    label = tree.label if label is None else label
    root_loss, root_probs = tl.classify(trace.H[0], params, label)
    targets: list[int] = []
    if level > 0 and lam != 0.0:
        targets = [nid for nid in range(len(tree)) if tree.depth[nid] == level]
        if not targets:
            log.warning("replication level %d exceeds tree depth %d; term is 0", level, tree.max_depth)
    total = root_loss
    inter = []
    if targets:
        acc = 0.0
        for nid in targets:
            l_i, p_i = tl.classify(trace.H[nid], params, label)
            inter.append((nid, p_i))
            acc += l_i
        total = root_loss + lam / len(targets) * acc
    if grad:
        dH = np.zeros_like(trace.H)
        dH[0] = tl.classify_backward(trace.H[0], root_probs, label, params, weight)
        for nid, p_i in inter:
            dH[nid] += tl.classify_backward(trace.H[nid], p_i, label, params, weight * lam / len(targets))
        tl.backward_tree(trace, params, dH)
    return total


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros(params.size), np.zeros(params.size), 0, beta1, beta2, eps)


def adam_step(params: ParamSet, grads: np.ndarray, state: AdamState, lr: float, weight_decay: float) -> None:
    """Bias-corrected Adam with weight decay added to the gradient (coupled L2)."""
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient; step aborted")
    theta = params.flat
    g = grads + weight_decay * theta
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# data


def split_indices(n: int, seed: int, fractions=(0.8, 0.1)) -> tuple[list[int], list[int], list[int]]:
    """Seeded shuffle into train/validation/test (80/10/10 by default)."""
    perm = make_rng(seed).permutation(n).tolist()
    n_train = int(math.floor(fractions[0] * n))
    n_val = int(math.floor(fractions[1] * n))
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


@dataclass
class Dataset:
    trees: list[DocTree]
    feats: list[Any]

    @property
    def labels(self) -> list[int]:
        return [t.label for t in self.trees]


def prepare(model: Model, trees: Sequence[DocTree], store: EmbeddingStore) -> Dataset:
    return Dataset(list(trees), [model.features(t, store) for t in trees])


def batch_loss_and_grad(model: Model, data: Dataset, idx: Sequence[int], lam=0.0, level=0) -> float:
    """Mean loss over ``idx``; leaves the mean gradient in ``params.flat_grad``."""
    model.params.zero_grad()
    total = 0.0
    for i in idx:
        total += model.loss(data.trees[i], data.feats[i], data.trees[i].label, grad=True, lam=lam, level=level)
    model.params.flat_grad /= len(idx)
    return total / len(idx)


def predict(model: Model, data: Dataset, idx: Sequence[int] | None = None) -> np.ndarray:
    idx = range(len(data.trees)) if idx is None else idx
    return np.array([model.predict_proba(data.trees[i], data.feats[i]) for i in idx]).reshape(len(idx), -1)


def evaluate(model: Model, data: Dataset, idx: Sequence[int] | None = None) -> dict[str, Any]:
    idx = list(range(len(data.trees))) if idx is None else list(idx)
    probs = predict(model, data, idx)
    y_true = [data.trees[i].label for i in idx]
    y_pred = probs.argmax(axis=1).tolist()
    cm = confusion_matrix(y_true, y_pred, model.n_classes)
    out = {
        "macro_f1": macro_f1(cm),
        "accuracy": float(np.trace(cm) / cm.sum()),
        "auc": None,
        "confusion": cm.tolist(),
    }
    if model.n_classes == 2 and len(set(y_true)) == 2:
        out["auc"] = auc(zip(probs[:, 1].tolist(), y_true))
    return out


@dataclass
class TrainResult:
    model: Model
    log: list[dict[str, Any]]
    best_epoch: int
    splits: tuple[list[int], list[int], list[int]]


def train(
    trees: Sequence[DocTree],
    store: EmbeddingStore,
    cfg: TrainConfig,
    n_classes: int | None = None,
    splits: tuple[list[int], list[int], list[int]] | None = None,
    on_epoch: Callable[[dict[str, Any]], None] | None = None,
) -> TrainResult:
    """Mini-batch training with best-validation-epoch selection.

    Returns the model restored to the best epoch's parameters. The log holds
    one record per (epoch, split, metric).
    """
    if not trees:
        raise ConfigError("empty corpus")
    n_classes = n_classes or (max(t.label for t in trees) + 1)
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    if any(t.label >= n_classes for t in trees):
        raise ConfigError("corpus labels exceed the number of classes")
    splits = splits or split_indices(len(trees), cfg.seed)
    train_idx, val_idx, _ = splits
    if not train_idx or not val_idx:
        raise ConfigError("train and validation splits must be non-empty")
    missing = set(range(n_classes)) - {trees[i].label for i in train_idx}
    if missing:
        log.warning("classes %s are absent from the training split", sorted(missing))

    e = store.dim + (1 if cfg.use_category else 0)
    model = Model.create(
        cfg.model,
        e,
        cfg.hidden_dim,
        n_classes,
        seed=cfg.seed,
        variant=cfg.variant,
        leaf_granularity=trees[0].leaf_granularity,
        use_category=cfg.use_category,
        category_scale=cfg.category_scale,
    )
    data = prepare(model, trees, store)
    state = AdamState.for_params(model.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = make_rng(cfg.seed + 1)
    records: list[dict[str, Any]] = []
    best_score, best_epoch = -math.inf, 0
    best_flat = model.params.flat.copy()

    def emit(rec):
        records.append(rec)
        if on_epoch:
            on_epoch(rec)

    order = list(train_idx)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(order))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [order[j] for j in perm[start : start + cfg.batch_size]]
            loss = batch_loss_and_grad(model, data, batch, cfg.lam, cfg.replication_level)
            adam_step(model.params, model.params.flat_grad, state, cfg.learning_rate, cfg.weight_decay)
            losses.append(loss * len(batch))
        train_loss = sum(losses) / len(order)
        val = evaluate(model, data, val_idx)
        emit({"epoch": epoch, "split": "train", "metric": "loss", "value": train_loss})
        emit({"epoch": epoch, "split": "validation", "metric": "macro_f1", "value": val["macro_f1"]})
        emit({"epoch": epoch, "split": "validation", "metric": "accuracy", "value": val["accuracy"]})
        if val["auc"] is not None:
            emit({"epoch": epoch, "split": "validation", "metric": "auc", "value": val["auc"]})
        score = val["auc"] if cfg.selection == "auc" and val["auc"] is not None else val["macro_f1"]
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_flat = model.params.flat.copy()

    model.params.flat[...] = best_flat
    model.meta = {
        "best_epoch": best_epoch,
        "best_validation": best_score if best_epoch else None,
        "config": dataclasses.asdict(cfg),
    }
    return TrainResult(model, records, best_epoch, splits)
