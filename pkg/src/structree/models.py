"""Uniform wrapper over the tree and baseline models, plus checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import baselines as bl
from . import treelstm as tl
from .doctree import DocTree
from .embeddings import EmbeddingStore, leaf_vectors
from .numerics import ParamSet, make_rng, softmax

MODEL_KINDS = ("tree-lstm", "mlp-unweighted", "mlp-hierarchical", "seq-lstm")
CHECKPOINT_FORMAT = "structree-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def count_for(kind: str, e: int, h: int, l: int) -> int:
    if kind in ("tree-lstm", "seq-lstm"):
        return tl.count_params(e, h, l)
    if kind in ("mlp-unweighted", "mlp-hierarchical", "mlp"):
        return bl.count_mlp_params(e, h, l)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class Model:
    kind: str
    params: ParamSet
    variant: tl.Variant = tl.Variant.ZERO_VECTORS
    seed: int = 0
    leaf_granularity: str = "sentence"
    use_category: bool = False
    category_scale: float = 1.0
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(cls, kind: str, e: int, h: int, l: int, seed: int = 0, variant="zero", **kw) -> "Model":
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
        rng = make_rng(seed)
        if kind.startswith("mlp"):
            params = bl.init_mlp_params(e, h, l, rng)
        else:
            params = tl.init_params(e, h, l, rng)
        return cls(kind, params, tl.Variant.parse(variant), seed, **kw)

    @property
    def dims(self) -> tuple[int, int, int]:
        if self.kind.startswith("mlp"):
            h, e = self.params.shapes["W1"]
        else:
            h, e = self.params.shapes["W_i"]
        return e, h, self.params.shapes["W_out"][0]

    @property
    def n_classes(self) -> int:
        return self.dims[2]

    # -- inputs

    def leaf_vectors(self, tree: DocTree, store: EmbeddingStore) -> np.ndarray:
        return leaf_vectors(tree, store, self.use_category, self.category_scale)

    def features(self, tree: DocTree, store: EmbeddingStore):
        """Whatever the model consumes for one document; computed once."""
        L = self.leaf_vectors(tree, store)
        if self.kind == "tree-lstm":
            return L
        if self.kind == "seq-lstm":
            return bl.leaf_sequence(tree, L)
        if self.kind == "mlp-unweighted":
            return bl.doc_vector_unweighted(tree, L)
        return bl.doc_vector_hierarchical(tree, L)

    # -- forward/backward

    def loss(self, tree: DocTree, feats, label: int, grad: bool = False, lam: float = 0.0, level: int = 0) -> float:
        if self.kind == "tree-lstm":
            from .training import replicated_loss

            trace = tl.encode_tree(tree, self.variant, self.params, feats)
            return replicated_loss(tree, trace, self.params, lam=lam, level=level, label=label, grad=grad)
        if self.kind == "seq-lstm":
            return bl.seq_lstm_forward(feats, self.params, label, grad=grad)[0]
        return bl.mlp_forward(feats, self.params, label, grad=grad)[0]

    def predict_proba(self, tree: DocTree, feats) -> np.ndarray:
        if self.kind == "tree-lstm":
            trace = tl.encode_tree(tree, self.variant, self.params, feats)
            W_out = self.params["W_out"].value
            return softmax(W_out @ trace.root_h + self.params["b_out"].value[:, 0])
        # label is irrelevant for probabilities
        if self.kind == "seq-lstm":
            return bl.seq_lstm_forward(feats, self.params, 0)[1]
        return bl.mlp_forward(feats, self.params, 0)[1]

    # -- checkpoints

    def to_dict(self) -> dict[str, Any]:
        e, h, l = self.dims
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model": self.kind,
            "variant": self.variant.value,
            "dims": {"e": e, "h": h, "l": l},
            "seed": self.seed,
            "leaf_granularity": self.leaf_granularity,
            "use_category": self.use_category,
            "category_scale": self.category_scale,
            "meta": self.meta,
            "params": [
                {"name": name, "shape": list(shape), "values": self.params[name].value.reshape(-1).tolist()}
                for name, shape in self.params.shapes.items()
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "Model":
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not a structree checkpoint")
        if obj.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {obj.get('version')!r}")
        try:
            kind = obj["model"]
            d = obj["dims"]
            model = cls.create(kind, d["e"], d["h"], d["l"], seed=obj["seed"], variant=obj["variant"])
            names = [p["name"] for p in obj["params"]]
            if names != model.params.names():
                raise CheckpointError(f"parameter order {names} does not match {model.params.names()}")
            for p in obj["params"]:
                t = model.params[p["name"]]
                if list(t.shape) != p["shape"]:
                    raise CheckpointError(f"{p['name']}: shape {p['shape']} != {list(t.shape)}")
                t.value[...] = np.asarray(p["values"], dtype=np.float64).reshape(t.shape)
        except KeyError as exc:
            raise CheckpointError(f"checkpoint missing field {exc}") from None
        model.leaf_granularity = obj.get("leaf_granularity", "sentence")
        model.use_category = bool(obj.get("use_category", False))
        model.category_scale = float(obj.get("category_scale", 1.0))
        model.meta = obj.get("meta", {})
        return model

    @classmethod
    def load(cls, path) -> "Model":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(obj)
