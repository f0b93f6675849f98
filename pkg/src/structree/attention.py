"""Hierarchical attention weights read off forget gates, with JSON/HTML export.

For a parent j and child k the weight is the per-dimension share of
``f_jk * c_k`` among all children, averaged over dimensions.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass, field

import numpy as np

from .doctree import DocTree
from .treelstm import TreeTrace

DENOM_EPS = 1e-12
TEMPLATE_VERSION = 1
HUE = (200, 30, 45)


class AttentionFormatError(ValueError):
    pass


@dataclass
class AttentionNode:
    id: int
    kind: str
    children: list[tuple[int, float]] = field(default_factory=list)
    title: str | None = None
    text: str | None = None
    degenerate: bool = False


@dataclass
class AttentionTree:
    nodes: list[AttentionNode]
    prediction: int | None = None
    label: int | None = None

    def weights(self, nid: int) -> dict[int, float]:
        return dict(self.nodes[nid].children)

    def incoming(self) -> dict[int, float]:
        """Weight each node receives from its parent (root excluded)."""
        out = {}
        for node in self.nodes:
            for cid, w in node.children:
                out[cid] = w
        return out

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            d: dict = {"id": n.id, "kind": n.kind}
            if n.title is not None:
                d["title"] = n.title
            if n.text is not None:
                d["text"] = n.text
            if n.degenerate:
                d["degenerate"] = True
            d["children"] = [{"id": cid, "weight": w} for cid, w in n.children]
            nodes.append(d)
        return {"prediction": self.prediction, "label": self.label, "nodes": nodes}

    @classmethod
    def from_dict(cls, obj) -> "AttentionTree":
        try:
            nodes = []
            for i, d in enumerate(obj["nodes"]):
                if d["id"] != i or not isinstance(d["kind"], str):
                    raise AttentionFormatError(f"node {i}: bad id or kind")
                kids = []
                for c in d["children"]:
                    if not isinstance(c["id"], int) or not isinstance(c["weight"], (int, float)):
                        raise AttentionFormatError(f"node {i}: bad child entry {c!r}")
                    kids.append((c["id"], float(c["weight"])))
                nodes.append(
                    AttentionNode(d["id"], d["kind"], kids, d.get("title"), d.get("text"), d.get("degenerate", False))
                )
            return cls(nodes, obj["prediction"], obj["label"])
        except (KeyError, TypeError) as exc:
            raise AttentionFormatError(f"attention file does not match schema: {exc!r}") from exc


def child_weights(F: np.ndarray, Ck: np.ndarray) -> tuple[np.ndarray, bool]:
    """Weights for one parent from its forget gates and children's cells.

    Dimensions with |sum_k f_k c_k| < 1e-12 are skipped and the mean taken
    over the rest; if every dimension is skipped the weights fall back to
    uniform and the second return value is True.
    """
    contrib = F * Ck  # (k, D)
    k = contrib.shape[0]
    if k == 1:
        return np.ones(1), False
    denom = contrib.sum(axis=0)
    keep = np.abs(denom) >= DENOM_EPS
    if not keep.any():
        return np.full(k, 1.0 / k), True
    shares = contrib[:, keep] / denom[keep]
    return shares.mean(axis=1), False


def attention_weights(trace: TreeTrace, prediction: int | None = None) -> AttentionTree:
    tree: DocTree = trace.tree
    nodes = []
    for nid, node in enumerate(tree.nodes):
        kids = tree.children_ids[nid]
        an = AttentionNode(nid, node.kind, title=node.title, text=node.text if node.is_leaf else None)
        if kids:
            w, degenerate = child_weights(trace.F[nid], trace.C[kids])
            an.children = [(c, float(x)) for c, x in zip(kids, w)]
            an.degenerate = degenerate
        nodes.append(an)
    return AttentionTree(nodes, prediction, tree.label)


def export_json(atree: AttentionTree, path) -> None:
    # repr-based float encoding round-trips float64 exactly
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(atree.to_dict(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_json(path) -> AttentionTree:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AttentionFormatError(str(exc)) from exc
    if not isinstance(obj, dict):
        raise AttentionFormatError("top level must be an object")
    return AttentionTree.from_dict(obj)


def opacity(weight: float) -> float:
    return float(min(max(weight, 0.0), 1.0))


_STYLE = """body{font-family:sans-serif;font-size:14px;margin:16px}
.n{border:1px solid #999;margin:4px;padding:4px}
.k{font-size:11px;color:#333}
.t{font-weight:bold}
.w{font-size:11px;color:#555;float:right}"""


def render_html(atree: AttentionTree, prediction: int | None = None, path=None, class_names=None) -> str:
    """Nested blocks per node, background opacity equal to the clipped weight.

    Returns the HTML text and writes it to ``path`` when given.
    """
    pred = atree.prediction if prediction is None else prediction

    def name(c):
        if c is None:
            return "?"
        if class_names and 0 <= c < len(class_names):
            return f"{c} ({html.escape(class_names[c])})"
        return str(c)

    incoming = atree.incoming()
    out = [
        "<!DOCTYPE html>",
        f'<html><head><meta charset="utf-8"><meta name="generator" content="structree-attention v{TEMPLATE_VERSION}">',
        f"<style>{_STYLE}</style></head><body>",
        f"<h1>predicted: {name(pred)} &middot; true: {name(atree.label)}</h1>",
    ]

    def emit(nid: int, depth: int) -> None:
        node = atree.nodes[nid]
        pad = "  " * depth
        if nid in incoming:
            w = incoming[nid]
            a = opacity(w)
            style = f' style="background-color:rgba({HUE[0]},{HUE[1]},{HUE[2]},{a:.4f})"'
            wtxt = f'<span class="w">{w:.4f}</span>'
        else:
            style = ""
            wtxt = ""
        out.append(f'{pad}<div class="n"{style} data-id="{nid}">{wtxt}<span class="k">{html.escape(node.kind)}</span>')
        if node.title:
            out.append(f'{pad} <div class="t">{html.escape(node.title)}</div>')
        if node.text:
            out.append(f"{pad} <div>{html.escape(node.text)}</div>")
        for cid, _ in node.children:
            emit(cid, depth + 1)
        out.append(f"{pad}</div>")

    if atree.nodes:
        emit(0, 0)
    out.append("</body></html>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
