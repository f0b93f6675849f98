"""Child-Sum Tree-LSTM over document structure trees.

Two routes compute the same cell:

* :func:`cell_forward` builds one unit from the tape ops in
  :mod:`structree.numerics`; it is the readable reference.
* :func:`encode_tree` / :func:`backward_tree` run a whole tree with stacked
  gate matrices and hand-derived gradients; training uses this path.

Gate blocks are stored in the order input, output, update, forget, so the
stacked ``W`` (4h x e), ``U`` (4h x h) and bias vectors are contiguous views
of the flat parameter buffer. Each gate has two bias vectors (input side and
recurrent side), giving the 4(eh + h^2 + 2h) + hl + l parameter count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .doctree import DocTree
from .numerics import ParamSet, ShapeError, TensorF, stable_sigmoid

GATES = ("i", "o", "u", "f")


class Variant(enum.Enum):
    ZERO_VECTORS = "zero"
    HIERARCHICAL_AVERAGE = "average"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        aliases = {
            "zero": cls.ZERO_VECTORS,
            "zero-vectors": cls.ZERO_VECTORS,
            "zerovectors": cls.ZERO_VECTORS,
            "average": cls.HIERARCHICAL_AVERAGE,
            "hierarchical-average": cls.HIERARCHICAL_AVERAGE,
            "hierarchicalaverage": cls.HIERARCHICAL_AVERAGE,
        }
        try:
            return aliases[value.lower()]
        except KeyError:
            raise ValueError(f"unknown variant {value!r}") from None


def lstm_layout(e: int, h: int, l: int) -> list[tuple[str, tuple[int, int]]]:
    """Fixed parameter order shared by the tree and sequential LSTMs."""
    layout = [(f"W_{g}", (h, e)) for g in GATES]
    layout += [(f"U_{g}", (h, h)) for g in GATES]
    layout += [(f"b_{g}", (h, 1)) for g in GATES]
    layout += [(f"bh_{g}", (h, 1)) for g in GATES]
    layout += [("W_out", (l, h)), ("b_out", (l, 1))]
    return layout


def count_params(e: int, h: int, l: int) -> int:
    return 4 * (e * h + h * h + 2 * h) + h * l + l


def init_params(e: int, h: int, l: int, rng: np.random.Generator) -> ParamSet:
    """Uniform(-1/sqrt(h), 1/sqrt(h)) for every entry."""
    params = ParamSet(lstm_layout(e, h, l))
    bound = 1.0 / math.sqrt(h)
    params.flat[...] = rng.uniform(-bound, bound, size=params.size)
    return params


def dims(params: ParamSet) -> tuple[int, int, int]:
    h, e = params.shapes["W_i"]
    l = params.shapes["W_out"][0]
    return e, h, l


class Stacked:
    """Stacked gate views of a parameter set (values and grads)."""

    def __init__(self, params: ParamSet):
        e, h, l = dims(params)
        self.e, self.h, self.l = e, h, l
        W, dW = params.block("W_i", "W_f")
        U, dU = params.block("U_i", "U_f")
        b, db = params.block("b_i", "b_f")
        bh, dbh = params.block("bh_i", "bh_f")
        self.W, self.dW = W.reshape(4 * h, e), dW.reshape(4 * h, e)
        self.U, self.dU = U.reshape(4 * h, h), dU.reshape(4 * h, h)
        self.b, self.db = b, db
        self.bh, self.dbh = bh, dbh
        self.bias = b + bh
        self.W_out, self.dW_out = params["W_out"].value, params["W_out"].grad
        self.b_out, self.db_out = params["b_out"].value[:, 0], params["b_out"].grad[:, 0]


# ---------------------------------------------------------------------------
# node inputs


def node_inputs(tree: DocTree, variant: Variant, leaf_vecs: np.ndarray) -> np.ndarray:
    """Input vector of every node: leaves keep their embedding; non-leaves get
    zeros or, under hierarchical averaging, the mean of their children's inputs."""
    variant = Variant.parse(variant)
    X = np.array(leaf_vecs, dtype=np.float64, copy=True)
    for nid in range(len(tree) - 1, -1, -1):
        kids = tree.children_ids[nid]
        if not kids:
            continue
        if variant is Variant.ZERO_VECTORS:
            X[nid] = 0.0
        else:
            acc = np.zeros(X.shape[1])
            for k in kids:
                acc += X[k]
            X[nid] = acc / len(kids)
    return X


# ---------------------------------------------------------------------------
# reference cell on the tape


@dataclass
class CellState:
    """Tape-level unit output. ``f`` holds one forget gate per child."""

    h: TensorF
    c: TensorF
    f: list[TensorF]


def cell_forward(x: TensorF, children: list[CellState], params: ParamSet) -> CellState:
    e, h, _ = dims(params)
    if x.shape != (e, 1):
        raise ShapeError(f"cell input has shape {x.shape}, expected ({e}, 1)")
    p = params

    def gate(g, rec, act):
        z = nx.add(nx.matvec(p[f"W_{g}"], x), nx.add(p[f"b_{g}"], p[f"bh_{g}"]))
        if rec is not None:
            z = nx.add(z, nx.matvec(p[f"U_{g}"], rec))
        return act(z)

    h_sum = nx.sum_rows([ch.h for ch in children]) if children else None
    i = gate("i", h_sum, nx.sigmoid)
    o = gate("o", h_sum, nx.sigmoid)
    u = gate("u", h_sum, nx.tanh)
    forgets = [gate("f", ch.h, nx.sigmoid) for ch in children]
    c = nx.hadamard(i, u)
    for f_k, ch in zip(forgets, children):
        c = nx.add(c, nx.hadamard(f_k, ch.c))
    h_out = nx.hadamard(o, nx.tanh(c))
    return CellState(h_out, c, forgets)


def classify_tensor(h_root: TensorF, params: ParamSet, label: int) -> tuple[TensorF, TensorF]:
    logits = nx.add(nx.matvec(params["W_out"], h_root), params["b_out"])
    return nx.softmax_xent(logits, label)


# ---------------------------------------------------------------------------
# fast tree path


@dataclass
class NodeState:
    h: np.ndarray
    c: np.ndarray
    f: np.ndarray  # (n_children, h)
    children: list[int]


class TreeTrace:
    """Forward activations of a whole tree, retained for backward and attention."""

    def __init__(self, tree: DocTree, X: np.ndarray, hdim: int):
        n = len(tree)
        self.tree = tree
        self.X = X
        self.H = np.zeros((n, hdim))
        self.C = np.zeros((n, hdim))
        self.IOU = np.zeros((n, 3 * hdim))
        self.F: list[np.ndarray | None] = [None] * n
        self.Htilde = np.zeros((n, hdim))
        self.order: list[int] = []

    def state(self, nid: int) -> NodeState:
        kids = self.tree.children_ids[nid]
        f = self.F[nid] if self.F[nid] is not None else np.zeros((0, self.H.shape[1]))
        return NodeState(self.H[nid].copy(), self.C[nid].copy(), f.copy(), list(kids))

    @property
    def states(self) -> dict[int, NodeState]:
        return {nid: self.state(nid) for nid in self.order}

    @property
    def root_h(self) -> np.ndarray:
        return self.H[0]


def gate_inputs(X: np.ndarray, stacked: Stacked) -> np.ndarray:
    """W x + b for every node at once, shape (n, 4h)."""
    return X @ stacked.W.T + stacked.bias


def encode_tree(
    tree: DocTree,
    variant: Variant | str,
    params: ParamSet,
    leaf_vecs: np.ndarray,
    input_terms: np.ndarray | None = None,
) -> TreeTrace:
    """Post-order pass of the cell over ``tree``.

    ``input_terms`` may replace the precomputed ``W x + b`` rows; it exists so
    callers can feed alternative input contributions for selected nodes.
    """
    st = Stacked(params)
    X = node_inputs(tree, Variant.parse(variant), leaf_vecs)
    if X.shape[1] != st.e:
        raise ShapeError(f"leaf vectors are {X.shape[1]}-d, parameters expect {st.e}")
    Z = gate_inputs(X, st) if input_terms is None else input_terms
    h = st.h
    U_iou, U_f = st.U[: 3 * h], st.U[3 * h :]
    trace = TreeTrace(tree, X, h)
    H, C = trace.H, trace.C
    for nid in tree.postorder():
        kids = tree.children_ids[nid]
        z = Z[nid]
        if kids:
            Hk = H[kids]
            ht = Hk.sum(axis=0)
            z_iou = z[: 3 * h] + U_iou @ ht
            F = stable_sigmoid(z[3 * h :] + Hk @ U_f.T)
            carry = (F * C[kids]).sum(axis=0)
            trace.Htilde[nid] = ht
            trace.F[nid] = F
        else:
            z_iou = z[: 3 * h]
            carry = 0.0
        i = stable_sigmoid(z_iou[:h])
        o = stable_sigmoid(z_iou[h : 2 * h])
        u = np.tanh(z_iou[2 * h :])
        c = i * u + carry
        C[nid] = c
        H[nid] = o * np.tanh(c)
        trace.IOU[nid, :h] = i
        trace.IOU[nid, h : 2 * h] = o
        trace.IOU[nid, 2 * h :] = u
        trace.order.append(nid)
    return trace


def backward_tree(trace: TreeTrace, params: ParamSet, dH: np.ndarray, dC: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients given dL/dh (and optionally dL/dc) per node.

    ``dH`` is consumed in place.
    """
    st = Stacked(params)
    tree = trace.tree
    h = st.h
    n = len(tree)
    U_iou, U_f = st.U[: 3 * h], st.U[3 * h :]
    dC = np.zeros_like(trace.C) if dC is None else dC
    DZ = np.zeros((n, 4 * h))
    f_rows, f_h = [], []
    for nid in reversed(trace.order):
        i = trace.IOU[nid, :h]
        o = trace.IOU[nid, h : 2 * h]
        u = trace.IOU[nid, 2 * h :]
        tc = np.tanh(trace.C[nid])
        dh = dH[nid]
        dc = dC[nid] + dh * o * (1.0 - tc * tc)
        dz = DZ[nid]
        dz[:h] = dc * u * i * (1.0 - i)
        dz[h : 2 * h] = dh * tc * o * (1.0 - o)
        dz[2 * h : 3 * h] = dc * i * (1.0 - u * u)
        kids = tree.children_ids[nid]
        if kids:
            F = trace.F[nid]
            Ck = trace.C[kids]
            Hk = trace.H[kids]
            dFp = (dc * Ck) * F * (1.0 - F)
            dC[kids] += dc * F
            dH[kids] += U_iou.T @ dz[: 3 * h] + dFp @ U_f
            dz[3 * h :] = dFp.sum(axis=0)
            f_rows.append(dFp)
            f_h.append(Hk)
    st.dW += DZ.T @ trace.X
    dbias = DZ.sum(axis=0)
    st.db += dbias
    st.dbh += dbias
    st.dU[: 3 * h] += DZ[:, : 3 * h].T @ trace.Htilde
    if f_rows:
        st.dU[3 * h :] += np.vstack(f_rows).T @ np.vstack(f_h)


# ---------------------------------------------------------------------------
# classifier head


def classify(h_vec: np.ndarray, params: ParamSet, label: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of the output layer applied to ``h_vec``."""
    W_out = params["W_out"].value
    b_out = params["b_out"].value[:, 0]
    return nx.xent(W_out @ h_vec + b_out, label)


def classify_backward(h_vec: np.ndarray, probs: np.ndarray, label: int, params: ParamSet, weight: float = 1.0) -> np.ndarray:
    """Accumulate output-layer grads for ``weight * loss``; returns dL/dh."""
    g = probs.copy()
    g[label] -= 1.0
    g *= weight
    params["W_out"].grad += np.outer(g, h_vec)
    params["b_out"].grad[:, 0] += g
    return params["W_out"].value.T @ g


def predict_proba(tree: DocTree, variant, params: ParamSet, leaf_vecs: np.ndarray) -> np.ndarray:
    trace = encode_tree(tree, variant, params, leaf_vecs)
    W_out = params["W_out"].value
    b_out = params["b_out"].value[:, 0]
    return nx.softmax(W_out @ trace.root_h + b_out)
