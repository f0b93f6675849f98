"""Comparison models: MLP over averaged embeddings and a sequential LSTM."""

from __future__ import annotations

import math

import numpy as np

from .doctree import DocTree
from .numerics import ParamSet, ShapeError, stable_sigmoid
from .treelstm import Stacked, classify, classify_backward, count_params, init_params, lstm_layout


def doc_vector_unweighted(tree: DocTree, leaf_vecs: np.ndarray) -> np.ndarray:
    leaves = tree.leaf_ids
    acc = np.zeros(leaf_vecs.shape[1])
    for nid in leaves:
        acc += leaf_vecs[nid]
    return acc / len(leaves)


def doc_vector_hierarchical(tree: DocTree, leaf_vecs: np.ndarray) -> np.ndarray:
    """Every node averages its children, bottom-up; the root's value is returned."""
    vals = np.array(leaf_vecs, dtype=np.float64, copy=True)
    for nid in range(len(tree) - 1, -1, -1):
        kids = tree.children_ids[nid]
        if kids:
            acc = np.zeros(vals.shape[1])
            for k in kids:
                acc += vals[k]
            vals[nid] = acc / len(kids)
    return vals[0]


# ---------------------------------------------------------------------------
# MLP


def mlp_layout(e: int, h: int, l: int) -> list[tuple[str, tuple[int, int]]]:
    return [
        ("W1", (h, e)),
        ("b1", (h, 1)),
        ("W2", (h, h)),
        ("b2", (h, 1)),
        ("W_out", (l, h)),
        ("b_out", (l, 1)),
    ]


def count_mlp_params(e: int, h: int, l: int) -> int:
    return e * h + h * h + 2 * h + h * l + l


def init_mlp_params(e: int, h: int, l: int, rng: np.random.Generator) -> ParamSet:
    params = ParamSet(mlp_layout(e, h, l))
    for name, (rows, cols) in params.shapes.items():
        fan_in = cols if name.startswith("W") else params.shapes["W" + name[1:]][1]
        bound = 1.0 / math.sqrt(fan_in)
        params[name].value[...] = rng.uniform(-bound, bound, size=(rows, cols))
    return params


def mlp_forward(x: np.ndarray, params: ParamSet, label: int, grad: bool = False) -> tuple[float, np.ndarray]:
    """ReLU(W1 x + b1) -> ReLU(W2 . + b2) -> softmax cross-entropy."""
    W1, b1 = params["W1"].value, params["b1"].value[:, 0]
    W2, b2 = params["W2"].value, params["b2"].value[:, 0]
    if x.shape != (W1.shape[1],):
        raise ShapeError(f"MLP input has shape {x.shape}, expected ({W1.shape[1]},)")
    a1 = W1 @ x + b1
    h1 = np.maximum(a1, 0.0)
    a2 = W2 @ h1 + b2
    h2 = np.maximum(a2, 0.0)
    loss, probs = classify(h2, params, label)
    if grad:
        dh2 = classify_backward(h2, probs, label, params)
        da2 = dh2 * (a2 > 0.0)
        params["W2"].grad += np.outer(da2, h1)
        params["b2"].grad[:, 0] += da2
        da1 = (W2.T @ da2) * (a1 > 0.0)
        params["W1"].grad += np.outer(da1, x)
        params["b1"].grad[:, 0] += da1
    return loss, probs


# ---------------------------------------------------------------------------
# sequential LSTM

seq_lstm_layout = lstm_layout
count_seq_lstm_params = count_params
init_seq_lstm_params = init_params


def leaf_sequence(tree: DocTree, leaf_vecs: np.ndarray) -> np.ndarray:
    """Leaf vectors in depth-first (document) order."""
    return leaf_vecs[tree.leaf_ids]


def seq_lstm_states(seq: np.ndarray, params: ParamSet) -> dict[str, np.ndarray]:
    """Run the recurrence; returns per-step gates, cells and hidden states."""
    if len(seq) == 0:
        raise ValueError("sequential LSTM needs at least one input")
    st = Stacked(params)
    h = st.h
    if seq.shape[1] != st.e:
        raise ShapeError(f"inputs are {seq.shape[1]}-d, parameters expect {st.e}")
    T = len(seq)
    Z = seq @ st.W.T + st.bias
    G = np.zeros((T, 4 * h))
    C = np.zeros((T, h))
    H = np.zeros((T, h))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(T):
        z = Z[t] + st.U @ h_prev if t else Z[t]
        g = G[t]
        g[: 2 * h] = stable_sigmoid(z[: 2 * h])
        g[2 * h : 3 * h] = np.tanh(z[2 * h : 3 * h])
        g[3 * h :] = stable_sigmoid(z[3 * h :])
        c = g[:h] * g[2 * h : 3 * h]
        if t:
            c = c + g[3 * h :] * c_prev
        C[t] = c
        H[t] = g[h : 2 * h] * np.tanh(c)
        h_prev, c_prev = H[t], C[t]
    return {"X": seq, "G": G, "C": C, "H": H}


def seq_lstm_backward(cache: dict[str, np.ndarray], params: ParamSet, dh_last: np.ndarray) -> None:
    st = Stacked(params)
    h = st.h
    X, G, C, H = cache["X"], cache["G"], cache["C"], cache["H"]
    T = len(X)
    DZ = np.zeros((T, 4 * h))
    dh = dh_last.copy()
    dc = np.zeros(h)
    for t in range(T - 1, -1, -1):
        i, o, u, f = G[t, :h], G[t, h : 2 * h], G[t, 2 * h : 3 * h], G[t, 3 * h :]
        tc = np.tanh(C[t])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = DZ[t]
        dz[:h] = dc * u * i * (1.0 - i)
        dz[h : 2 * h] = dh * tc * o * (1.0 - o)
        dz[2 * h : 3 * h] = dc * i * (1.0 - u * u)
        if t:
            dz[3 * h :] = dc * C[t - 1] * f * (1.0 - f)
            dh = st.U.T @ dz
            dc = dc * f
    st.dW += DZ.T @ X
    dbias = DZ.sum(axis=0)
    st.db += dbias
    st.dbh += dbias
    if T > 1:
        st.dU += DZ[1:].T @ H[:-1]


def seq_lstm_forward(seq: np.ndarray, params: ParamSet, label: int, grad: bool = False) -> tuple[float, np.ndarray]:
    cache = seq_lstm_states(np.asarray(seq, dtype=np.float64), params)
    h_last = cache["H"][-1]
    loss, probs = classify(h_last, params, label)
    if grad:
        dh = classify_backward(h_last, probs, label, params)
        seq_lstm_backward(cache, params, dh)
    return loss, probs


def count_han_params(e: int, h: int, l: int, w: int, s: int) -> int:
    """Table-style count of the HAN baseline (documented only, not implemented)."""
    return 12 * (e * h + h * h + 2 * h) + w + s + s * l + l

