"""Word-vector loading and leaf input vectors."""

from __future__ import annotations

import logging
from typing import Mapping

import numpy as np

from .doctree import DocNode, DocTree, report_category_of, tokenize

log = logging.getLogger(__name__)


class FormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmbeddingStore:
    """Token to vector lookup of fixed dimension. Unknown tokens map to zeros."""

    def __init__(self, dim: int, vocab: Mapping[str, np.ndarray] | None = None):
        self.dim = dim
        self.vocab: dict[str, np.ndarray] = {}
        for token, vec in (vocab or {}).items():
            self[token] = vec

    def __setitem__(self, token: str, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {token!r} has shape {vec.shape}, expected ({self.dim},)")
        self.vocab[token] = vec

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def __len__(self) -> int:
        return len(self.vocab)

    def get(self, token: str) -> np.ndarray | None:
        return self.vocab.get(token)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vocab.get(token)
        return np.zeros(self.dim) if vec is None else vec

    def save_word2vec_text(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(self.vocab)} {self.dim}\n")
            for token, vec in self.vocab.items():
                fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_word2vec_text(path) -> EmbeddingStore:
    """Read the word2vec text export: a "V e" header then V "token v1..ve" lines.

    A repeated token keeps its last vector and logs a warning.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError("header must be 'vocab_size dim'", 1)
        try:
            n_words, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError("header must hold two integers", 1) from None
        store = EmbeddingStore(dim)
        seen = 0
        lineno = 1
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if parts == [""]:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise FormatError(f"expected {dim} values for {token!r}, found {len(values)}", lineno)
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise FormatError(f"non-numeric value for {token!r}", lineno) from None
            if token in store:
                log.warning("duplicate token %r at line %d; keeping the later vector", token, lineno)
            store[token] = vec
            seen += 1
    if seen != n_words:
        raise FormatError(f"header declares {n_words} vectors, file has {seen}", lineno)
    return store


def random_store(tokens, dim: int, rng: np.random.Generator, scale: float = 1.0) -> EmbeddingStore:
    """Gaussian vectors for a fixed token list (synthetic corpora)."""
    store = EmbeddingStore(dim)
    for tok in tokens:
        store[tok] = rng.normal(0.0, scale, size=dim)
    return store


def embed_leaf(node: DocNode, store: EmbeddingStore, granularity: str) -> np.ndarray:
    if not node.is_leaf:
        raise ValueError(f"node {node.id} is not a leaf")
    if node.vector is not None:
        vec = np.asarray(node.vector, dtype=np.float64)
        if vec.shape != (store.dim,):
            raise ValueError(f"leaf {node.id} carries a {vec.size}-d vector, store is {store.dim}-d")
        return vec.copy()
    if granularity == "word":
        return store.lookup((node.text or "").lower()).copy()
    hits = [store.vocab[t] for t in tokenize(node.text or "") if t in store.vocab]
    if not hits:
        return np.zeros(store.dim)
    acc = np.zeros(store.dim)
    for v in hits:
        acc += v
    return acc / len(hits)


def append_category(x: np.ndarray, category_id: int, scale: float = 1.0) -> np.ndarray:
    """Append the category as one trailing real component (raw by default)."""
    if category_id < 0:
        raise ValueError("category_id must be non-negative")
    return np.concatenate([np.asarray(x, dtype=np.float64), [float(category_id) * scale]])


def leaf_vectors(
    tree: DocTree,
    store: EmbeddingStore,
    use_category: bool = False,
    category_scale: float = 1.0,
) -> np.ndarray:
    """(n_nodes, e) array with leaf rows filled and non-leaf rows zero.

    With ``use_category`` every leaf gets its report ancestor's category id
    appended (0 when the leaf has no report ancestor), so e grows by one.
    """
    dim = store.dim + (1 if use_category else 0)
    out = np.zeros((len(tree), dim))
    cats = report_category_of(tree) if use_category else None
    for nid in tree.leaf_ids:
        vec = embed_leaf(tree.nodes[nid], store, tree.leaf_granularity)
        if use_category:
            vec = append_category(vec, cats[nid] or 0, category_scale)
        out[nid] = vec
    return out
