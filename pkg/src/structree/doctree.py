"""Hierarchical document trees, their parsers, and a synthetic corpus.

Node ids are assigned in depth-first pre-order, so every descendant has a
larger id than its ancestors and ``range(n)`` reversed is a valid bottom-up
order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

KINDS = ("word", "sentence", "paragraph", "section", "document", "report", "patient")

# Higher rank sits higher in the tree. Sections may nest (subsections).
LEVEL_RANK = {
    "word": 0,
    "sentence": 1,
    "paragraph": 2,
    "section": 3,
    "report": 4,
    "document": 4,
    "patient": 5,
}
NESTABLE = {"section"}


class ParseError(ValueError):
    """Input does not match the tree schema. ``path`` locates the node."""

    def __init__(self, message: str, path: str = "root"):
        super().__init__(f"{path}: {message}")
        self.path = path


class StructureError(ValueError):
    pass


@dataclass
class DocNode:
    kind: str
    children: list["DocNode"] = field(default_factory=list)
    text: str | None = None
    title: str | None = None
    category_id: int | None = None
    vector: list[float] | None = None
    id: int = -1

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["DocNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.title is not None:
            out["title"] = self.title
        if self.text is not None:
            out["text"] = self.text
        if self.category_id is not None:
            out["category_id"] = self.category_id
        if self.vector is not None:
            out["vector"] = list(self.vector)
        if self.children:
            out["children"] = [c.to_dict() for c in self.children]
        return out


@dataclass(frozen=True)
class CorpusStats:
    sentences: int
    paragraphs: int
    sections: int


class DocTree:
    """A labeled document (or document set) tree.

    ``nodes[i]`` is the node with id ``i``; ``parent[i]`` is -1 for the root.
    """

    def __init__(self, root: DocNode, label: int = 0, leaf_granularity: str = "sentence"):
        if leaf_granularity not in ("word", "sentence"):
            raise StructureError(f"unknown leaf granularity {leaf_granularity!r}")
        self.root = root
        self.label = label
        self.leaf_granularity = leaf_granularity
        self.nodes: list[DocNode] = []
        self.parent: list[int] = []
        self.depth: list[int] = []
        self._index()
        self.validate()

    def _index(self) -> None:
        stack: list[tuple[DocNode, int, int]] = [(self.root, -1, 0)]
        while stack:
            node, parent, depth = stack.pop()
            node.id = len(self.nodes)
            self.nodes.append(node)
            self.parent.append(parent)
            self.depth.append(depth)
            for child in reversed(node.children):
                stack.append((child, node.id, depth + 1))
        self.children_ids: list[list[int]] = [[c.id for c in n.children] for n in self.nodes]

    def validate(self) -> None:
        for node in self.nodes:
            if node.kind not in KINDS:
                raise StructureError(f"node {node.id}: unknown kind {node.kind!r}")
            if node.is_leaf:
                if node.text is None and node.vector is None:
                    raise StructureError(f"leaf {node.id} has no text")
                if node.kind != self.leaf_granularity:
                    raise StructureError(
                        f"leaf {node.id} is a {node.kind}, expected {self.leaf_granularity}"
                    )
            for child in node.children:
                if not _descends(node.kind, child.kind):
                    raise StructureError(
                        f"node {child.id}: {child.kind} cannot sit under {node.kind}"
                    )

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def leaf_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_leaf]

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    def postorder(self) -> list[int]:
        out: list[int] = []
        stack = [(0, False)]
        while stack:
            nid, expanded = stack.pop()
            if expanded:
                out.append(nid)
                continue
            stack.append((nid, True))
            for c in reversed(self.children_ids[nid]):
                stack.append((c, False))
        return out

    def stats(self) -> CorpusStats:
        counts = {"sentence": 0, "paragraph": 0, "section": 0}
        for node in self.nodes:
            if node.kind in counts:
                counts[node.kind] += 1
        return CorpusStats(counts["sentence"], counts["paragraph"], counts["section"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "leaf_granularity": self.leaf_granularity,
            "root": self.root.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def _descends(parent: str, child: str) -> bool:
    if parent == child:
        return parent in NESTABLE
    return LEVEL_RANK[parent] > LEVEL_RANK[child]


# ---------------------------------------------------------------------------
# JSON


def _node_from_obj(obj: Any, path: str) -> DocNode:
    if not isinstance(obj, dict):
        raise ParseError("node must be an object", path)
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ParseError(f"invalid kind {kind!r}", path)
    unknown = set(obj) - {"kind", "title", "text", "category_id", "children", "vector"}
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}", path)
    for key in ("title", "text"):
        if key in obj and not isinstance(obj[key], str):
            raise ParseError(f"{key} must be a string", path)
    cat = obj.get("category_id")
    if cat is not None and (not isinstance(cat, int) or isinstance(cat, bool) or cat < 0):
        raise ParseError("category_id must be a non-negative integer", path)
    vec = obj.get("vector")
    if vec is not None:
        if not isinstance(vec, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec
        ):
            raise ParseError("vector must be a list of numbers", path)
        vec = [float(v) for v in vec]
    children_obj = obj.get("children", [])
    if not isinstance(children_obj, list):
        raise ParseError("children must be a list", path)
    if "children" in obj and not children_obj:
        raise StructureError(f"{path}: non-leaf {kind} has an empty child list")
    children = [_node_from_obj(c, f"{path}.children[{i}]") for i, c in enumerate(children_obj)]
    if not children and obj.get("text") is None and vec is None:
        raise ParseError("leaf needs text", path)
    return DocNode(
        kind=kind,
        children=children,
        text=obj.get("text"),
        title=obj.get("title"),
        category_id=cat,
        vector=vec,
    )


def tree_from_obj(obj: Any) -> DocTree:
    if not isinstance(obj, dict):
        raise ParseError("document must be an object", "$")
    label = obj.get("label", 0)
    if not isinstance(label, int) or isinstance(label, bool) or label < 0:
        raise ParseError("label must be a non-negative integer", "$")
    gran = obj.get("leaf_granularity", "sentence")
    if gran not in ("word", "sentence"):
        raise ParseError(f"invalid leaf_granularity {gran!r}", "$")
    if "root" not in obj:
        raise ParseError("missing root", "$")
    root = _node_from_obj(obj["root"], "root")
    return DocTree(root, label=label, leaf_granularity=gran)


def parse_json_tree(data: bytes | str) -> DocTree:
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", "$") from exc
    return tree_from_obj(obj)


def read_corpus(path) -> list[DocTree]:
    """Read a JSON-lines corpus; blank lines are skipped."""
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                trees.append(parse_json_tree(line))
            except (ParseError, StructureError) as exc:
                raise ParseError(f"line {lineno}: {exc}", "$") from exc
    return trees


def write_corpus(trees: Sequence[DocTree], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tree in trees:
            fh.write(tree.to_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# sectioned plain text

_HEADING = re.compile(r"^(=+)\s*(.*?)\s*=*\s*$")
_SENTENCE_END = re.compile(r"(?<=[.?!])\s+")


def split_sentences(paragraph: str) -> list[str]:
    parts = _SENTENCE_END.split(" ".join(paragraph.split()))
    return [p for p in parts if p]


def tokenize(text: str) -> list[str]:
    return re.findall(r"\w+(?:'\w+)?|[^\w\s]", text.lower())


def _paragraph_node(lines: list[str], granularity: str) -> DocNode:
    sents = []
    for s in split_sentences(" ".join(lines)):
        if granularity == "word":
            words = [DocNode("word", text=t) for t in tokenize(s)]
            if words:
                sents.append(DocNode("sentence", children=words, text=None))
        else:
            sents.append(DocNode("sentence", text=s))
    return DocNode("paragraph", children=sents)


def parse_sectioned_text(text: str, label: int = 0, granularity: str = "sentence") -> DocTree:
    """Parse '='-marked headings, blank-line paragraphs, punctuation sentences.

    Text before the first heading becomes an untitled lead section. A heading
    of depth d nests under the nearest preceding heading of smaller depth.
    """
    lines = text.replace("\r\n", "\n").split("\n")
    if not any(l.strip() for l in lines):
        raise StructureError("empty document")

    root = DocNode("document")
    # stack of (depth, section node); depth 0 is the root
    stack: list[tuple[int, DocNode]] = [(0, root)]
    current: DocNode | None = None
    para: list[str] = []

    def flush():
        nonlocal para, current
        if para:
            if current is None:
                # lead text: a top-level untitled section, not a heading
                current = DocNode("section", title=None)
                root.children.append(current)
            node = _paragraph_node(para, granularity)
            if node.children:
                current.children.append(node)
        para = []

    for line in lines:
        m = _HEADING.match(line.strip())
        if m and line.strip():
            flush()
            depth = len(m.group(1))
            while stack[-1][0] >= depth:
                stack.pop()
            section = DocNode("section", title=m.group(2))
            stack[-1][1].children.append(section)
            stack.append((depth, section))
            current = section
        elif not line.strip():
            flush()
        else:
            para.append(line.strip())
    flush()

    for node in root.walk():
        if node.kind == "section" and not node.children:
            raise StructureError(f"section {node.title!r} has no body text")
    if not root.children:
        raise StructureError("document has no content")
    return DocTree(root, label=label, leaf_granularity=granularity)


# ---------------------------------------------------------------------------
# filtering and document sets

MIN_SECTIONS = 2
MIN_PARAGRAPHS = 3
MIN_SENTENCES = 5


def passes_length_filter(stats: CorpusStats) -> bool:
    return (
        stats.sections >= MIN_SECTIONS
        and stats.paragraphs >= MIN_PARAGRAPHS
        and stats.sentences >= MIN_SENTENCES
    )


def build_patient_tree(reports: Sequence[tuple[int, DocTree]], label: int = 0) -> DocTree:
    """Wrap report trees under one patient root, tagging each with its category."""
    if not reports:
        raise StructureError("a patient needs at least one report")
    gran = reports[0][1].leaf_granularity
    children = []
    for category_id, report in reports:
        if report.leaf_granularity != gran:
            raise StructureError("reports mix leaf granularities")
        src = report.root
        if src.kind in ("document", "report"):
            kids = [_clone(c) for c in src.children]
        else:
            kids = [_clone(src)]
        flat = []
        for k in kids:
            # report > paragraph > sentence; sections are flattened away
            flat.extend(_paragraphs_of(k))
        children.append(DocNode("report", children=flat, category_id=int(category_id)))
    return DocTree(DocNode("patient", children=children), label=label, leaf_granularity=gran)


def _paragraphs_of(node: DocNode) -> list[DocNode]:
    if node.kind == "section":
        out = []
        for c in node.children:
            out.extend(_paragraphs_of(c))
        return out
    return [node]


def _clone(node: DocNode) -> DocNode:
    return DocNode(
        kind=node.kind,
        children=[_clone(c) for c in node.children],
        text=node.text,
        title=node.title,
        category_id=node.category_id,
        vector=None if node.vector is None else list(node.vector),
    )


def report_category_of(tree: DocTree) -> list[int | None]:
    """Category id of the nearest report ancestor (or self) for every node."""
    out: list[int | None] = [None] * len(tree)
    for nid, node in enumerate(tree.nodes):
        if node.kind == "report":
            out[nid] = node.category_id
        elif tree.parent[nid] >= 0:
            out[nid] = out[tree.parent[nid]]
    return out


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class DepthSpec:
    """Shape of generated documents.

    Every document has ``sections`` sections with ``paragraphs`` paragraphs
    of ``sentences`` sentences each, ``words`` tokens per sentence.
    """

    sections: int = 6
    paragraphs: int = 3
    sentences: int = 4
    words: int = 6
    n_filler: int = 200


MARKER = "focus"


def class_token(c: int) -> str:
    return f"topic{c}"


def filler_token(i: int) -> str:
    return f"w{i}"


def synth_vocab(n_classes: int, spec: DepthSpec = DepthSpec()) -> list[str]:
    return [MARKER] + [class_token(c) for c in range(n_classes)] + [
        filler_token(i) for i in range(spec.n_filler)
    ]


def synth_corpus(
    n_docs: int,
    n_classes: int,
    depth_spec: DepthSpec = DepthSpec(),
    rng: np.random.Generator | int = 0,
) -> list[DocTree]:
    """Documents whose label is planted in one designated section.

    The designated section is the one whose sentences carry the marker token.
    Each of its sentences also carries the class token of the label. Every
    other section is a distractor: each of its sentences carries the class
    token of one random distractor class, drawn per section. Section order is
    shuffled, so the designated section can sit anywhere. Labels cycle through
    the classes before shuffling, which balances them exactly when
    ``n_docs`` is a multiple of ``n_classes``.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    if depth_spec.sections < 2:
        raise ValueError("need at least one distractor section")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.PCG64(int(rng)))
    labels = np.arange(n_docs) % n_classes
    rng.shuffle(labels)
    docs = []
    s = depth_spec
    for label in labels:
        designated = int(rng.integers(s.sections))
        sections = []
        for si in range(s.sections):
            if si == designated:
                signal = [MARKER, class_token(int(label))]
            else:
                other = int(rng.integers(n_classes - 1))
                other += other >= label
                signal = [class_token(other)]
            paras = []
            for _ in range(s.paragraphs):
                sents = []
                for _ in range(s.sentences):
                    n_fill = max(s.words - len(signal), 0)
                    words = [filler_token(int(i)) for i in rng.integers(s.n_filler, size=n_fill)]
                    words.extend(signal)
                    order = rng.permutation(len(words))
                    sents.append(" ".join(words[i] for i in order) + ".")
                paras.append(DocNode("paragraph", children=[DocNode("sentence", text=t) for t in sents]))
            sections.append(DocNode("section", title=f"Section {si + 1}", children=paras))
        docs.append(DocTree(DocNode("document", children=sections), label=int(label)))
    return docs


def oracle_label(tree: DocTree) -> int | None:
    """Rule-based reading of the planted signal; None if no marker is found."""
    for node in tree.nodes:
        if node.kind != "section":
            continue
        tokens = [t for leaf in node.walk() if leaf.is_leaf for t in tokenize(leaf.text or "")]
        if MARKER in tokens:
            for t in tokens:
                if t.startswith("topic"):
                    return int(t[len("topic"):])
    return None
