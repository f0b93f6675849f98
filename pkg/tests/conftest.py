from pathlib import Path

import numpy as np
import pytest

from structree.doctree import DocNode, DocTree
from structree.numerics import make_rng

FIXTURES = Path(__file__).parent / "fixtures"


def sent(text="s"):
    return DocNode("sentence", text=text)


def random_tree(rng, max_depth=3, max_children=3, label=0):
    """Random document: internal nodes are (nestable) sections, leaves sentences."""

    def build(depth):
        if depth >= max_depth or (depth > 0 and rng.random() < 0.3):
            return sent(f"leaf{rng.integers(1000)}")
        k = int(rng.integers(1, max_children + 1))
        return DocNode("section", children=[build(depth + 1) for _ in range(k)])

    root = DocNode("document", children=[build(1) for _ in range(int(rng.integers(1, max_children + 1)))])
    return DocTree(root, label=label)


def path_tree(length):
    """Chain of ``length`` nodes: sections down to one sentence leaf."""
    node = sent("leaf")
    for _ in range(length - 1):
        node = DocNode("section", children=[node])
    return DocTree(node)


def three_level_tree(label=1):
    """Document > 2 sections > 3 paragraphs > 5 sentence leaves."""
    root = DocNode(
        "document",
        children=[
            DocNode("section", children=[
                DocNode("paragraph", children=[sent("a"), sent("b")]),
                DocNode("paragraph", children=[sent("c")]),
            ]),
            DocNode("section", children=[DocNode("paragraph", children=[sent("d"), sent("e")])]),
        ],
    )
    return DocTree(root, label=label)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_tree():
    return three_level_tree()


def leaf_matrix(tree, e, rng):
    L = np.zeros((len(tree), e))
    for nid in tree.leaf_ids:
        L[nid] = rng.normal(size=e)
    return L


# acceptance criterion number -> PASS/FAIL line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
