import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structree import numerics as nx
from structree.numerics import ParamSet, Tape, TensorF


def test_matvec_identity_and_zero():
    x = nx.vector([3, -1])
    assert nx.matvec(TensorF(np.eye(2)), x).value.ravel().tolist() == [3, -1]
    assert nx.matvec(TensorF(np.zeros((2, 2))), x).value.ravel().tolist() == [0, 0]


def test_matvec_against_loop(rng):
    W = rng.normal(size=(4, 3))
    x = rng.normal(size=3)
    expected = [0.0] * 4
    for i in range(4):
        for j in range(3):
            expected[i] += W[i, j] * x[j]
    got = nx.matvec(TensorF(W), nx.vector(x)).value.ravel()
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-14)


def test_matvec_shape_error_names_shapes():
    with pytest.raises(nx.ShapeError, match=r"\(2, 3\).*\(2, 1\)"):
        nx.matvec(TensorF(np.zeros((2, 3))), nx.vector([1, 2]))


def test_elementwise_basics():
    assert np.all(nx.sigmoid(nx.zeros(3)).value == 0.5)
    assert np.all(nx.tanh(nx.zeros(3)).value == 0.0)
    assert nx.hadamard(nx.vector([1, 2]), nx.vector([3, 4])).value.ravel().tolist() == [3, 8]
    assert nx.scale(nx.vector([1, -2]), 3).value.ravel().tolist() == [3, -6]
    m = nx.mean_rows([nx.vector([1, 2]), nx.vector([3, 6])])
    assert m.value.ravel().tolist() == [2, 4]
    with pytest.raises(nx.ShapeError):
        nx.add(nx.vector([1, 2]), nx.vector([1, 2, 3]))


def test_sigmoid_extremes_finite():
    out = nx.stable_sigmoid(np.array([-1000.0, 1000.0]))
    assert out[0] == 0.0 and out[1] == 1.0


def test_softmax_xent_uniform():
    loss, probs = nx.softmax_xent(nx.zeros(4), 2)
    assert probs.value.ravel().tolist() == [0.25] * 4
    assert loss.value[0, 0] == pytest.approx(math.log(4), abs=1e-15)


def test_softmax_xent_large_logits():
    loss, probs = nx.softmax_xent(nx.vector([1000.0, 0.0]), 0)
    assert loss.value[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert abs(probs.value.sum() - 1) <= 1e-12


def test_softmax_xent_matches_extended_precision(rng):
    mpmath.mp.dps = 50
    for _ in range(20):
        logits = rng.normal(scale=5, size=6)
        label = int(rng.integers(6))
        loss, probs = nx.xent(logits, label)
        lse = mpmath.log(mpmath.fsum(mpmath.e ** mpmath.mpf(float(z)) for z in logits))
        ref = lse - mpmath.mpf(float(logits[label]))
        assert abs(loss - float(ref)) <= 1e-13
        ref_p = [float(mpmath.e ** (mpmath.mpf(float(z)) - lse)) for z in logits]
        np.testing.assert_allclose(probs, ref_p, rtol=1e-13)
        assert abs(probs.sum() - 1.0) <= 1e-12


def test_softmax_xent_bad_label():
    with pytest.raises(ValueError):
        nx.softmax_xent(nx.zeros(3), 3)


def test_softmax_xent_gradient_is_probs_minus_onehot():
    logits = nx.vector([0.3, -1.2, 2.0])
    with Tape() as tape:
        loss, probs = nx.softmax_xent(logits, 1)
    tape.backward(loss)
    expected = probs.value.copy()
    expected[1] -= 1
    np.testing.assert_allclose(logits.grad, expected, atol=1e-15)


def test_fd_square():
    p = ParamSet([("theta", (1, 1))])
    p["theta"].value[0, 0] = 3.0

    def f():
        t = p["theta"].value[0, 0]
        p["theta"].grad[0, 0] += 2 * t
        return t * t

    report = nx.finite_diff_check(f, p, epsilon=1e-5, tol=1e-4)
    assert report.max_rel_error < 1e-9
    assert report.passed


def test_fd_constant():
    p = ParamSet([("a", (2, 1))])
    report = nx.finite_diff_check(lambda: 7.0, p)
    assert report.max_abs_error == 0.0 and report.passed


def test_fd_rejects_nonfinite():
    p = ParamSet([("a", (1, 1))])
    with pytest.raises(nx.NumericError):
        nx.finite_diff_check(lambda: float("nan"), p)


def test_fd_detects_wrong_gradient():
    p = ParamSet([("a", (1, 1))])
    p["a"].value[0, 0] = 1.0

    def f():
        a = p["a"].value[0, 0]
        p["a"].grad[0, 0] += 3 * a  # wrong: should be 2a
        return a * a

    assert not nx.finite_diff_check(f, p).passed


def _composed(p, x):
    """Small network exercising every tape op."""
    a = nx.tanh(nx.add(nx.matvec(p["W"], x), p["b"]))
    b = nx.sigmoid(nx.matvec(p["V"], a))
    c = nx.hadamard(a, b)
    d = nx.mean_rows([c, nx.scale(a, 0.5), b])
    e = nx.relu(nx.add(nx.matvec(p["O"], d), p["c"]))
    loss, _ = nx.softmax_xent(e, 1)
    return loss


def _make_composed(rng):
    p = ParamSet([("W", (3, 4)), ("b", (3, 1)), ("V", (3, 3)), ("O", (3, 3)), ("c", (3, 1))])
    p.flat[...] = rng.normal(size=p.size)
    return p


def _loss_fn(p, x):
    def f():
        with Tape() as tape:
            loss = _composed(p, x)
        tape.backward(loss)
        return float(loss.value[0, 0])

    return f


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.integers(0, 2**32 - 1))
def test_fd_passes_for_composed_expressions(seed):
    rng = nx.make_rng(seed)
    p = _make_composed(rng)
    x = nx.vector(rng.normal(size=4))
    report = nx.finite_diff_check(_loss_fn(p, x), p, epsilon=1e-5, tol=1e-4)
    assert report.passed, report


def test_backward_twice_doubles(rng):
    p = _make_composed(rng)
    x = nx.vector(rng.normal(size=4))
    f = _loss_fn(p, x)
    p.zero_grad()
    f()
    once = p.flat_grad.copy()
    f()
    assert np.array_equal(p.flat_grad, 2 * once)
    p.zero_grad()
    assert not p.flat_grad.any()


def test_repeated_runs_bit_identical(rng):
    p = _make_composed(rng)
    x = nx.vector(rng.normal(size=4))
    f = _loss_fn(p, x)
    p.zero_grad()
    l1 = f()
    g1 = p.flat_grad.copy()
    p.zero_grad()
    l2 = f()
    assert l1 == l2 and np.array_equal(g1, p.flat_grad)


def test_tensor_invariants():
    t = TensorF(np.ones((2, 3)))
    assert t.grad.shape == t.value.shape
    t.grad += 5
    t.zero_grad()
    assert not t.grad.any()
    with pytest.raises(nx.ShapeError):
        TensorF(np.ones((2, 2)), grad=np.ones((3, 3)))


def test_paramset_views_share_buffer():
    p = ParamSet([("a", (2, 2)), ("b", (2, 1))])
    p.flat[...] = np.arange(6)
    assert p["b"].value.ravel().tolist() == [4, 5]
    p["a"].grad[0, 1] = 9
    assert p.flat_grad[1] == 9
    vals, _ = p.block("a", "b")
    assert vals.size == 6


def test_rng_deterministic():
    assert np.array_equal(nx.make_rng(7).normal(size=5), nx.make_rng(7).normal(size=5))
    assert not np.array_equal(nx.make_rng(7).normal(size=5), nx.make_rng(8).normal(size=5))
