import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgg_mech.errors import (
    EmptyInput,
    EmptyNegativeSet,
    InvalidPair,
    InvalidProbability,
    LengthMismatch,
    MissingFeature,
    NonFiniteComponent,
    ShapeMismatch,
    TooFewEdges,
)
from sgg_mech.losses import (
    EdgeFeature,
    LossComponents,
    LossWeights,
    bce_relation_loss,
    build_edge_features,
    cosine_sim_matrix,
    finite_diff_grad_check,
    focal_loss,
    focal_loss_grad,
    giou_loss,
    l1_box_loss,
    rrd_loss,
    rrd_loss_grad,
    total_loss,
    vrd_loss,
)
from sgg_mech.matching import QueryPrediction

from conftest import box


def edges(*vectors, negative=True):
    return [EdgeFeature(np.array(v, dtype=float), (i, i + 1), negative) for i, v in enumerate(vectors)]


# ---- boxes


def test_l1_box_loss():
    a = [box(0.1, 0.1, 0.5, 0.5)]
    assert l1_box_loss(a, a) == 0.0
    assert l1_box_loss([box(0.2, 0.2, 0.6, 0.6)], a) == pytest.approx(0.4)
    assert l1_box_loss([box(0.2, 0.2, 0.6, 0.6), box(0, 0, 1, 1)], [a[0], box(0, 0, 1, 1)]) == pytest.approx(0.2)


def test_l1_box_loss_errors():
    with pytest.raises(LengthMismatch):
        l1_box_loss([box(0, 0, 1, 1)], [])
    with pytest.raises(EmptyInput):
        l1_box_loss([], [])


def test_giou_loss_examples():
    assert giou_loss(box(0, 0, 1, 1), box(0, 0, 1, 1)) == 0.0
    # terms (0, 2, 3) and (1, 7, 9)
    assert giou_loss(box(0, 0, 1, 1), box(2, 0, 3, 1)) == pytest.approx(float(1 - 0 + Fraction(1, 3)), abs=1e-12)
    expected = 1 - Fraction(1, 7) + Fraction(2, 9)
    assert expected == Fraction(68, 63)
    assert giou_loss(box(0, 0, 2, 2), box(1, 1, 3, 3)) == pytest.approx(float(expected), abs=1e-12)


@st.composite
def pos_boxes(draw):
    f = st.floats(0, 10, allow_nan=False)
    x1, y1 = draw(f), draw(f)
    w, h = draw(st.floats(0.01, 5)), draw(st.floats(0.01, 5))
    return box(x1, y1, x1 + w, y1 + h)


@given(pos_boxes(), pos_boxes())
def test_giou_loss_bounds(a, b):
    value = giou_loss(a, b)
    assert -1e-12 <= value <= 2.0
    assert giou_loss(a, a) == pytest.approx(0.0, abs=1e-12)


# ---- classification


def test_focal_loss_examples():
    assert focal_loss(1.0, 0.25, 2.0) == 0.0
    assert focal_loss(0.5, 1.0, 0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert focal_loss(0.9, 0.25, 2.0) == pytest.approx(0.25 * 0.01 * -math.log(0.9), rel=1e-12)
    assert focal_loss(0.9, 0.25, 2.0) == pytest.approx(2.634e-4, rel=1e-3)


@given(st.floats(1e-6, 1.0))
def test_focal_reduces_to_cross_entropy(y):
    assert focal_loss(y, 1.0, 0.0) == -math.log(y)


@pytest.mark.parametrize("y", [0.0, -0.1, 1.01])
def test_focal_rejects_bad_probability(y):
    with pytest.raises(InvalidProbability):
        focal_loss(y)


def test_focal_gradient_at_07():
    r = finite_diff_grad_check(
        lambda x: focal_loss(x[0]), lambda x: np.array([focal_loss_grad(x[0])]), [0.7], step=1e-6
    )
    assert r.max_rel_error < 1e-4


def test_bce_examples():
    eps = 1e-7
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    pred = np.where(y == 1.0, 1 - eps, eps)
    assert bce_relation_loss(pred, y) <= eps * 20
    assert bce_relation_loss([[0.5]], [[1.0]]) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_relation_loss([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.log(2), abs=1e-12)


def test_bce_errors():
    with pytest.raises(ShapeMismatch):
        bce_relation_loss([0.5, 0.5], [1.0])
    with pytest.raises(InvalidProbability):
        bce_relation_loss([1.0], [1.0])


# ---- edges


def test_build_edge_features():
    qs = [QueryPrediction(box(0, 0, 1, 1), [1.0], [1.0, 0.0]), QueryPrediction(box(0, 0, 1, 1), [1.0], [0.0, 1.0])]
    (e,) = build_edge_features(qs, [(0, 1)])
    assert e.vector.tolist() == [1.0, 0.0, 0.0, 1.0]
    (z,) = build_edge_features(qs, [(0, 1)], global_rel=np.zeros(2))
    assert z.vector.tolist() == e.vector.tolist()
    (g,) = build_edge_features(qs, [(0, 1)], global_rel=np.array([1.0, 2.0]), negative_pairs=[(0, 1)])
    assert g.vector.tolist() == [2.0, 2.0, 1.0, 3.0] and g.is_negative
    with pytest.raises(InvalidPair):
        build_edge_features(qs, [(1, 1)])
    with pytest.raises(MissingFeature):
        build_edge_features([qs[0], QueryPrediction(box(0, 0, 1, 1), [1.0])], [(0, 1)])


# ---- distillation


def test_vrd_examples():
    a = edges([1, 2], [3, 4])
    assert vrd_loss(a, a) == 0.0
    assert vrd_loss(edges([1, 2]), edges([0, 0])) == 3.0
    assert vrd_loss(edges([1, 2], [1, 0]), edges([0, 0], [0, 0])) == 2.0


def test_vrd_errors():
    with pytest.raises(LengthMismatch):
        vrd_loss(edges([1, 2]), edges([1, 2], [3, 4]))
    with pytest.raises(EmptyNegativeSet):
        vrd_loss([], [])


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_vrd_properties(n, d, seed):
    r = np.random.default_rng(seed)
    s, t = r.normal(size=(n, d)), r.normal(size=(n, d))
    assert vrd_loss(s, t) >= 0
    assert vrd_loss(s, t) == vrd_loss(t, s)
    assert vrd_loss(s, s) == 0


def test_cosine_matrix_examples():
    assert cosine_sim_matrix(edges([1, 0], [0, 1])).tolist() == [[1, 0], [0, 1]]
    assert np.allclose(cosine_sim_matrix(edges([1, 2], [1, 2], [1, 2])), 1.0)
    assert cosine_sim_matrix(edges([1, 2], [2, 4]))[0, 1] == pytest.approx(1.0)
    m = cosine_sim_matrix(edges([0, 0], [1, 0]))
    assert m.tolist() == [[0, 0], [0, 1]]
    with pytest.raises(TooFewEdges):
        cosine_sim_matrix(edges([1, 0]))


@settings(max_examples=50)
@given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_cosine_matrix_properties(n, d, seed):
    e = np.random.default_rng(seed).normal(size=(n, d))
    m = cosine_sim_matrix(e)
    assert np.allclose(m, m.T)
    assert np.allclose(np.diag(m), 1.0)
    assert np.all(np.abs(m) <= 1 + 1e-12)


def test_rrd_examples():
    t = edges([1, 0], [0, 1])
    assert rrd_loss(t, t) == 0.0
    # ||ones - I||_F^2 / 4
    assert rrd_loss(edges([1, 0], [1, 0]), t) == pytest.approx(0.5, abs=1e-12)


def test_rrd_rotation_invariance(rng):
    t = rng.normal(size=(4, 6))
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert rrd_loss(t @ q.T, t) < 1e-8
    assert rrd_loss(3.0 * t @ q.T, t) < 1e-8
    assert vrd_loss(t @ q.T, t) > 0.1


def test_rrd_gradient_random_four_edge_sets(rng):
    for _ in range(10):
        t, s = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        r = finite_diff_grad_check(lambda x: rrd_loss(x, t), lambda x: rrd_loss_grad(x, t), s)
        assert r.max_rel_error < 1e-4


def test_quadratic_gradient_check():
    a = np.array([1.0, -2.0, 0.5])
    r = finite_diff_grad_check(lambda x: float(x @ x + a @ x), lambda x: 2 * x + a, [0.3, 0.7, -1.1], step=1e-4)
    assert r.max_rel_error < 1e-8 and r.passed


def test_grad_check_reports_failure():
    r = finite_diff_grad_check(lambda x: float(x @ x), lambda x: 3 * x, [1.0, 2.0])
    assert not r.passed


# ---- combined


def test_total_loss_examples():
    assert total_loss(LossComponents()) == 0.0
    assert total_loss(LossComponents(1, 1, 1, 1, 10, 2)) == pytest.approx(6.0)
    assert total_loss({"reg": 1, "giou": 2, "obj": 3, "rel": 4, "vrd": 9, "rrd": 9}, LossWeights(0, 0)) == 10.0


def test_total_loss_rejects_nan():
    with pytest.raises(NonFiniteComponent):
        total_loss(LossComponents(reg=float("nan")))


def test_loss_weight_defaults():
    w = LossWeights()
    assert (w.beta1, w.beta2) == (0.1, 0.5)
