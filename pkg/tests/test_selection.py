import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgg_mech.errors import DimMismatch, EmptyInteractionSet, KOutOfRange, MalformedRecord
from sgg_mech.selection import (
    TokenMatrix,
    interaction_scores,
    read_token_matrix,
    step1_scores,
    step1_select,
    step2_select,
    top_k,
    write_token_matrix,
)


def logistic(x):
    return 1 / (1 + math.exp(-x))


def test_step1_reference_value():
    got = step1_scores([[1.0, 0.0]], [[1, 0], [0, 1]], [[0.5, 0]], 0.5)
    assert got[0] == pytest.approx(math.sqrt(logistic(1.0) * logistic(0.5)), rel=1e-12)
    # the rounded hand value 0.67456 is low by 1.8e-5
    assert got[0] == pytest.approx(0.67456, abs=5e-5)


def test_step1_orthogonal_token_scores_half():
    assert step1_scores([[0, 0, 1.0]], [[1, 0, 0]], [[0, 1, 0]], 0.3)[0] == pytest.approx(0.5)


def test_step1_gamma_one_is_object_only(rng):
    v, t_o, t_r = rng.normal(size=(7, 4)), rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    expected = 1 / (1 + np.exp(-(v @ t_o.T).max(axis=1)))
    assert np.allclose(step1_scores(v, t_o, t_r, 1.0), expected)


def test_step1_dim_mismatch():
    with pytest.raises(DimMismatch):
        step1_scores(np.ones((2, 3)), np.ones((2, 4)), np.ones((1, 3)))


def test_top_k_examples():
    assert top_k([0.1, 0.9, 0.9, 0.2], 2) == [1, 2]
    assert top_k([5], 1) == [0]
    assert top_k([0.3, 0.1, 0.2], 3) == [0, 2, 1]
    for k in (0, 4):
        with pytest.raises(KOutOfRange):
            top_k([1, 2, 3], k)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=30), st.data())
def test_top_k_matches_sort_oracle(scores, data):
    k = data.draw(st.integers(1, len(scores)))
    oracle = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    assert top_k(scores, k) == oracle


def test_interaction_scores():
    assert interaction_scores([[1.0, 0.0]], [[1.0, 0.0]])[0] == 1.0
    assert interaction_scores([[1.0, 0.0]], [[0, 1], [0.4, 0]])[0] == pytest.approx(0.4)
    assert interaction_scores([[0.0, 0.0]], [[3, 1], [0.4, 0]])[0] == 0.0
    with pytest.raises(EmptyInteractionSet):
        interaction_scores([[1.0, 0.0]], np.zeros((0, 2)))


def test_step2_prefix_from_interactions():
    v = np.eye(4)
    t_in = [[0, 0, 1.0, 0]]
    t_o = [[1.0, 0.5, 0.2, 0.1]]
    sel = step2_select(v, t_in, t_o, 3, 1)
    assert sel.indices == [2, 0, 1]
    assert sel.interaction_count == 1


def test_step2_degenerate_l():
    rng = np.random.default_rng(5)
    v, t_in, t_o = rng.normal(size=(8, 3)), rng.normal(size=(2, 3)), rng.normal(size=(3, 3))
    obj = (v @ t_o.T).max(axis=1)
    assert step2_select(v, t_in, t_o, 4, 0).indices == top_k(obj, 4)
    assert step2_select(v, t_in, t_o, 4, 4).indices == top_k((v @ t_in.T).max(axis=1), 4)


def test_step2_falls_back_to_step1():
    v = np.eye(3)
    t_o, t_r = [[1.0, 0, 0]], [[0, 1.0, 0]]
    assert step2_select(v, np.zeros((0, 3)), t_o, 2, 1, T_r=t_r).indices == step1_select(v, t_o, t_r, 2).indices
    with pytest.raises(EmptyInteractionSet):
        step2_select(v, None, t_o, 2, 1)


def test_step2_bounds():
    with pytest.raises(KOutOfRange):
        step2_select(np.eye(3), np.eye(3), np.eye(3), 2, 3)
    with pytest.raises(KOutOfRange):
        step2_select(np.eye(3), np.eye(3), np.eye(3), 4, 1)


@settings(max_examples=100)
@given(st.integers(1, 12), st.data(), st.integers(0, 2**32 - 1))
def test_step2_invariants(n_v, data, seed):
    k = data.draw(st.integers(1, n_v))
    l = data.draw(st.integers(0, k))
    rng = np.random.default_rng(seed)
    sel = step2_select(rng.normal(size=(n_v, 3)), rng.normal(size=(2, 3)), rng.normal(size=(4, 3)), k, l)
    assert len(sel.indices) == k == len(set(sel.indices))
    assert all(0 <= i < n_v for i in sel.indices)


@pytest.mark.parametrize("binary", [False, True])
def test_token_matrix_round_trip(tmp_path, rng, binary):
    m = TokenMatrix(rng.normal(size=(5, 3)).astype(np.float32).astype(float), "interaction")
    path = tmp_path / "m.tok"
    write_token_matrix(m, path, binary=binary)
    back = read_token_matrix(path, role="interaction")
    assert back.role == "interaction"
    assert np.array_equal(back.data, m.data)


def test_token_matrix_text_is_exact(tmp_path, rng):
    m = TokenMatrix(rng.normal(size=(4, 6)), "visual")
    path = tmp_path / "m.txt"
    write_token_matrix(m, path)
    assert np.array_equal(read_token_matrix(path).data, m.data)


def test_token_matrix_malformed(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("2 2 visual\n1 2\n3\n")
    with pytest.raises(MalformedRecord) as info:
        read_token_matrix(path)
    assert info.value.line_no == 3
    path.write_bytes(b"TOKMAT01" + b"\x01" * 5)
    with pytest.raises(MalformedRecord):
        read_token_matrix(path)


def test_token_matrix_validation():
    with pytest.raises(ValueError):
        TokenMatrix(np.ones((2, 2)), "audio")
    with pytest.raises(ValueError):
        TokenMatrix([[float("nan")]])
