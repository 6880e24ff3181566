import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbre import numerics as nx
from gbre.bag_graph import attention_record, bag_self_attention, dump_attention


def brute(S):
    N = len(S)
    cos = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            ni, nj = np.linalg.norm(S[i]), np.linalg.norm(S[j])
            cos[i, j] = 0.0 if ni == 0 or nj == 0 else S[i] @ S[j] / (ni * nj)
    alpha = np.exp(cos) / np.exp(cos).sum(1, keepdims=True)
    return alpha, alpha @ S


def test_singleton_bag_is_identity():
    s = np.array([[[0.3, -1.0, 2.0]]])
    out = bag_self_attention(s)
    np.testing.assert_array_equal(out.alpha.data, [[[1.0]]])
    np.testing.assert_allclose(out.updated.data, s)


def test_identical_pair_is_uniform():
    s = np.array([[[1.0, 2.0], [1.0, 2.0]]])
    out = bag_self_attention(s)
    np.testing.assert_allclose(out.alpha.data, 0.5)
    np.testing.assert_allclose(out.updated.data, s)


def test_three_random_vectors_vs_oracle():
    S = np.random.default_rng(0).normal(size=(3, 5))
    out = bag_self_attention(S[None])
    alpha, upd = brute(S)
    np.testing.assert_allclose(out.alpha.data[0], alpha, atol=1e-14)
    np.testing.assert_allclose(out.updated.data[0], upd, atol=1e-14)


def test_zero_row_scores_zero():
    S = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]])
    alpha, upd = brute(S)
    out = bag_self_attention(S[None])
    np.testing.assert_allclose(out.alpha.data[0], alpha, atol=1e-14)
    np.testing.assert_allclose(out.alpha.data[0, 0], 1 / 3)


def test_padding_is_ignored():
    S = np.random.default_rng(1).normal(size=(1, 3, 4))
    padded = np.concatenate([S, np.random.default_rng(2).normal(size=(1, 2, 4))], axis=1)
    mask = np.array([[True, True, True, False, False]])
    out = bag_self_attention(padded, mask)
    ref = bag_self_attention(S)
    np.testing.assert_allclose(out.alpha.data[0, :3, :3], ref.alpha.data[0], atol=1e-12)
    np.testing.assert_array_equal(out.alpha.data[0, :3, 3:], 0.0)
    np.testing.assert_array_equal(out.updated.data[0, 3:], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 10 ** 6))
def test_alpha_row_stochastic_with_unit_self_score(N, D, seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(1, N, D))
    out = bag_self_attention(S)
    a = out.alpha.data[0]
    np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-9)
    assert np.all(a > 0) and np.all(a <= 1)
    np.testing.assert_allclose(np.diag(nx.cosine_matrix(S).data[0]), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10 ** 6))
def test_permutation_equivariance(N, seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(1, N, 4))
    perm = rng.permutation(N)
    a, b = bag_self_attention(S), bag_self_attention(S[:, perm])
    np.testing.assert_allclose(b.updated.data[0], a.updated.data[0][perm], atol=1e-9)
    np.testing.assert_allclose(b.alpha.data[0], a.alpha.data[0][np.ix_(perm, perm)], atol=1e-9)


def test_dropout_only_with_rng():
    S = np.random.default_rng(3).normal(size=(1, 4, 6))
    plain = bag_self_attention(S, dropout_rate=0.3).updated.data
    dropped = bag_self_attention(S, dropout_rate=0.3, rng=np.random.default_rng(0)).updated.data
    np.testing.assert_allclose(plain, bag_self_attention(S).updated.data)
    kept = dropped != 0
    np.testing.assert_allclose(dropped[kept], plain[kept] / 0.7)


def test_rejects_nonfinite_input():
    with pytest.raises(ValueError):
        bag_self_attention(np.array([[[np.nan, 1.0]]]))


def test_attention_dump_keyed_by_index():
    out = bag_self_attention(np.random.default_rng(4).normal(size=(1, 3, 2)))
    rec = json.loads(dump_attention(out.alpha.data[0], 3))
    assert sorted(rec) == ["0", "1", "2"]
    assert all(abs(sum(row) - 1) < 1e-12 for row in rec.values())
    assert attention_record(out.alpha.data[0], 2)["1"] == list(out.alpha.data[0, 1, :2])
