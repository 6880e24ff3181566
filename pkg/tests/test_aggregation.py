import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbre import aggregation as agg
from gbre import numerics as nx
from gbre.numerics import Param


def make_params(rng, R, D, zero_att=False):
    return {"att_diag": Param(np.zeros(D) if zero_att else rng.normal(size=D), name="att_diag"),
            "rel_emb": Param(rng.normal(size=(R, D)), name="rel_emb"),
            "cls_weight": Param(rng.normal(size=(R, D)), name="cls_weight"),
            "cls_bias": Param(rng.normal(size=R), name="cls_bias")}


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def brute_att(S, rel, p):
    c = np.array([s @ (p["att_diag"].data * p["rel_emb"].data[rel]) for s in S])
    beta = softmax(c)
    return beta @ S, beta


def test_singleton_attention():
    rng = np.random.default_rng(0)
    p = make_params(rng, 3, 4)
    S = rng.normal(size=(1, 1, 4))
    z, beta = agg.selective_attention(S, None, [2], p)
    np.testing.assert_array_equal(beta.data, [[1.0]])
    np.testing.assert_allclose(z.data[0], S[0, 0])


def test_zero_diagonal_gives_mean():
    rng = np.random.default_rng(1)
    p = make_params(rng, 3, 4, zero_att=True)
    S = rng.normal(size=(1, 5, 4))
    z, beta = agg.selective_attention(S, None, [1], p)
    np.testing.assert_allclose(beta.data, 0.2)
    np.testing.assert_allclose(z.data[0], S[0].mean(0))


def test_attention_vs_oracle_with_padding():
    rng = np.random.default_rng(2)
    p = make_params(rng, 4, 3)
    S = rng.normal(size=(2, 4, 3))
    mask = np.array([[True, True, True, False], [True, True, True, True]])
    z, beta = agg.selective_attention(S, mask, [3, 0], p)
    for b, (n, rel) in enumerate([(3, 3), (4, 0)]):
        zz, bb = brute_att(S[b, :n], rel, p)
        np.testing.assert_allclose(z.data[b], zz, atol=1e-14)
        np.testing.assert_allclose(beta.data[b, :n], bb, atol=1e-14)
    assert beta.data[0, 3] == 0.0


def test_attention_rejects_bad_relation():
    p = make_params(np.random.default_rng(3), 3, 2)
    with pytest.raises(IndexError):
        agg.selective_attention(np.ones((1, 2, 2)), None, [3], p)


def test_one_selects_planted_max_and_breaks_ties_low():
    S = np.array([[[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]])
    z = agg.aggregate_one(S, None, np.array([[0.1, 2.0, -1.0]]))
    np.testing.assert_array_equal(z.data[0], [0.0, 1.0])
    z = agg.aggregate_one(S, None, np.array([[0.5, 0.5, 0.5]]))
    np.testing.assert_array_equal(z.data[0], [1.0, 0.0])
    z = agg.aggregate_one(S, np.array([[True, True, False]]), np.array([[0.0, -1.0, 9.0]]))
    np.testing.assert_array_equal(z.data[0], [1.0, 0.0])


def test_one_scores_from_classifier():
    rng = np.random.default_rng(4)
    p = make_params(rng, 3, 2)
    S = rng.normal(size=(1, 4, 2))
    z, _ = agg.aggregate(S, None, [1], p, "one")
    logits = S[0] @ p["cls_weight"].data.T + p["cls_bias"].data
    np.testing.assert_array_equal(z.data[0], S[0, np.argmax(logits[:, 1])])


def test_average_cases():
    one = np.array([[[2.0, -3.0]]])
    np.testing.assert_array_equal(agg.aggregate_ave(one).data, [[2.0, -3.0]])
    opp = np.array([[[1.0, 2.0], [-1.0, -2.0]]])
    np.testing.assert_array_equal(agg.aggregate_ave(opp).data, [[0.0, 0.0]])
    S = np.random.default_rng(5).normal(size=(1, 4, 3))
    np.testing.assert_allclose(agg.aggregate_ave(S).data[0], S[0].mean(0))
    mask = np.array([[True, True, False, False]])
    np.testing.assert_allclose(agg.aggregate_ave(S, mask).data[0], S[0, :2].mean(0))


def test_classifier_cases():
    R, D = 4, 3
    zero = {"cls_weight": np.zeros((R, D)), "cls_bias": np.zeros(R)}
    np.testing.assert_allclose(agg.probabilities(agg.classify(np.ones((1, D)), zero)), 0.25)
    huge = {"cls_weight": np.zeros((R, D)), "cls_bias": np.array([0, 0, 1e3, 0.0])}
    np.testing.assert_allclose(agg.probabilities(agg.classify(np.ones((1, D)), huge)),
                               [[0, 0, 1, 0]], atol=1e-12)
    rng = np.random.default_rng(6)
    W, b, z = rng.normal(size=(R, D)), rng.normal(size=R), rng.normal(size=D)
    p = agg.probabilities(agg.classify(z[None], {"cls_weight": W, "cls_bias": b}))
    np.testing.assert_allclose(p[0], softmax(W @ z + b), atol=1e-15)


def test_eval_singleton_equals_classify():
    rng = np.random.default_rng(7)
    p = make_params(rng, 5, 3)
    S = rng.normal(size=(1, 1, 3))
    for mode in agg.MODES:
        probs = agg.score_bag_eval(S, None, p, mode)
        np.testing.assert_allclose(probs, agg.probabilities(agg.classify(S[:, 0], p)), atol=1e-14)


def test_eval_two_relation_exhaustive():
    rng = np.random.default_rng(8)
    p = make_params(rng, 2, 3)
    S = rng.normal(size=(1, 3, 3))
    probs, weights = agg.score_bag_eval(S, None, p, "att", return_weights=True)
    for r in range(2):
        z, beta = brute_att(S[0], r, p)
        pr = softmax(p["cls_weight"].data @ z + p["cls_bias"].data)
        assert probs[0, r] == pytest.approx(pr[r], abs=1e-14)
        np.testing.assert_allclose(weights[0, r], beta, atol=1e-14)


def test_eval_ave_makes_one_classifier_call():
    rng = np.random.default_rng(9)
    p = make_params(rng, 4, 3)
    S = rng.normal(size=(1, 3, 3))
    with nx.Tape() as tape:
        probs = agg.score_bag_eval(S, None, p, "ave")
    assert tape.ops().count("matmul") == 1
    np.testing.assert_allclose(probs.sum(), 1.0)


def test_unknown_mode():
    p = make_params(np.random.default_rng(10), 2, 2)
    with pytest.raises(ValueError):
        agg.aggregate(np.ones((1, 1, 2)), None, [0], p, "max")
    with pytest.raises(ValueError):
        agg.score_bag_eval(np.ones((1, 1, 2)), None, p, "max")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10 ** 6))
def test_bag_vector_permutation_invariant_and_in_hull(N, seed):
    rng = np.random.default_rng(seed)
    p = make_params(rng, 3, 4)
    S = rng.normal(size=(1, N, 4))
    perm = rng.permutation(N)
    z, beta = agg.selective_attention(S, None, [1], p)
    zp, _ = agg.selective_attention(S[:, perm], None, [1], p)
    np.testing.assert_allclose(zp.data, z.data, atol=1e-9)
    np.testing.assert_allclose(beta.data.sum(), 1.0, atol=1e-12)
    np.testing.assert_allclose(agg.aggregate_ave(S[:, perm]).data, agg.aggregate_ave(S).data,
                               atol=1e-9)
    one = agg.aggregate(S, None, [2], p, "one")[0].data
    one_p = agg.aggregate(S[:, perm], None, [2], p, "one")[0].data
    np.testing.assert_array_equal(one, one_p)


def test_aggregation_gradients():
    rng = np.random.default_rng(11)
    p = make_params(rng, 4, 3)
    S = Param(rng.normal(size=(2, 3, 3)), name="S")
    mask = np.array([[True, True, False], [True, True, True]])
    y = np.array([1, 3])

    def loss():
        z, _ = agg.selective_attention(S, mask, y, p)
        return nx.mul(nx.mean(nx.pick(nx.log_softmax(agg.classify(z, p)), y)), -1.0)

    report = nx.finite_difference_check([S, *p.values()], loss, step=1e-4, tol=1e-3)
    assert report.passed, report.max_rel_error
