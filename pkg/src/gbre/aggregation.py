"""Bag-level aggregation (selective attention, ONE, AVE) and the softmax classifier.

Sentence matrices are batched as (B, N, D) with a boolean ``bag_mask``
(B, N) marking real sentences.  ``params`` is any mapping holding
``att_diag`` (D,), ``rel_emb`` (R, D), ``cls_weight`` (R, D) and
``cls_bias`` (R,).
"""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import Tensor

MODES = ("att", "one", "ave")


def _mask(bags: Tensor, bag_mask):
    if bag_mask is None:
        return np.ones(bags.shape[:2], bool)
    return np.asarray(bag_mask, bool)


def selective_attention(bags, bag_mask, relation_ids, params):
    """Relation-conditioned attention: returns (z (B, D), beta (B, N))."""
    bags = nx.as_tensor(bags)
    mask = _mask(bags, bag_mask)
    relation_ids = np.asarray(relation_ids, dtype=np.int64)
    R = params["rel_emb"].shape[0]
    if relation_ids.size and (relation_ids.min() < 0 or relation_ids.max() >= R):
        raise IndexError(f"relation id outside [0, {R})")
    B, N, D = bags.shape
    query = nx.mul(nx.take(params["rel_emb"], relation_ids), params["att_diag"])  # (B, D)
    scores = nx.reshape(nx.matmul(bags, nx.reshape(query, (B, D, 1))), (B, N))
    beta = nx.softmax(nx.masked_fill(scores, mask), axis=-1)
    z = nx.reshape(nx.matmul(nx.reshape(beta, (B, 1, N)), bags), (B, D))
    return z, beta


def relation_scores(bags, params) -> Tensor:
    """Classifier logits of every sentence: (B, N, R)."""
    return nx.add(nx.matmul(bags, nx.swapaxes(params["cls_weight"], 0, 1)), params["cls_bias"])


def choose_one(scores: np.ndarray, bag_mask) -> np.ndarray:
    """Index of the max-scoring valid sentence per bag; ties go to the lowest index.

    ``scores`` is (B, N) or (B, N, R); the result drops the N axis.
    """
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(bag_mask, bool)
    if scores.ndim == 3:
        mask = mask[:, :, None]
    return np.argmax(np.where(mask, scores, -np.inf), axis=1)


def _gather_rows(bags: Tensor, idx: np.ndarray) -> Tensor:
    """bags[b, idx[b, ...]] -> (B, ..., D)."""
    B, N, D = bags.shape
    flat = nx.reshape(bags, (B * N, D))
    offsets = (np.arange(B) * N).reshape((B,) + (1,) * (idx.ndim - 1))
    return nx.take(flat, idx + offsets)


def aggregate_one(bags, bag_mask, target_scores) -> Tensor:
    """Pick the sentence whose score for the target relation is largest.

    ``target_scores`` is (B, N); the selection itself carries no gradient.
    """
    bags = nx.as_tensor(bags)
    idx = choose_one(target_scores, _mask(bags, bag_mask))
    return _gather_rows(bags, idx)


def aggregate_ave(bags, bag_mask=None) -> Tensor:
    bags = nx.as_tensor(bags)
    mask = _mask(bags, bag_mask).astype(float)
    total = nx.sum(nx.mul(bags, mask[:, :, None]), axis=1)
    return nx.mul(total, 1.0 / mask.sum(axis=1, keepdims=True))


def classify(z, params) -> Tensor:
    """Logits W z + b over all relations (the softmax is applied by callers)."""
    return nx.add(nx.matmul(z, nx.swapaxes(params["cls_weight"], 0, 1)), params["cls_bias"])


def probabilities(logits) -> np.ndarray:
    return nx.softmax(logits, axis=-1).data


def aggregate(bags, bag_mask, relation_ids, params, mode: str = "att"):
    """Training-time bag vector for the gold relations; returns (z, weights or None)."""
    if mode == "att":
        return selective_attention(bags, bag_mask, relation_ids, params)
    if mode == "ave":
        return aggregate_ave(bags, bag_mask), None
    if mode == "one":
        bags = nx.as_tensor(bags)
        scores = relation_scores(bags, params).data
        target = np.take_along_axis(scores, np.asarray(relation_ids)[:, None, None], axis=2)[..., 0]
        return aggregate_one(bags, bag_mask, target), None
    raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {MODES}")


def score_bag_eval(bags, bag_mask, params, mode: str = "att", return_weights: bool = False):
    """Relation-conditioned probabilities for held-out ranking: (B, R).

    For ATT, entry r is P(r | z_r) where z_r is the bag vector attended with
    relation r's own embedding.  ONE picks, per relation, the sentence scoring
    highest for it.  AVE uses a single bag vector.
    """
    bags = nx.as_tensor(bags)
    mask = _mask(bags, bag_mask)
    B, N, D = bags.shape
    R = params["rel_emb"].shape[0]
    weights = None
    if mode == "ave":
        probs = probabilities(classify(aggregate_ave(bags, mask), params))
    elif mode == "att":
        query = nx.mul(params["rel_emb"], params["att_diag"])  # (R, D)
        scores = nx.matmul(bags, nx.swapaxes(query, 0, 1))  # (B, N, R)
        beta = nx.softmax(nx.masked_fill(scores, mask[:, :, None]), axis=1)
        Z = nx.matmul(nx.swapaxes(beta, 1, 2), bags)  # (B, R, D)
        P = probabilities(classify(Z, params))  # (B, R, R)
        probs = np.diagonal(P, axis1=1, axis2=2).copy()
        weights = np.swapaxes(beta.data, 1, 2)  # (B, R, N)
    elif mode == "one":
        idx = choose_one(relation_scores(bags, params).data, mask)  # (B, R)
        Z = _gather_rows(bags, idx)  # (B, R, D)
        P = probabilities(classify(Z, params))
        probs = np.diagonal(P, axis1=1, axis2=2).copy()
        weights = np.zeros((B, R, N))
        np.put_along_axis(weights, idx[:, :, None], 1.0, axis=2)
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {MODES}")
    return (probs, weights) if return_weights else probs
