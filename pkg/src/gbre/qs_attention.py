"""Bidirectional query-sentence attention.

Sentence words and query words are scored pairwise with a trainable
trilinear function, attended in both directions, and fused into a
query-aware sentence of width ``3 * d_w``.

All functions take a leading batch axis: sentences ``S`` are (B, L, d_w),
queries ``Q`` are (B, T, d_w).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor


@dataclass
class QueryAwareSentence:
    values: Tensor  # (B, L, 3*d_w)
    mask: np.ndarray  # (B, L) bool
    s2q: Tensor | None = None  # (B, L, T)
    q2s: Tensor | None = None  # (B, L)


def similarity_matrix(S, Q, w_h, sent_mask=None, query_mask=None) -> Tensor:
    """H[b, l, t] = w_h . [w_l ; q_t ; w_l * q_t], masked entries set to NEG_INF."""
    S, Q, w_h = nx.as_tensor(S), nx.as_tensor(Q), nx.as_tensor(w_h)
    d = S.shape[-1]
    if Q.shape[-1] != d:
        raise nx.ShapeError("similarity_matrix", S.shape, Q.shape)
    if w_h.shape != (3 * d,):
        raise nx.ShapeError("similarity_matrix", w_h.shape, (3 * d,))
    w_sent = nx.reshape(nx.narrow(w_h, 0, d), (d, 1))
    w_query = nx.reshape(nx.narrow(w_h, d, 2 * d), (d, 1))
    w_prod = nx.narrow(w_h, 2 * d, 3 * d)
    H = nx.matmul(nx.mul(S, w_prod), nx.swapaxes(Q, -1, -2))
    H = nx.add(H, nx.matmul(S, w_sent))
    H = nx.add(H, nx.swapaxes(nx.matmul(Q, w_query), -1, -2))
    if sent_mask is None and query_mask is None:
        return H
    B, L, T = H.shape
    sm = np.ones((B, L), bool) if sent_mask is None else np.asarray(sent_mask, bool)
    qm = np.ones((B, T), bool) if query_mask is None else np.asarray(query_mask, bool)
    return nx.masked_fill(H, sm[:, :, None] & qm[:, None, :])


def s2q_attention(H, Q, query_mask=None):
    """Each sentence word attends over the query: returns (Q_hat (B,L,d), alpha (B,L,T))."""
    if query_mask is not None and not np.asarray(query_mask).any(axis=-1).all():
        raise ValueError("s2q_attention: a query has no valid positions")
    alpha = nx.softmax(H, axis=-1)
    return nx.matmul(alpha, Q), alpha


def q2s_attention(H, S):
    """Softmax over sentence positions of each row's max score.

    Returns (w_hat (B, 1, d), alpha (B, L)).  ``w_hat`` broadcasts over L,
    which is how it is tiled.
    """
    if H.shape[1] == 0:
        raise ValueError("q2s_attention: empty sentence")
    alpha = nx.softmax(nx.max(H, axis=-1), axis=-1)
    B, L = alpha.shape
    w_hat = nx.matmul(nx.reshape(alpha, (B, 1, L)), S)
    return w_hat, alpha


def fuse(S, Q_hat, w_hat, sent_mask=None) -> Tensor:
    """x_l = [w_l ; w_l * q_hat_l ; w_l * w_hat] with PAD rows zeroed."""
    S = nx.as_tensor(S)
    out = nx.concat([S, nx.mul(S, Q_hat), nx.mul(S, w_hat)], axis=-1)
    if sent_mask is not None:
        out = nx.mul(out, np.asarray(sent_mask, float)[..., None])
    return out


def query_sentence_attention(S, Q, w_h, sent_mask, query_mask) -> QueryAwareSentence:
    with nx.scope("qs_attention"):
        H = similarity_matrix(S, Q, w_h, sent_mask, query_mask)
        Q_hat, a_sq = s2q_attention(H, Q, query_mask)
        w_hat, a_qs = q2s_attention(H, S)
        X = fuse(S, Q_hat, w_hat, sent_mask)
    return QueryAwareSentence(X, np.asarray(sent_mask, bool), a_sq, a_qs)
