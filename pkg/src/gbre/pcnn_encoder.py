"""Piecewise convolutional sentence encoder with position features."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import Tensor


def append_position_features(x_hat, pos1, pos2, pos_table1, pos_table2, sent_mask=None) -> Tensor:
    """Concatenate head/tail position embeddings onto each word vector.

    ``pos1``/``pos2`` are shifted offset indices of shape (B, L).  When a
    mask is given, whole PAD rows (position part included) are zeroed so
    padding never reaches the convolution.
    """
    pos1, pos2 = np.asarray(pos1), np.asarray(pos2)
    for p, table in ((pos1, pos_table1), (pos2, pos_table2)):
        if p.size and (p.min() < 0 or p.max() >= table.shape[0]):
            raise IndexError(f"position index outside table of {table.shape[0]} rows")
    out = nx.concat([x_hat, nx.take(pos_table1, pos1), nx.take(pos_table2, pos2)], axis=-1)
    if sent_mask is not None:
        out = nx.mul(out, np.asarray(sent_mask, float)[..., None])
    return out


def convolve(X, kernel, bias, window: int) -> Tensor:
    """Same-length convolution: (B, L, D) -> (B, L, c).

    ``kernel`` is (window * D, c) with rows ordered window-position-major;
    output position ``i`` sees rows ``i - window//2 .. i + window//2``.
    """
    X = nx.as_tensor(X)
    if kernel.shape[0] != window * X.shape[-1]:
        raise nx.ShapeError("convolve", X.shape, kernel.shape)
    return nx.add(nx.matmul(nx.window_stack(X, window), kernel), bias)


def segment_bounds(k1, k2, lengths):
    """Half-open bounds of the three pooling segments and their nonempty flags.

    With 1-based entity positions a <= b (sorted), the segments are
    [1, a], (a, b], (b, L].  Empty segments get a dummy one-element range
    and ``nonempty`` False.
    """
    k1, k2, lengths = (np.asarray(v, dtype=np.int64).reshape(-1) for v in (k1, k2, lengths))
    if np.any(lengths < 1):
        raise ValueError("piecewise pooling needs L >= 1")
    a, b = np.minimum(k1, k2), np.maximum(k1, k2)
    if np.any(a < 1) or np.any(b > lengths):
        raise ValueError("entity positions must satisfy 1 <= k1, k2 <= L")
    starts = np.stack([np.zeros_like(a), a, b], axis=1)
    stops = np.stack([a, b, lengths], axis=1)
    nonempty = stops > starts
    starts = np.where(nonempty, starts, np.minimum(starts, lengths[:, None] - 1))
    stops = np.where(nonempty, stops, starts + 1)
    return np.stack([starts, stops], axis=-1), nonempty


def piecewise_pool(M, k1, k2, lengths) -> Tensor:
    """Segment max pooling: (B, L, c) -> (B, c, 3); empty segments pool to 0."""
    M = nx.as_tensor(M)
    bounds, nonempty = segment_bounds(k1, k2, lengths)
    if bounds.shape[0] != M.shape[0]:
        raise nx.ShapeError("piecewise_pool", M.shape, bounds.shape)
    U = nx.segment_max(M, bounds)  # (B, 3, c)
    if not nonempty.all():
        U = nx.mul(U, nonempty[:, :, None].astype(float))
    return nx.swapaxes(U, 1, 2)


def encode_sentence(x_hat, pos1, pos2, k1, k2, lengths, params, window: int,
                    sent_mask=None) -> Tensor:
    """Query-aware (or plain) word vectors -> sentence vectors of width 3c."""
    with nx.scope("pcnn_encoder"):
        X = append_position_features(x_hat, pos1, pos2, params["pos1"], params["pos2"], sent_mask)
        M = convolve(X, params["conv_kernel"], params["conv_bias"], window)
        U = piecewise_pool(M, k1, k2, lengths)
        B, c, _ = U.shape
        return nx.relu(nx.reshape(U, (B, 3 * c)))
