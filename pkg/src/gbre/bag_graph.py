"""One round of cosine-scored message passing over a fully connected sentence bag."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor


@dataclass
class BagGraphOutput:
    updated: Tensor  # (B, N, D)
    alpha: Tensor  # (B, N, N), row-stochastic over valid columns


def bag_self_attention(bags, bag_mask=None, dropout_rate: float = 0.0,
                       rng: np.random.Generator | None = None) -> BagGraphOutput:
    """s'_i = sum_j softmax_j(cos(s_i, s_j)) s_j for each bag in the batch.

    ``bags`` is (B, N, D) with padded rows flagged False in ``bag_mask``.
    Padded columns receive no attention and padded output rows are zero.
    Dropout acts on the updated rows and is skipped when ``rng`` is None.
    """
    bags = nx.as_tensor(bags)
    if bags.ndim != 3 or bags.shape[1] < 1:
        raise nx.ShapeError("bag_self_attention", bags.shape)
    if not np.all(np.isfinite(bags.data)):
        raise nx.NonFiniteError("bag_self_attention: non-finite sentence vectors")
    with nx.scope("bag_graph"):
        scores = nx.cosine_matrix(bags)
        if bag_mask is not None:
            mask = np.asarray(bag_mask, bool)
            scores = nx.masked_fill(scores, mask[:, None, :])
        alpha = nx.softmax(scores, axis=-1)
        updated = nx.matmul(alpha, bags)
        if bag_mask is not None:
            updated = nx.mul(updated, mask[:, :, None].astype(float))
        updated = nx.dropout(updated, dropout_rate, rng)
    return BagGraphOutput(updated, alpha)


def attention_record(alpha: np.ndarray, size: int) -> dict:
    """JSON-ready view of one bag's alpha keyed by instance index."""
    a = np.asarray(alpha)[:size, :size]
    return {str(i): [float(x) for x in a[i]] for i in range(size)}


def dump_attention(alpha: np.ndarray, size: int) -> str:
    return json.dumps(attention_record(alpha, size), sort_keys=True)
