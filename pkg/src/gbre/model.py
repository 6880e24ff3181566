"""Model parameters and the end-to-end forward pass over a batch of bags."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aggregation, numerics as nx
from .bag_graph import bag_self_attention
from .config import TrainConfig
from .corpus import PAD_ID, Batch, EmbeddingTable, collate
from .numerics import Param, Tensor
from .pcnn_encoder import encode_sentence
from .qs_attention import query_sentence_attention


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """Named, ordered collection of :class:`Param`."""

    def __init__(self, params: dict):
        self._params = dict(params)

    def __getitem__(self, name) -> Param:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def get(self, name, default=None):
        return self._params.get(name, default)

    def names(self) -> list:
        return list(self._params)

    def items(self):
        return self._params.items()

    def state(self) -> dict:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict):
        for k, v in state.items():
            if self._params[k].shape != v.shape:
                raise nx.ShapeError(f"load_state[{k}]", self._params[k].shape, v.shape)
            self._params[k].data[...] = v

    def zero_grad(self):
        for p in self:
            p.zero_grad()


def init_params(config: TrainConfig, embeddings: EmbeddingTable, n_relations: int,
                seed: int | None = None) -> ModelParams:
    """Xavier-uniform weights, zero biases, identity attention diagonal, copied embeddings."""
    if embeddings.dim != config.word_dim:
        raise ValueError(f"embedding width {embeddings.dim} != configured word_dim {config.word_dim}")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, c, dp = config.word_dim, config.hidden_size, config.pos_dim
    out_dim = 3 * c
    n_pos = 2 * config.max_len + 1
    fan_conv = config.window * config.encoder_input_size
    p = {
        "word_emb": Param(embeddings.vectors, "word_emb", trainable=not config.freeze_embeddings,
                          frozen_rows=[PAD_ID]),
    }
    if config.qs_att:
        p["w_h"] = Param(xavier_uniform(rng, (3 * d,), 3 * d, 1), "w_h")
    p["pos1"] = Param(xavier_uniform(rng, (n_pos, dp), n_pos, dp), "pos1")
    p["pos2"] = Param(xavier_uniform(rng, (n_pos, dp), n_pos, dp), "pos2")
    p["conv_kernel"] = Param(xavier_uniform(rng, (fan_conv, c), fan_conv, c), "conv_kernel")
    p["conv_bias"] = Param(np.zeros(c), "conv_bias")
    p["att_diag"] = Param(np.ones(out_dim), "att_diag")
    p["rel_emb"] = Param(xavier_uniform(rng, (n_relations, out_dim), out_dim, n_relations), "rel_emb")
    p["cls_weight"] = Param(xavier_uniform(rng, (n_relations, out_dim), out_dim, n_relations),
                            "cls_weight")
    p["cls_bias"] = Param(np.zeros(n_relations), "cls_bias")
    return ModelParams(p)


@dataclass
class BagEncoding:
    bags: Tensor  # (B, N, 3c)
    mask: np.ndarray  # (B, N)
    sentences: Tensor  # (S, 3c) before message passing
    alpha: Tensor | None = None  # bag-graph attention (B, N, N)


def encode_bags_batch(params: ModelParams, batch: Batch, config: TrainConfig,
                      rng: np.random.Generator | None = None) -> BagEncoding:
    """Embed, (optionally) query-attend, encode and (optionally) message-pass."""
    with nx.scope("embedding"):
        S = nx.take(params["word_emb"], batch.word_ids)
        Q = nx.take(params["word_emb"], batch.query_ids[batch.sent_bag]) if config.qs_att else None
    if config.qs_att:
        x_hat = query_sentence_attention(S, Q, params["w_h"], batch.sent_mask,
                                         batch.query_mask[batch.sent_bag]).values
    else:
        x_hat = S
    sent = encode_sentence(x_hat, batch.pos1, batch.pos2, batch.k1, batch.k2, batch.lengths,
                           params, config.window, batch.sent_mask)
    with nx.scope("layout"):
        padded = nx.concat([sent, np.zeros((1, sent.shape[1]))], axis=0)
        slots = np.where(batch.slots >= 0, batch.slots, sent.shape[0])
        bags = nx.take(padded, slots)
    alpha = None
    if config.bag_att:
        out = bag_self_attention(bags, batch.bag_mask, config.bag_dropout, rng)
        bags, alpha = out.updated, out.alpha
    return BagEncoding(bags, batch.bag_mask, sent, alpha)


@dataclass
class ForwardResult:
    loss: Tensor
    logits: Tensor
    encoding: BagEncoding
    beta: Tensor | None


def forward(params: ModelParams, batch: Batch, config: TrainConfig,
            rng: np.random.Generator | None = None) -> ForwardResult:
    """Training objective on a batch: mean cross-entropy of the gold relations.

    Passing ``rng`` enables dropout; ``rng=None`` is the deterministic mode.
    """
    enc = encode_bags_batch(params, batch, config, rng)
    with nx.scope("aggregation"):
        z, beta = aggregation.aggregate(enc.bags, enc.mask, batch.labels, params, config.aggregation)
        z = nx.dropout(z, config.dropout, rng)
        logits = aggregation.classify(z, params)
    with nx.scope("loss"):
        nll = nx.pick(nx.log_softmax(logits, axis=-1), batch.labels)
        loss = nx.mul(nx.mean(nll), -1.0)
    return ForwardResult(loss, logits, enc, beta)


def batch_loss(params: ModelParams, bags, config: TrainConfig, rng=None) -> Tensor:
    return forward(params, collate(bags), config, rng).loss


@dataclass
class BagScores:
    probs: np.ndarray  # (n_bags, R)
    alpha: list  # per bag (N, N) arrays or None
    weights: list  # per bag (R, N) aggregation weights or None


def score_bags(params: ModelParams, bags, config: TrainConfig, batch_size: int = 64,
               keep_attention: bool = False) -> BagScores:
    """Relation-conditioned probabilities for every bag (no dropout, no tape)."""
    probs, alphas, weights = [], [], []
    for start in range(0, len(bags), batch_size):
        chunk = bags[start:start + batch_size]
        batch = collate(chunk)
        enc = encode_bags_batch(params, batch, config, None)
        p, w = aggregation.score_bag_eval(enc.bags, enc.mask, params, config.aggregation,
                                          return_weights=True)
        probs.append(p)
        if keep_attention:
            for i, b in enumerate(chunk):
                n = b.size
                alphas.append(None if enc.alpha is None else enc.alpha.data[i, :n, :n].copy())
                weights.append(None if w is None else w[i, :, :n].copy())
    R = params["cls_bias"].shape[0]
    out = np.concatenate(probs) if probs else np.zeros((0, R))
    return BagScores(out, alphas, weights)


def gradient_check(params: ModelParams, bags, config: TrainConfig, step: float = 1e-4,
                   tol: float = 1e-3, names=None) -> nx.GradCheckReport:
    """Finite-difference check of the full objective, dropout disabled."""
    batch = collate(bags)
    chosen = [p for p in params if p.trainable and (names is None or p.name in names)]
    return nx.finite_difference_check(chosen, lambda: forward(params, batch, config, None).loss,
                                      step=step, tol=tol)
