"""Mini-batch SGD training with validation-AUC early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import evaluation, numerics as nx
from .config import TrainConfig
from .corpus import collate
from .model import ModelParams, forward, init_params, score_bags

__all__ = ["train", "init_params", "evaluate_bags", "TrainResult", "NumericFailure"]

log = logging.getLogger(__name__)


class NumericFailure(FloatingPointError):
    def __init__(self, message: str, bag_keys=()):
        self.bag_keys = list(bag_keys)
        super().__init__(message)


@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_auc: float = float("-inf")


def evaluate_bags(params: ModelParams, bags, config: TrainConfig, na_id: int = 0):
    """Score, rank and measure a list of encoded evaluation bags.

    Returns (metrics, ranked predictions, PR points).
    """
    scores = score_bags(params, bags, config)
    ranked = evaluation.rank_predictions([b.key for b in bags], scores.probs, na_id)
    gold = evaluation.gold_facts(bags, na_id)
    points = evaluation.pr_curve(ranked, gold)
    return evaluation.evaluate(ranked, gold, config.p_at_n), ranked, points


def train_step(params: ModelParams, batch_bags, config: TrainConfig, rng) -> float:
    batch = collate(batch_bags)
    try:
        with nx.Tape() as tape, np.errstate(over="ignore", invalid="ignore"):
            loss = forward(params, batch, config, rng).loss
    except nx.NonFiniteError as e:
        raise NumericFailure(str(e), batch.keys) from e
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericFailure(f"non-finite loss {value}", batch.keys)
    nx.backward(loss, tape)
    nx.sgd_step(params, config.learning_rate)
    return value


def train(config: TrainConfig, train_bags, valid_bags, params: ModelParams,
          na_id: int = 0, callback=None) -> TrainResult:
    """Train in place and restore the best-validation-AUC parameters at the end.

    Without validation bags every epoch runs and the final parameters are kept.
    ``callback(record)`` is invoked after each epoch with the history record.
    """
    if not train_bags:
        raise ValueError("no training bags")
    rng = np.random.default_rng(config.seed)
    result = TrainResult(params)
    best_state, stale = None, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_bags))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [train_bags[i] for i in order[start:start + config.batch_size]]
            losses.append(train_step(params, chunk, config, rng))
        record = {"epoch": epoch, "loss": float(np.mean(losses))}
        if valid_bags:
            metrics, _, _ = evaluate_bags(params, valid_bags, config, na_id)
            record["valid_auc"] = metrics.auc
            if metrics.auc > result.best_auc:
                result.best_auc, result.best_epoch = metrics.auc, epoch
                best_state, stale = params.state(), 0
            else:
                stale += 1
        result.history.append(record)
        log.info("epoch %d loss %.4f valid_auc %s", epoch, record["loss"], record.get("valid_auc"))
        if callback is not None:
            callback(record)
        if valid_bags and stale >= config.patience:
            break
    if best_state is not None:
        params.load_state(best_state)
    else:
        result.best_epoch = len(result.history)
    return result
