"""Component ablations and instance-selection checks on a synthetic corpus."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import corpus, synth
from .config import TrainConfig, preset
from .model import init_params, score_bags
from .trainer import evaluate_bags, train

VARIANTS = {
    "PACNN": dict(qs_att=False, bag_att=False),
    "PACNN+QS_ATT": dict(qs_att=True, bag_att=False),
    "PACNN+BAG_ATT": dict(qs_att=False, bag_att=True),
    "GBRE": dict(qs_att=True, bag_att=True),
}


@dataclass
class PreparedCorpus:
    corpus: synth.SynthCorpus
    embeddings: corpus.EmbeddingTable
    train: list
    valid: list
    test: list


def prepare(spec: synth.SynthSpec | None = None, max_len: int = 40) -> PreparedCorpus:
    c = synth.generate(spec)
    emb = corpus.embeddings_from_arrays(c.words, c.vectors)

    def enc(insts, mode):
        return corpus.encode_bags(corpus.build_bags(insts, c.schema, mode), emb.vocab, max_len)

    return PreparedCorpus(c, emb, enc(c.train, "train"), enc(c.valid, "eval"), enc(c.test, "eval"))


@dataclass
class RunResult:
    variant: str
    seed: int
    test_auc: float
    best_epoch: int
    seconds: float
    params: object = field(repr=False, default=None)
    config: TrainConfig | None = field(repr=False, default=None)


def run_variant(data: PreparedCorpus, variant: str, seed: int, base: TrainConfig | None = None,
                keep_params: bool = False) -> RunResult:
    cfg = (base or preset("synthetic")).replace(seed=seed, **VARIANTS[variant])
    params = init_params(cfg, data.embeddings, len(data.corpus.schema))
    t0 = time.perf_counter()
    res = train(cfg, data.train, data.valid, params, data.corpus.schema.na_id)
    metrics, _, _ = evaluate_bags(params, data.test, cfg, data.corpus.schema.na_id)
    return RunResult(variant, seed, metrics.auc, res.best_epoch, time.perf_counter() - t0,
                     params if keep_params else None, cfg)


def ablation(data: PreparedCorpus, seeds=(0, 1, 2), base: TrainConfig | None = None,
             variants=tuple(VARIANTS), keep_params: bool = False, log=None) -> list:
    results = []
    for seed in seeds:
        for v in variants:
            r = run_variant(data, v, seed, base, keep_params)
            if log:
                log(f"{v:14s} seed={seed} auc={r.test_auc:.4f} epoch={r.best_epoch} {r.seconds:.1f}s")
            results.append(r)
    return results


def mean_auc(results, variant: str) -> float:
    return float(np.mean([r.test_auc for r in results if r.variant == variant]))


def selection_accuracy(params, config: TrainConfig, bags, valid_flags=None) -> tuple:
    """Share of bags with exactly one valid sentence whose top aggregation weight is on it.

    Weights are those computed for the bag's own (gold) relation.  Returns
    (hits, total).
    """
    scores = score_bags(params, bags, config, keep_attention=True)
    hits = total = 0
    for i, b in enumerate(bags):
        flags = [m.get("valid") for m in b.meta] if valid_flags is None else valid_flags[i]
        if sum(bool(f) for f in flags) != 1 or b.size < 2:
            continue
        w = scores.weights[i]
        if w is None:
            raise ValueError("aggregation mode exposes no per-sentence weights")
        total += 1
        hits += int(np.argmax(w[b.label]) == flags.index(True))
    return hits, total
