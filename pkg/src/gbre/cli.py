"""Command-line entry points: ``train``, ``eval``, ``predict`` and ``synth``.

Configuration is resolved as preset, then ``--config`` file, then explicit
flags.  Data files default to the standard names inside ``--data-dir``
(``train.jsonl``, ``valid.jsonl``, ``test.jsonl``, ``relations.tsv``,
``embeddings.txt``), which is also what ``synth`` writes.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint, corpus, evaluation, synth
from .bag_graph import attention_record
from .config import AGGREGATIONS, PRESETS, TrainConfig, load_config_file, preset
from .model import init_params, score_bags
from .trainer import NumericFailure, evaluate_bags, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DATA_FILES = ("train", "valid", "test", "relations", "embeddings")
DEFAULT_NAMES = {"train": "train.jsonl", "valid": "valid.jsonl", "test": "test.jsonl",
                 "relations": "relations.tsv", "embeddings": "embeddings.txt"}

log = logging.getLogger("gbre")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# config resolution


def resolve_config(args) -> tuple:
    """Return (TrainConfig, run dict) from preset, config file and flags."""
    try:
        file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read config file: {e}") from e
    name = args.preset or file_cfg.pop("preset", None) or "synthetic"
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg_keys = {f.name for f in fields(TrainConfig)}
    run = {k: file_cfg.pop(k) for k in list(file_cfg) if k in DATA_FILES or k == "data_dir"}
    unknown = set(file_cfg) - cfg_keys
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    overrides = dict(file_cfg)
    for key in ("seed", "epochs", "learning_rate", "batch_size", "patience", "max_len"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_qs_att", False):
        overrides["qs_att"] = False
    if getattr(args, "no_bag_att", False):
        overrides["bag_att"] = False
    if getattr(args, "freeze_embeddings", False):
        overrides["freeze_embeddings"] = True
    if getattr(args, "agg", None):
        overrides["aggregation"] = args.agg
    try:
        cfg = preset(name, **overrides)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}") from e
    if getattr(args, "data_dir", None):
        run["data_dir"] = args.data_dir
    for key in DATA_FILES:
        if getattr(args, key, None):
            run[key] = getattr(args, key)
    run["preset"] = name
    return cfg, run


def data_path(run: dict, key: str) -> Path:
    if run.get(key):
        return Path(run[key])
    if run.get("data_dir"):
        return Path(run["data_dir"]) / DEFAULT_NAMES[key]
    raise UsageError(f"no {key} file given; pass --{key} or --data-dir")


def _existing(path: Path) -> Path:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    return path


def _load_bags(path: Path, schema, vocab, mode: str, config: TrainConfig) -> list:
    insts = corpus.load_instances(_existing(path), schema)
    bags = corpus.build_bags(insts, schema, mode, config.max_bag_size)
    return corpus.encode_bags(bags, vocab, config.max_len)


def _key_json(key) -> list:
    return [str(k) for k in key]


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg, run = resolve_config(args)
    out = Path(args.out_dir)
    schema = corpus.RelationSchema.load(_existing(data_path(run, "relations")))
    emb = corpus.load_embeddings(_existing(data_path(run, "embeddings")), seed=cfg.seed)
    if emb.dim != cfg.word_dim:
        log.info("word_dim %d overridden by embedding file width %d", cfg.word_dim, emb.dim)
        cfg = cfg.replace(word_dim=emb.dim)
    train_bags = _load_bags(data_path(run, "train"), schema, emb.vocab, "train", cfg)
    valid_path = data_path(run, "valid") if (run.get("valid") or run.get("data_dir")) else None
    valid_bags = []
    if valid_path is not None and valid_path.is_file():
        valid_bags = _load_bags(valid_path, schema, emb.vocab, "eval", cfg)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {"config": cfg.to_dict(), "run": {k: str(v) for k, v in sorted(run.items())},
                "variant": cfg.variant}
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    params = init_params(cfg, emb, len(schema))
    with open(out / "history.jsonl", "w", encoding="utf-8") as hist:
        def record(rec):
            hist.write(json.dumps(rec, sort_keys=True) + "\n")
            hist.flush()
        result = train(cfg, train_bags, valid_bags, params, schema.na_id, callback=record)
    checkpoint.save(out / "checkpoint.json", params, cfg, emb.vocab, schema,
                    {"best_epoch": result.best_epoch,
                     "best_valid_auc": None if not valid_bags else result.best_auc})
    print(f"trained {cfg.variant}: best epoch {result.best_epoch}, "
          f"valid AUC {result.best_auc:.4f}, outputs in {out}")
    return EXIT_OK


def _load_checkpoint(args):
    try:
        params, cfg, vocab, schema, extra = checkpoint.load(_existing(Path(args.checkpoint)))
    except checkpoint.CheckpointError as e:
        raise DataError(str(e)) from e
    if args.agg:
        cfg = cfg.replace(aggregation=args.agg)
    return params, cfg, vocab, schema


def cmd_eval(args) -> int:
    params, cfg, vocab, schema = _load_checkpoint(args)
    run = {"data_dir": args.data_dir, "test": args.test}
    bags = _load_bags(data_path(run, "test"), schema, vocab, "eval", cfg)
    if not bags:
        raise DataError("no evaluation bags")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        metrics, ranked, points = evaluate_bags(params, bags, cfg, schema.na_id)
    except ValueError as e:
        raise DataError(str(e)) from e
    evaluation.write_metrics(out / "metrics.json", metrics,
                             {"variant": cfg.variant, "aggregation": cfg.aggregation,
                              "n_bags": len(bags)})
    evaluation.write_pr_csv(out / "pr_curve.csv", ranked, points)
    if args.dump_attention:
        scores = score_bags(params, bags, cfg, keep_attention=True)
        names = schema.names()
        with open(out / "attention.jsonl", "w", encoding="utf-8") as f:
            for b, alpha, w in zip(bags, scores.alpha, scores.weights):
                rec = {"bag": _key_json(b.key), "label": names[b.label],
                       "valid": [m.get("valid") for m in b.meta],
                       "alpha": None if alpha is None else attention_record(alpha, b.size),
                       "beta": None if w is None else {names[r]: [float(x) for x in w[r]]
                                                       for r in range(len(names))}}
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"AUC {metrics.auc:.4f}  F1 {metrics.f1:.4f}  " +
          "  ".join(f"P@{n} {v:.3f}" for n, v in metrics.p_at.items()))
    return EXIT_OK


def cmd_predict(args) -> int:
    params, cfg, vocab, schema = _load_checkpoint(args)
    insts = corpus.load_instances(_existing(Path(args.input)), default_relation=schema.na_name)
    # any given labels are ignored; bags group by entity pair only
    insts = [corpus.Instance(i.tokens, i.head, i.tail, i.head_span, i.tail_span,
                             schema.na_name, i.meta) for i in insts]
    bags = corpus.encode_bags(corpus.build_bags(insts, schema, "eval", cfg.max_bag_size),
                              vocab, cfg.max_len)
    scores = score_bags(params, bags, cfg)
    names = schema.names()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as f:
        for b, p in zip(bags, scores.probs):
            masked = p.copy()
            masked[schema.na_id] = -1.0
            top = int(np.argmax(masked))
            f.write(json.dumps({"head": b.key[0], "tail": b.key[1], "relation": names[top],
                                "probability": float(p[top]),
                                "probs": {n: float(p[r]) for r, n in enumerate(names)}},
                               sort_keys=True) + "\n")
    print(f"wrote {len(bags)} predictions to {out / 'predictions.jsonl'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    kwargs = {"seed": args.seed if args.seed is not None else 42}
    for f in fields(synth.SynthSpec):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "seed":
            kwargs[f.name] = v
    if args.no_correlated_noise:
        kwargs["correlated_noise"] = False
    if args.untyped_entities:
        kwargs["typed_entities"] = False
    try:
        spec = synth.SynthSpec(**kwargs)
    except ValueError as e:
        raise UsageError(str(e)) from e
    digests = synth.write_corpus(synth.generate(spec), args.out_dir)
    for name, digest in digests.items():
        print(f"{digest}  {name}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="flat JSON file of configuration keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--no-qs-att", action="store_true")
    p.add_argument("--no-bag-att", action="store_true")
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--agg", choices=AGGREGATIONS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbre", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint and history")
    _add_config_flags(p)
    p.add_argument("--data-dir")
    for key in ("train", "valid", "relations", "embeddings"):
        p.add_argument(f"--{key}")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--test")
    p.add_argument("--agg", choices=AGGREGATIONS)
    p.add_argument("--dump-attention", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="relation predictions for unlabeled instances")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--agg", choices=AGGREGATIONS)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    for name in ("n_relations", "vocab_size", "train_bags", "valid_bags", "test_bags",
                 "min_bag", "max_bag", "dim"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    p.add_argument("--noise-rate", dest="noise_rate", type=float)
    p.add_argument("--na-fraction", dest="na_fraction", type=float)
    p.add_argument("--no-correlated-noise", action="store_true")
    p.add_argument("--untyped-entities", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"gbre: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except corpus.CorpusError as e:
        print("gbre: data error:\n  " + "\n  ".join(e.diagnostics), file=sys.stderr)
        return EXIT_DATA
    except (DataError, OSError, json.JSONDecodeError) as e:
        print(f"gbre: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as e:
        print(f"gbre: numeric failure: {e}; bags {e.bag_keys}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
