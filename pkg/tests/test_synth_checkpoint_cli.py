import json

import numpy as np
import pytest

from conftest import toy_config, toy_corpus
from gbre import checkpoint, cli, corpus, synth
from gbre.config import PRESETS, TrainConfig, load_config_file, preset
from gbre.model import init_params

SMALL = dict(train_bags=60, valid_bags=20, test_bags=20)


def valid_flags(insts):
    return [i.meta["valid"] for i in insts]


def test_noise_free_corpus_is_all_valid():
    c = synth.generate(synth.SynthSpec(noise_rate=0.0, **SMALL))
    assert all(valid_flags(c.train + c.valid + c.test))


def test_full_noise_contradicts_every_bag():
    c = synth.generate(synth.SynthSpec(noise_rate=1.0, min_bag=2, **SMALL))
    assert not any(valid_flags(c.train))
    for b in corpus.build_bags(c.train, c.schema):
        assert len(b) >= 2 and not any(i.meta["valid"] for i in b.instances)


def test_valid_sentences_carry_their_triggers():
    c = synth.generate(synth.SynthSpec(typed_entities=False, **SMALL))
    for i in c.train:
        r = c.schema[i.relation]
        trig = {t for t in i.tokens if t.startswith("trg")}
        if i.meta["valid"] and r != c.schema.na_id:
            assert trig and trig <= set(c.triggers[r])
        elif not i.meta["valid"] and r != c.schema.na_id:
            assert trig and not trig & set(c.triggers[r])


def test_default_spec_reproducible_digest(tmp_path):
    spec = synth.SynthSpec()
    assert (spec.n_relations, spec.vocab_size, spec.train_bags, spec.noise_rate) == (8, 200, 2000, 0.4)
    a = synth.write_corpus(synth.generate(spec), tmp_path / "a")
    b = synth.write_corpus(synth.generate(synth.SynthSpec()), tmp_path / "b")
    assert a == b
    assert a != synth.write_corpus(synth.generate(synth.SynthSpec(seed=7)), tmp_path / "c")


def test_written_corpus_loads(tmp_path):
    synth.write_corpus(synth.generate(synth.SynthSpec(**SMALL)), tmp_path)
    schema = corpus.RelationSchema.load(tmp_path / "relations.tsv")
    insts = corpus.load_instances(tmp_path / "train.jsonl", schema)
    emb = corpus.load_embeddings(tmp_path / "embeddings.txt")
    assert len(schema) == 8 and emb.dim == 24 and len(emb.vocab) == 202
    assert all(corpus.UNK_ID not in emb.vocab.encode(i.tokens) for i in insts)


def test_spec_validation():
    with pytest.raises(ValueError):
        synth.SynthSpec(noise_rate=1.5)
    with pytest.raises(ValueError):
        synth.SynthSpec(min_bag=3, max_bag=2)
    with pytest.raises(ValueError):
        synth.SynthSpec(vocab_size=30)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    emb, schema, bags = toy_corpus(seed=1)
    cfg = toy_config(freeze_embeddings=True)
    p = init_params(cfg, emb, len(schema))
    checkpoint.save(tmp_path / "c.json", p, cfg, emb.vocab, schema, {"note": 1})
    q, cfg2, vocab, schema2, extra = checkpoint.load(tmp_path / "c.json")
    assert cfg2 == cfg and schema2.names() == schema.names() and extra == {"note": 1}
    assert vocab.id2word == emb.vocab.id2word
    for name in p.names():
        assert p[name].data.tobytes() == q[name].data.tobytes()
    assert not q["word_emb"].trainable


def test_checkpoint_rejects_foreign_and_tampered(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(tmp_path / "x.json")
    emb, schema, _ = toy_corpus()
    cfg = toy_config()
    checkpoint.save(tmp_path / "c.json", init_params(cfg, emb, 5), cfg, emb.vocab, schema)
    data = json.loads((tmp_path / "c.json").read_text())
    data["vocab_hash"] = "0" * 64
    (tmp_path / "c.json").write_text(json.dumps(data))
    with pytest.raises(checkpoint.CheckpointError, match="hash"):
        checkpoint.load(tmp_path / "c.json")


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(aggregation="max")
    with pytest.raises(ValueError):
        preset("wiki")
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_config_file_must_be_flat(tmp_path):
    (tmp_path / "c.json").write_text('{"a": {"b": 1}}')
    with pytest.raises(ValueError):
        load_config_file(tmp_path / "c.json")


def test_nyt_preset_listed():
    assert set(PRESETS) == {"biorel", "tbga", "nyt", "synthetic"}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert cli.main(["synth", "--out-dir", str(d), "--train-bags", "40", "--valid-bags", "15",
                     "--test-bags", "15"]) == 0
    return d


def test_cli_train_eval_predict(synth_dir, tmp_path):
    run = tmp_path / "run"
    assert cli.main(["train", "--data-dir", str(synth_dir), "--epochs", "2",
                     "--out-dir", str(run)]) == 0
    assert {"checkpoint.json", "history.jsonl", "config.json"} <= {p.name for p in run.iterdir()}
    hist = [json.loads(l) for l in (run / "history.jsonl").read_text().splitlines()]
    assert [h["epoch"] for h in hist] == [1, 2] and all("valid_auc" in h for h in hist)
    resolved = json.loads((run / "config.json").read_text())
    assert resolved["config"]["epochs"] == 2 and resolved["run"]["preset"] == "synthetic"

    ev1, ev2 = tmp_path / "e1", tmp_path / "e2"
    for out in (ev1, ev2):
        assert cli.main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--data-dir",
                         str(synth_dir), "--out-dir", str(out), "--dump-attention"]) == 0
    assert (ev1 / "metrics.json").read_bytes() == (ev2 / "metrics.json").read_bytes()
    header = (ev1 / "pr_curve.csv").read_text().splitlines()[0]
    assert header == "rank,precision,recall,probability"
    for line in (ev1 / "attention.jsonl").read_text().splitlines():
        rec = json.loads(line)
        n = len(rec["valid"])
        assert len(rec["alpha"]) == n
        assert all(abs(sum(row) - 1) < 1e-9 for row in rec["alpha"].values())
        assert all(len(b) == n for b in rec["beta"].values())

    pred = tmp_path / "pred"
    assert cli.main(["predict", "--checkpoint", str(run / "checkpoint.json"), "--input",
                     str(synth_dir / "test.jsonl"), "--out-dir", str(pred)]) == 0
    rows = [json.loads(l) for l in (pred / "predictions.jsonl").read_text().splitlines()]
    assert rows and all(r["relation"] != "NA" for r in rows)
    # relation-conditioned scores: each in [0, 1], not a single distribution
    for r in rows:
        assert all(0 <= v <= 1 for v in r["probs"].values())
        non_na = {k: v for k, v in r["probs"].items() if k != "NA"}
        assert r["probability"] == max(non_na.values()) == non_na[r["relation"]]


def test_cli_ablation_flags(synth_dir, tmp_path):
    assert cli.main(["train", "--data-dir", str(synth_dir), "--epochs", "1", "--no-bag-att",
                     "--out-dir", str(tmp_path)]) == 0
    resolved = json.loads((tmp_path / "config.json").read_text())
    assert resolved["variant"] == "PACNN+QS_ATT"


def test_cli_exit_codes(synth_dir, tmp_path, capsys):
    assert cli.main(["train", "--out-dir", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["fly"]) == cli.EXIT_USAGE
    assert cli.main(["train", "--data-dir", str(synth_dir), "--learning-rate", "-1",
                     "--out-dir", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["train", "--data-dir", str(tmp_path / "none"),
                     "--out-dir", str(tmp_path)]) == cli.EXIT_DATA
    bad = tmp_path / "bad"
    bad.mkdir()
    for name in ("relations.tsv", "embeddings.txt"):
        (bad / name).write_bytes((synth_dir / name).read_bytes())
    (bad / "train.jsonl").write_text('{"tokens": ["a"]}\n')
    assert cli.main(["train", "--data-dir", str(bad), "--out-dir", str(tmp_path)]) == cli.EXIT_DATA
    assert "train.jsonl:1" in capsys.readouterr().err


def test_cli_numeric_failure(synth_dir, tmp_path):
    assert cli.main(["train", "--data-dir", str(synth_dir), "--learning-rate", "1e300",
                     "--epochs", "3", "--out-dir", str(tmp_path)]) == cli.EXIT_NUMERIC


def test_cli_config_file_then_flags(synth_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "synthetic", "epochs": 1, "seed": 3, "batch_size": 8}))
    assert cli.main(["train", "--config", str(cfg), "--seed", "4", "--data-dir", str(synth_dir),
                     "--out-dir", str(tmp_path / "o")]) == 0
    resolved = json.loads((tmp_path / "o" / "config.json").read_text())["config"]
    assert (resolved["seed"], resolved["batch_size"], resolved["epochs"]) == (4, 8, 1)
