"""Seeded synthetic distant-supervision corpus with planted relation signal.

Each non-NA relation owns a few trigger tokens.  A *valid* sentence places
triggers of its bag's relation between the two entity mentions; a *noisy*
sentence carries triggers of a different relation instead (or, for NA
bags, of any relation).  With ``correlated_noise`` every bag also draws a
few background tokens and inserts them into all of its sentences, so the
sentences of a bag resemble each other whether or not they are mislabeled.

With ``typed_entities`` every entity token belongs to one of two types and
a trigger's meaning depends on the head entity's type: trigger group ``g``
expresses relation ``g`` after a type-0 head and relation ``g % (R-1) + 1``
after a type-1 head.  Triggers never touch an entity mention, so resolving
them needs entity context carried to the trigger position.

Word vectors are clustered per relation so triggers of one relation start
out close, as they would with pretrained embeddings.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Instance, RelationSchema, instance_to_record, save_embeddings


@dataclass
class SynthSpec:
    n_relations: int = 8  # including NA
    vocab_size: int = 200
    train_bags: int = 2000
    valid_bags: int = 500
    test_bags: int = 500
    min_bag: int = 2
    max_bag: int = 6
    noise_rate: float = 0.4
    correlated_noise: bool = True
    typed_entities: bool = True
    na_fraction: float = 0.3
    triggers_per_relation: int = 3
    context_per_bag: int = 3
    min_len: int = 10
    max_len: int = 24
    entity_tokens: int = 40
    dim: int = 24
    seed: int = 42

    def __post_init__(self):
        if self.n_relations < 3:
            raise ValueError("need NA plus at least two relations")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if not 1 <= self.min_bag <= self.max_bag:
            raise ValueError("bag sizes must satisfy 1 <= min_bag <= max_bag")
        reserved = self.entity_tokens + (self.n_relations - 1) * self.triggers_per_relation
        if reserved + 10 > self.vocab_size:
            raise ValueError(f"vocab_size {self.vocab_size} too small for {reserved} reserved tokens")


@dataclass
class SynthCorpus:
    spec: SynthSpec
    schema: RelationSchema
    train: list
    valid: list
    test: list
    words: list
    vectors: np.ndarray
    triggers: dict = field(default_factory=dict)


def _relation_names(n: int) -> list:
    return ["NA"] + [f"rel_{i}" for i in range(1, n)]


def _entity_names(spec: SynthSpec, rng, count: int) -> list:
    """Distinct ordered entity-name pairs; names are one or two entity tokens."""
    tokens = [f"ent{i:02d}" for i in range(spec.entity_tokens)]
    by_type = [tokens[0::2], tokens[1::2]]
    seen, pairs = set(), []
    while len(pairs) < count:
        names = []
        for _ in range(2):
            k = 1 if rng.random() < 0.6 else 2
            pool = by_type[int(rng.integers(0, 2))]
            names.append(" ".join(pool[j] for j in rng.choice(len(pool), k, replace=False)))
        if names[0] == names[1] or set(names[0].split()) & set(names[1].split()):
            continue
        key = tuple(names)
        if key not in seen:
            seen.add(key)
            pairs.append(key)
    return pairs


def generate(spec: SynthSpec | None = None) -> SynthCorpus:
    spec = spec or SynthSpec()
    rng = np.random.default_rng(spec.seed)
    R = spec.n_relations
    rel_names = _relation_names(R)
    schema = RelationSchema({n: i for i, n in enumerate(rel_names)})

    triggers = {r: [f"trg{r}_{j}" for j in range(spec.triggers_per_relation)] for r in range(1, R)}
    ents = [f"ent{i:02d}" for i in range(spec.entity_tokens)]
    n_reserved = len(ents) + sum(map(len, triggers.values()))
    background = [f"w{i:03d}" for i in range(spec.vocab_size - n_reserved)]
    words = ents + [t for r in triggers for t in triggers[r]] + background

    centers = rng.normal(0.0, 1.0, (R, spec.dim)) / np.sqrt(spec.dim)
    vecs = {w: rng.normal(0.0, 0.5, spec.dim) / np.sqrt(spec.dim) for w in words}
    for r in range(1, R):
        for t in triggers[r]:
            vecs[t] = centers[r] + rng.normal(0.0, 0.3, spec.dim) / np.sqrt(spec.dim)
    type_centers = rng.normal(0.0, 1.0, (2, spec.dim)) / np.sqrt(spec.dim)
    for i, e in enumerate(ents):
        vecs[e] = type_centers[i % 2] + rng.normal(0.0, 0.3, spec.dim) / np.sqrt(spec.dim)
    vectors = np.stack([vecs[w] for w in words])

    def trigger_group(rel: int, head: str) -> int:
        """Trigger group that expresses ``rel`` after this head entity."""
        if not spec.typed_entities or int(head.split()[0][3:]) % 2 == 0:
            return rel
        return (rel - 2) % (R - 1) + 1

    def sentence(head: str, tail: str, trig: list, ctx: list, valid: bool, rel: str) -> Instance:
        h, t = head.split(), tail.split()
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        filler = list(rng.choice(background, size=length))
        # head before tail most of the time; triggers sit between them
        gap = int(rng.integers(len(trig) + 2, len(trig) + 6))
        first_len = len(h) + gap + len(t)
        start = int(rng.integers(0, max(1, length - first_len)))
        middle = filler[:gap]
        slots = sorted(1 + rng.choice(gap - 2, size=len(trig), replace=False)) if trig else []
        for s, w in zip(slots, trig):
            middle[s] = w
        swap = rng.random() < 0.2
        a, b = (t, h) if swap else (h, t)
        outer = filler[gap:]
        for w in ctx:
            outer.insert(int(rng.integers(0, len(outer) + 1)), w)
        start = min(start, len(outer))
        toks = outer[:start] + a + middle + b + outer[start:]
        # locate spans after insertions
        def find(name_toks, avoid=None):
            n = len(name_toks)
            for i in range(len(toks) - n + 1):
                if toks[i:i + n] == name_toks and not (avoid and i < avoid[1] and i + n > avoid[0]):
                    return (i, i + n)
            raise AssertionError("entity lost")
        hs = find(h)
        ts = find(t, hs)
        return Instance(tuple(toks), head, tail, hs, ts, rel, {"valid": bool(valid)})

    def bag(head: str, tail: str) -> list:
        r = 0 if rng.random() < spec.na_fraction else int(rng.integers(1, R))
        n = int(rng.integers(spec.min_bag, spec.max_bag + 1))
        ctx = list(rng.choice(background, spec.context_per_bag, replace=False)) if spec.correlated_noise else []
        out = []
        for _ in range(n):
            noisy = rng.random() < spec.noise_rate
            k = int(rng.integers(1, 3))
            if noisy:
                other = int(rng.choice([x for x in range(1, R) if x != r]))
                trig = list(rng.choice(triggers[trigger_group(other, head)], size=k))
            elif r:
                trig = list(rng.choice(triggers[trigger_group(r, head)], size=k))
            else:
                trig = []
            out.append(sentence(head, tail, trig, ctx, not noisy, rel_names[r]))
        return out

    total = spec.train_bags + spec.valid_bags + spec.test_bags
    pairs = _entity_names(spec, rng, total)
    splits = []
    offset = 0
    for count in (spec.train_bags, spec.valid_bags, spec.test_bags):
        insts = []
        for head, tail in pairs[offset:offset + count]:
            insts.extend(bag(head, tail))
        splits.append(insts)
        offset += count
    return SynthCorpus(spec, schema, *splits, words, vectors, triggers)


def write_corpus(corpus: SynthCorpus, out_dir) -> dict:
    """Write train/valid/test JSONL, relations.tsv, embeddings.txt and spec.json.

    Returns a map of file name to SHA-256 digest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, insts in (("train", corpus.train), ("valid", corpus.valid), ("test", corpus.test)):
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as f:
            for inst in insts:
                f.write(json.dumps(instance_to_record(inst), sort_keys=True) + "\n")
    corpus.schema.save(out / "relations.tsv")
    save_embeddings(out / "embeddings.txt", corpus.words, corpus.vectors)
    (out / "spec.json").write_text(json.dumps(asdict(corpus.spec), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    names = ["train.jsonl", "valid.jsonl", "test.jsonl", "relations.tsv", "embeddings.txt", "spec.json"]
    return {n: hashlib.sha256((out / n).read_bytes()).hexdigest() for n in names}
