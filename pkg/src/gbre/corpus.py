"""Instances, bags, vocabulary, relation schema and query generation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
QUERY_TEMPLATE = "what is the relation between head-entity {e1} and tail-entity {e2} ?"


class CorpusError(ValueError):
    """Input data failed validation.  ``diagnostics`` holds one message per problem."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        head = "; ".join(self.diagnostics[:5])
        more = f" (+{len(self.diagnostics) - 5} more)" if len(self.diagnostics) > 5 else ""
        super().__init__(f"{len(self.diagnostics)} invalid record(s): {head}{more}")


@dataclass(frozen=True)
class Instance:
    tokens: tuple
    head: str
    tail: str
    head_span: tuple  # [start, stop) token indices
    tail_span: tuple
    relation: str
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def pair(self) -> tuple:
        return (self.head, self.tail)

    def bag_key(self, mode: str = "train") -> tuple:
        return (self.head, self.tail, self.relation) if mode == "train" else (self.head, self.tail)


@dataclass
class Bag:
    key: tuple
    instances: list
    label: int
    labels: frozenset = frozenset()

    @property
    def head(self) -> str:
        return self.key[0]

    @property
    def tail(self) -> str:
        return self.key[1]

    def __len__(self):
        return len(self.instances)


class RelationSchema:
    def __init__(self, relations: dict, na: str = "NA"):
        ids = sorted(relations.values())
        if ids != list(range(len(ids))):
            raise CorpusError([f"relation ids must be dense from 0, got {ids}"])
        if na not in relations:
            raise CorpusError([f"schema has no NA relation named {na!r}"])
        self.rel2id = dict(relations)
        self.id2rel = {i: r for r, i in relations.items()}
        self.na_name = na
        self.na_id = relations[na]

    def __len__(self):
        return len(self.rel2id)

    def __contains__(self, name):
        return name in self.rel2id

    def __getitem__(self, name) -> int:
        return self.rel2id[name]

    def names(self) -> list:
        return [self.id2rel[i] for i in range(len(self))]

    @classmethod
    def load(cls, path, na: str = "NA") -> "RelationSchema":
        rels = {}
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                name, rid = line.rstrip("\n").split("\t")
                rels[name] = int(rid)
            except ValueError:
                raise CorpusError([f"{path}:{n}: expected 'name<TAB>id'"]) from None
        return cls(rels, na=na)

    @classmethod
    def from_instances(cls, instances: Iterable[Instance], na: str = "NA") -> "RelationSchema":
        names = sorted({i.relation for i in instances} - {na})
        return cls({na: 0, **{r: k + 1 for k, r in enumerate(names)}}, na=na)

    def save(self, path):
        Path(path).write_text("".join(f"{self.id2rel[i]}\t{i}\n" for i in range(len(self))),
                              encoding="utf-8")


class Vocabulary:
    """word -> id map with PAD at 0 and UNK at 1."""

    def __init__(self, words: Iterable[str], lowercase: bool = True):
        self.lowercase = lowercase
        self.id2word = [PAD, UNK]
        self.word2id = {PAD: PAD_ID, UNK: UNK_ID}
        for w in words:
            if w not in self.word2id:
                self.word2id[w] = len(self.id2word)
                self.id2word.append(w)

    def __len__(self):
        return len(self.id2word)

    def lookup(self, token: str) -> int:
        if self.lowercase:
            token = token.lower()
        return self.word2id.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    vectors: np.ndarray  # (len(vocab), d_w); row PAD_ID is zero

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def load_embeddings(path, seed: int = 0, lowercase: bool = True) -> EmbeddingTable:
    """Read a ``V d_w`` header followed by ``word v1 .. v_dw`` lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CorpusError([f"{path}: empty embeddings file"])
    try:
        n_words, dim = (int(x) for x in lines[0].split())
    except ValueError:
        raise CorpusError([f"{path}:1: header must be 'V d_w'"]) from None
    words, rows, errors = [], [], []
    for n, line in enumerate(lines[1:], 2):
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            errors.append(f"{path}:{n}: expected {dim + 1} fields, got {len(parts)}")
            continue
        words.append(parts[0].lower() if lowercase else parts[0])
        rows.append([float(x) for x in parts[1:]])
    if len(words) != n_words:
        errors.append(f"{path}: header announces {n_words} words, found {len(words)}")
    if errors:
        raise CorpusError(errors)
    return embeddings_from_arrays(words, np.array(rows).reshape(len(rows), dim), seed, lowercase)


def embeddings_from_arrays(words: Sequence[str], vectors: np.ndarray, seed: int = 0,
                           lowercase: bool = True) -> EmbeddingTable:
    vocab = Vocabulary(words, lowercase=lowercase)
    dim = vectors.shape[1]
    table = np.zeros((len(vocab), dim))
    table[UNK_ID] = np.random.default_rng(seed).uniform(-0.25, 0.25, dim)
    for w, v in zip(words, vectors):
        table[vocab.word2id[w]] = v
    table[PAD_ID] = 0.0
    return EmbeddingTable(vocab, table)


def save_embeddings(path, words: Sequence[str], vectors: np.ndarray):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(words)} {vectors.shape[1]}\n")
        for w, v in zip(words, vectors):
            f.write(w + " " + " ".join(repr(float(x)) for x in v) + "\n")


# ---------------------------------------------------------------------------
# instances


def _find(tokens: Sequence[str], name_tokens: Sequence[str], avoid: tuple | None = None):
    n = len(name_tokens)
    low = [t.lower() for t in tokens]
    target = [t.lower() for t in name_tokens]
    for i in range(len(tokens) - n + 1):
        if low[i:i + n] == target:
            if avoid and i < avoid[1] and i + n > avoid[0]:
                continue
            return (i, i + n)
    return None


def parse_record(rec: dict, schema: RelationSchema | None = None,
                 default_relation: str | None = None) -> Instance:
    """Build and validate one Instance; raises ValueError with a reason.

    ``default_relation`` fills in a missing ``relation`` field (unlabeled input).
    """
    if "relation" not in rec and default_relation is not None:
        rec = {**rec, "relation": default_relation}
    if "tokens" in rec:
        tokens = tuple(rec["tokens"])
    elif "text" in rec:
        tokens = tuple(rec["text"].split())
    else:
        raise ValueError("missing field 'tokens' or 'text'")
    for k in ("h", "t", "relation"):
        if k not in rec:
            raise ValueError(f"missing field {k!r}")
    spans = {}
    for k in ("h", "t"):
        ent = rec[k]
        if "name" not in ent:
            raise ValueError(f"missing field '{k}.name'")
        if "pos" in ent:
            start, stop = (int(x) for x in ent["pos"])
        else:
            found = _find(tokens, ent["name"].split(), spans.get("h"))
            if found is None:
                raise ValueError(f"entity {ent['name']!r} not found in tokens")
            start, stop = found
        if not 0 <= start < stop <= len(tokens):
            raise ValueError(f"span {k}=[{start},{stop}) out of range for {len(tokens)} tokens")
        spans[k] = (start, stop)
    (hs, he), (ts, te) = spans["h"], spans["t"]
    if hs < te and ts < he:
        raise ValueError("head and tail spans overlap")
    rel = rec["relation"]
    if schema is not None and rel not in schema:
        raise ValueError(f"unknown relation {rel!r}")
    meta = {k: v for k, v in rec.items() if k not in ("tokens", "text", "h", "t", "relation")}
    return Instance(tokens, rec["h"]["name"], rec["t"]["name"], spans["h"], spans["t"], rel, meta)


def load_instances(path, schema: RelationSchema | None = None,
                   default_relation: str | None = None) -> list:
    instances, errors = [], []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                instances.append(parse_record(json.loads(line), schema, default_relation))
            except (ValueError, TypeError, KeyError, AttributeError) as e:
                errors.append(f"{path}:{n}: {e}")
    if errors:
        raise CorpusError(errors)
    if not instances:
        log.warning("%s contains no instances", path)
    return instances


def instance_to_record(inst: Instance) -> dict:
    return {
        "tokens": list(inst.tokens),
        "h": {"name": inst.head, "pos": list(inst.head_span)},
        "t": {"name": inst.tail, "pos": list(inst.tail_span)},
        "relation": inst.relation,
        **inst.meta,
    }


def build_bags(instances: Sequence[Instance], schema: RelationSchema, mode: str = "train",
               max_bag_size: int = 32) -> list:
    """Group instances into bags, keeping first-appearance order of bags and instances."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    groups: dict = {}
    for inst in instances:
        groups.setdefault(inst.bag_key(mode), []).append(inst)
    bags = []
    for key, members in groups.items():
        labels = frozenset(schema[i.relation] for i in members)
        if mode == "train":
            label = schema[key[2]]
        else:
            non_na = [schema[i.relation] for i in members if schema[i.relation] != schema.na_id]
            label = non_na[0] if non_na else schema.na_id
        bags.append(Bag(key, members[:max_bag_size], label, labels))
    return bags


def generate_query(e1: str, e2: str) -> list:
    if not e1 or not e2:
        raise ValueError("entity strings must be nonempty")
    return QUERY_TEMPLATE.format(e1=e1.lower(), e2=e2.lower()).split()


# ---------------------------------------------------------------------------
# encoding


@dataclass
class EncodedInstance:
    word_ids: np.ndarray  # (max_len,)
    pos1: np.ndarray  # shifted offsets to the head, (max_len,)
    pos2: np.ndarray
    k1: int  # 1-based position of the head's last token
    k2: int
    length: int


def relative_positions(max_len: int, k: int) -> np.ndarray:
    """Offsets ``l - k`` for l = 1..max_len, clipped and shifted into [0, 2*max_len]."""
    l = np.arange(1, max_len + 1)
    return np.clip(l - k, -max_len, max_len) + max_len


def encode_instance(inst: Instance, vocab: Vocabulary, max_len: int):
    """Map an instance to padded ids and position indices.

    Returns None (and logs a warning) when truncation removes an entity.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    tokens = inst.tokens[:max_len]
    length = len(tokens)
    if inst.head_span[0] >= max_len or inst.tail_span[0] >= max_len:
        log.warning("dropping instance %s: entity truncated at max_len=%d", inst.pair, max_len)
        return None
    k1 = min(inst.head_span[1], max_len)
    k2 = min(inst.tail_span[1], max_len)
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[:length] = vocab.encode(tokens)
    return EncodedInstance(ids, relative_positions(max_len, k1), relative_positions(max_len, k2),
                           k1, k2, length)


@dataclass
class EncodedBag:
    key: tuple
    label: int
    labels: frozenset
    word_ids: np.ndarray  # (N, max_len)
    pos1: np.ndarray
    pos2: np.ndarray
    k1: np.ndarray  # (N,)
    k2: np.ndarray
    lengths: np.ndarray
    query_ids: np.ndarray  # (T,)
    meta: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.lengths)


def encode_bags(bags: Sequence[Bag], vocab: Vocabulary, max_len: int) -> list:
    out = []
    for bag in bags:
        enc = [(encode_instance(i, vocab, max_len), i) for i in bag.instances]
        enc = [(e, i) for e, i in enc if e is not None]
        if not enc:
            log.warning("dropping bag %s: no encodable instances", bag.key)
            continue
        out.append(EncodedBag(
            key=bag.key, label=bag.label, labels=bag.labels,
            word_ids=np.stack([e.word_ids for e, _ in enc]),
            pos1=np.stack([e.pos1 for e, _ in enc]),
            pos2=np.stack([e.pos2 for e, _ in enc]),
            k1=np.array([e.k1 for e, _ in enc]),
            k2=np.array([e.k2 for e, _ in enc]),
            lengths=np.array([e.length for e, _ in enc]),
            query_ids=vocab.encode(generate_query(bag.head, bag.tail)),
            meta=[i.meta for _, i in enc],
        ))
    return out


@dataclass
class Batch:
    """Padded arrays for a list of encoded bags.

    Sentence-level arrays have a leading axis over all sentences in the
    batch; ``slots`` maps (bag, position) to a sentence row, -1 for padding.
    """
    keys: list
    labels: np.ndarray  # (B,)
    word_ids: np.ndarray  # (S, L)
    pos1: np.ndarray
    pos2: np.ndarray
    sent_mask: np.ndarray  # (S, L) bool
    k1: np.ndarray  # (S,)
    k2: np.ndarray
    lengths: np.ndarray
    sent_bag: np.ndarray  # (S,) owning bag index
    query_ids: np.ndarray  # (B, T)
    query_mask: np.ndarray  # (B, T) bool
    slots: np.ndarray  # (B, N)
    bag_mask: np.ndarray  # (B, N) bool

    @property
    def n_bags(self) -> int:
        return len(self.keys)


def collate(bags: Sequence[EncodedBag]) -> Batch:
    L = int(max(b.lengths.max() for b in bags))
    T = max(len(b.query_ids) for b in bags)
    N = max(b.size for b in bags)
    S = sum(b.size for b in bags)
    query = np.full((len(bags), T), PAD_ID, dtype=np.int64)
    slots = np.full((len(bags), N), -1, dtype=np.int64)
    row = 0
    for i, b in enumerate(bags):
        query[i, :len(b.query_ids)] = b.query_ids
        slots[i, :b.size] = np.arange(row, row + b.size)
        row += b.size
    lengths = np.concatenate([b.lengths for b in bags])
    return Batch(
        keys=[b.key for b in bags],
        labels=np.array([b.label for b in bags], dtype=np.int64),
        word_ids=np.concatenate([b.word_ids[:, :L] for b in bags]),
        pos1=np.concatenate([b.pos1[:, :L] for b in bags]),
        pos2=np.concatenate([b.pos2[:, :L] for b in bags]),
        sent_mask=np.arange(L)[None, :] < lengths[:, None],
        k1=np.concatenate([b.k1 for b in bags]),
        k2=np.concatenate([b.k2 for b in bags]),
        lengths=lengths,
        sent_bag=np.repeat(np.arange(len(bags)), [b.size for b in bags]),
        query_ids=query,
        query_mask=query != PAD_ID,
        slots=slots,
        bag_mask=slots >= 0,
    )
