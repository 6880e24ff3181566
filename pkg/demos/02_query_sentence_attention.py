"""
Query-sentence attention on one sentence
========================================

The entity pair becomes a templated question.  Each sentence word attends
over the question words (sentence-to-query).  The question picks the
sentence words that matter most (query-to-sentence).  The fused output
triples the word width.
"""

import numpy as np

from gbre import corpus
from gbre.qs_attention import query_sentence_attention

rng = np.random.default_rng(1)
sentence = "aspirin is commonly used to treat headache".split()
query = corpus.generate_query("aspirin", "headache")
print("query:", " ".join(query))

words = sorted(set(sentence + query))
emb = corpus.embeddings_from_arrays(words, rng.normal(size=(len(words), 8)))
S = emb.vectors[emb.vocab.encode(sentence)][None]
Q = emb.vectors[emb.vocab.encode(query)][None]
w_h = rng.normal(size=3 * 8)

out = query_sentence_attention(S, Q, w_h, np.ones((1, len(sentence)), bool),
                               np.ones((1, len(query)), bool))

# Which query word does each sentence word look at?
for word, row in zip(sentence, out.s2q.data[0]):
    print(f"{word:>10s} -> {query[int(row.argmax())]:<12s} ({row.max():.2f})")

# Query-to-sentence weights: one distribution over sentence positions.
print("q2s weights:", dict(zip(sentence, np.round(out.q2s.data[0], 3))))
print("fused width:", out.values.shape[-1], "= 3 x", S.shape[-1])
