"""
Sentence-bag self-attention
===========================

A bag is a fully connected graph of its sentence vectors.  Edge scores are
cosine similarities, normalized by softmax along each row.  Every sentence
is then replaced by the attention-weighted sum of its neighbours, so similar
sentences reinforce each other.
"""

import json

import numpy as np

from gbre.bag_graph import bag_self_attention, dump_attention

rng = np.random.default_rng(2)
shared = rng.normal(size=6)
bag = np.stack([shared + 0.1 * rng.normal(size=6),   # two sentences that agree
                shared + 0.1 * rng.normal(size=6),
                rng.normal(size=6)])                 # an unrelated one

out = bag_self_attention(bag[None])
print("alpha (rows sum to 1):")
print(np.round(out.alpha.data[0], 3))

# The attention matrix can be dumped per bag, keyed by sentence index.
print(json.dumps(json.loads(dump_attention(out.alpha.data[0], 3)), indent=1)[:200], "...")

# Permuting the bag permutes the output rows the same way.
perm = [2, 0, 1]
again = bag_self_attention(bag[perm][None])
print("equivariant:", np.allclose(again.updated.data[0], out.updated.data[0][perm]))
