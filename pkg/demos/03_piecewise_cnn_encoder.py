"""
Piecewise max pooling
=====================

The convolution output of each kernel is split at the two entity positions.
Each of the three pieces is max-pooled.  The pooled values go through a
ReLU, which gives a 3c-dimensional sentence vector.
"""

import numpy as np

from gbre.pcnn_encoder import piecewise_pool, segment_bounds

# One kernel's activations over a 6-token sentence, head ends at token 2 and
# tail at token 4 (1-based).  Pieces are [1,2], (2,4], (4,6].
row = np.array([1.0, 5.0, 2.0, 7.0, 3.0, 9.0])
pooled = piecewise_pool(row[None, :, None], [2], [4], [6]).data[0, 0]
print("activations:", row, "-> pooled", pooled)

# When the tail is the last token the third piece is empty and pools to 0.
bounds, nonempty = segment_bounds([1], [6], [6])
print("bounds:", bounds[0].tolist(), "nonempty:", nonempty[0].tolist())
print("pooled:", piecewise_pool(row[None, :, None], [1], [6], [6]).data[0, 0])

# Entity order does not matter for segmentation.
print("swapped:", piecewise_pool(row[None, :, None], [4], [2], [6]).data[0, 0])
