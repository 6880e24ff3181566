"""
Reverse-mode autodiff and finite-difference checking
=====================================================

Every model operation is a numpy op recorded on a tape.  Calling
``backward`` replays the tape in reverse.  ``finite_difference_check``
compares the result against central differences.
"""

import numpy as np

from gbre import numerics as nx
from gbre.numerics import Param, Tape

rng = np.random.default_rng(0)

# A tiny softmax classifier: logits = x W^T, loss = cross-entropy.
W = Param(rng.normal(size=(3, 4)), name="W")
x = rng.normal(size=(5, 4))
y = np.array([0, 2, 1, 1, 0])


def loss():
    logits = nx.matmul(x, nx.swapaxes(W, 0, 1))
    return nx.mul(nx.mean(nx.pick(nx.log_softmax(logits), y)), -1.0)


with Tape() as tape:
    value = loss()
print("ops recorded:", tape.ops())

nx.backward(value, tape)
print("dL/dW row 0:", np.round(W.grad[0], 4))

# The same gradient by central differences, step 1e-4.
W.zero_grad()
report = nx.finite_difference_check([W], loss, step=1e-4, tol=1e-3)
print("max relative error:", report.max_rel_error, "passed:", report.passed)

# One plain SGD step moves W against the gradient and clears it.
before = float(loss().data)
with Tape() as tape:
    out = loss()
nx.backward(out, tape)
nx.sgd_step([W], 0.5)
print(f"loss {before:.4f} -> {float(loss().data):.4f} after one SGD step")
