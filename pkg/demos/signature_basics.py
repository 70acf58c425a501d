"""Signatures of a small path and the algebra they live in.

Run with ``python3 demos/signature_basics.py``.
"""

import numpy as np

from sigportfolio.signature import DiscretePath, path_signature, time_augment
from sigportfolio.tensor import enumerate_words, group_inverse, shuffle, tensor_mul

rng = np.random.default_rng(0)

# A two-dimensional random walk, observed at 200 times, augmented with a clock.
times = np.arange(200.0)
walk = np.cumsum(rng.normal(scale=0.1, size=(200, 2)), axis=0)
path = time_augment(DiscretePath(times, walk), horizon=199.0)
stream = path_signature(path, 3)
sig = stream[-1]

print("letters: 1 = time, 2 and 3 = walk components")
for word in enumerate_words(3, 2):
    print(f"  <{word}, S> = {sig[word]: .6f}")

# Products of coordinates are linear in the signature: the shuffle identity.
I, J = enumerate_words(3, 1)[1], enumerate_words(3, 2)[7]
print(f"\n<{I}>*<{J}> = {sig[I] * sig[J]:.12f}")
print(f"shuffle     = {shuffle(I, J).evaluate(sig):.12f}")

# Splitting the path in two and multiplying the pieces gives the whole signature.
first = path_signature(path.slice(0, 121), 3)[-1]
second = path_signature(path.slice(120, 200), 3)[-1]
print(f"\nconcatenation error: {tensor_mul(first, second).max_abs_diff(sig):.2e}")
print(f"inverse error:       {tensor_mul(sig, group_inverse(sig)).max_abs_diff(stream[0]):.2e}")
