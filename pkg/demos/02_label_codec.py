#!/usr/bin/env python3
"""Tour the multi-label codec: targets carry exactly two ones, one in the
plant group and one in the condition group, and decoding is a group-wise
argmax that can be constrained to botanically valid pairs."""

import numpy as np

from leafbench import decode_prediction, encode_label, full_space, valid_pairs
from leafbench.labels import canonical_pair

space = full_space("paired")
print(f"paired space: {len(space.plants)} plants + "
      f"{len(space.conditions)} plant-specific conditions "
      f"= {space.vector_length} slots")

shared = full_space("shared")
print(f"shared space: {len(shared.plants)} plants + "
      f"{len(shared.conditions)} merged condition names "
      f"= {shared.vector_length} slots")

# Encoding puts a single 1 in each group.
vec = encode_label("Tomato", "Late Blight", space)
print(f"\nTomato / Late Blight encodes with {int(vec.sum())} ones at "
      f"slots {np.flatnonzero(vec).tolist()}")
print("slot names:", [space.labels()[i] for i in np.flatnonzero(vec)])

# Directory names are forgiving: case and stray whitespace do not matter.
print("\ncanonical_pair('  tomato ', 'LATE BLIGHT') ->",
      canonical_pair("  tomato ", "LATE BLIGHT"))

# Decoding reads the two argmaxes back out.
plant, condition = decode_prediction(vec, space)
print(f"decode of the clean target -> {plant} / {condition}")

# Every valid pair survives an encode/decode round trip, in both modes.
for mode, sp in (("paired", space), ("shared", shared)):
    ok = all(decode_prediction(encode_label(p, c, sp), sp) == (p, c)
             for p, c in sorted(valid_pairs(sp)))
    print(f"round trip over all {len(valid_pairs(sp))} pairs "
          f"({mode} mode): {'ok' if ok else 'BROKEN'}")

# A noisy score vector: the constrained decoder ignores conditions that
# do not occur for the decoded plant, the unconstrained one may not.
noisy = encode_label("Corn", "Common Rust", shared) * 0.6
noisy[len(shared.plants) + shared.conditions.index("Late Blight")] = 0.9
print("\nnoisy scores favour Late Blight, which never occurs on Corn")
print("  unconstrained:", decode_prediction(noisy, shared, constrained=False))
print("  constrained:  ", decode_prediction(noisy, shared, constrained=True))
