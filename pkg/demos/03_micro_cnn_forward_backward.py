#!/usr/bin/env python3
"""Build the small reference CNN, push a batch through it, and confirm the
hand-written backward pass against finite differences."""

import numpy as np

from leafbench import (MicroCNNConfig, build_micro_cnn, count_parameters,
                       full_space)
from leafbench.gradcheck import micro_cnn_gradient_check

space = full_space("paired")

# Full-size configuration: three conv blocks with 'same' padding and 2x2
# max pooling, then flatten into a 34-way sigmoid head.
config = MicroCNNConfig()
print("default architecture")
print(f"  input          {config.input_side}x{config.input_side}x{config.input_channels}")
for i, (n_kernels, side, stride) in enumerate(config.blocks, start=1):
    print(f"  block {i}        {n_kernels} kernels {side}x{side} stride {stride}, then 2x2 pool")
print(f"  flatten        {config.flatten_dim()} features")
print(f"  sigmoid head   {space.vector_length} labels")

model = build_micro_cnn(config, space, rng=np.random.default_rng(0))
print(f"  parameters     {count_parameters(model):,}")

# Forward pass on random pixels: every output is a probability.
rng = np.random.default_rng(0)
batch = rng.random((4, config.input_side, config.input_side, 3))
probs = model.forward(batch, training=False)
print(f"\nforward on 4 random images -> {probs.shape}, "
      f"values in [{probs.min():.3f}, {probs.max():.3f}]")

# Backward pass fills one gradient array per parameter array.
targets = np.zeros((4, space.vector_length))
targets[:, 0] = 1.0
targets[:, len(space.plants)] = 1.0
loss = model.loss_and_grads(batch, targets)
grads = model.gradients()
print(f"loss {loss:.4f}, {len(grads)} gradient arrays, "
      f"largest magnitude {max(np.abs(g).max() for g in grads):.4f}")

# The analytic gradients must agree with central finite differences.
# A reduced copy of the network keeps the exhaustive sweep quick.
report = micro_cnn_gradient_check(seed=0)
print(f"\ngradient check on a reduced network "
      f"({report.n_parameters} parameters, all coordinates)")
print(f"  worst relative error {report.worst_rel_err:.2e} "
      f"(tolerance {report.tolerance:.0e}) -> "
      f"{'pass' if report.passed else 'FAIL'}")
