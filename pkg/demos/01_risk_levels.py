"""
Risk levels from compression size
=================================

The probabilistic guarantee of a synthesised certificate is a single number
epsilon(k, beta, N): with confidence 1 - beta, a fresh trajectory violates the
certificate conditions with probability at most epsilon. Here we tabulate it.
"""

import numpy as np

from pacbarrier.pac import PacBound, epsilon, residual

# A small compression set out of many samples gives a small risk level.
for n in (100, 1000, 10_000):
    print(f"N = {n:6d}:", "  ".join(f"k={k}: {epsilon(k, 0.01, n):.4f}" for k in (0, 1, 5, 20)))

# The level is the root of a polynomial equation; the residual tells how
# well the double-precision root solves it.
e = epsilon(3, 1e-5, 100)
print(f"\nepsilon(3, 1e-5, 100) = {e:.6f}, residual {residual(e, 3, 1e-5, 100):.1e}")

# Discarding every sample leaves nothing to generalise from.
print("k = N gives", epsilon(50, 0.1, 50))

# Confidence is cheap: shrinking beta by orders of magnitude moves epsilon a little.
betas = 10.0 ** -np.arange(1, 9)
print("\nbeta   epsilon(k=1, N=1000)")
for b in betas:
    print(f"{b:.0e}  {epsilon(1, b, 1000):.5f}")

bound = PacBound.compute(1, 0.01, 1000)
print()
print(bound)
