"""The imbalance-aware loss and a finite-difference check of backprop.

Run with ``python demos/02_loss_and_gradients.py``.
"""
import numpy as np

from progroute.nn import (PROBE_KINDS, LossKind, LossSpec, f_loss, grad_check, multiplier,
                          probe_network)

spec = LossSpec()
print(f"k_sub_opt={spec.k_sub_opt}, k_err={spec.k_err}")

# Distance d = predicted route tiles minus reference route tiles.
for d in (-8, -3, -1, 0, 1, 2, 5, 20):
    print(f"  d={d:+3d}  multiplier {multiplier(d, spec):.4f}")

# An empty prediction against a 6-tile reference: MSE alone is tiny,
# but the multiplier grows with every missing tile.
ref = np.zeros((8, 8))
ref[2, 1:7] = 1
empty = np.zeros((8, 8))
loss, mult = f_loss(empty, ref, spec)
print(f"\nempty prediction: MSE {np.mean(ref ** 2):.4f}, FLoss {loss:.4f} (x{mult:.3f})")

# Backprop agrees with central differences on a network holding every layer kind.
net = probe_network(PROBE_KINDS, seed=0)
print("\nprobe network:", " -> ".join(type(l).__name__ for l in net.layers))
for kind in (LossKind.MSE, LossKind.FLOSS):
    err = grad_check(net, LossSpec(kind), probe_count=200)
    print(f"{kind.value:6s} max relative error {err:.2e}")
