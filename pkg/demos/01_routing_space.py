"""Walk through the routing model: a grid, a net, an oracle route, and its cost.

Run with ``python demos/01_routing_space.py``.
"""
import numpy as np

from progroute.data import SynthParams, synth_instance
from progroute.grid import apply_route, check_legality, encode_features
from progroute.oracle import route_net
from progroute.evaluation import check_connectivity


def show(mask, grid=None, pins=()):
    for r in range(mask.shape[0]):
        row = ""
        for c in range(mask.shape[1]):
            if (r, c) in pins:
                row += "P"
            elif mask[r, c]:
                row += "#"
            elif grid is not None and grid.h_cap[r, c] == 0 and grid.v_cap[r, c] == 0:
                row += "x"
            else:
                row += "."
        print("   " + row)


# A 16x16 grid with 20% obstacles and a three-pin net, drawn from one seed.
rng = np.random.default_rng(7)
grid, net = synth_instance(16, SynthParams((3, 3), 0.2, cap_default=2, cap_max=2), rng)
print(f"net {net.id} pins {net.pins}")
print(f"obstacles: {int(((grid.h_cap == 0) & (grid.v_cap == 0)).sum())} tiles")

# The oracle router grows a tree from the first pin, attaching the nearest pin each time.
result = route_net(grid, net)
print(f"\noracle: {result.status.value}, wirelength {result.wirelength}")
show(result.mask, grid, set(net.pins))

# Every oracle route is connected and fits the grid capacities.
print("\nconnected:", check_connectivity(result.mask, net))
print("legal:", check_legality(result.mask, grid))

# Committing the route spends one unit of capacity per edge of the route.
after = apply_route(grid, result.mask)
spent = int((grid.h_cap - after.h_cap).sum() + (grid.v_cap - after.v_cap).sum())
print(f"capacity spent: {spent} (= wirelength - 1 for a tree)")

# The model's view of the same instance: three channels scaled to [0, 1].
feats = encode_features(grid, net, cap_max=2)
print("\nfeature tensor", feats.shape, feats.dtype)
print("vertical capacity channel, top-left 4x4:\n", feats[:4, :4, 0])
print("pin channel sum:", feats[..., 2].sum())
