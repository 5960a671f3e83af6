"""Deterministic capacity-aware maze router used for labels and baselines."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .grid import (NEIGHBOR_OFFSETS, Benchmark, Coord, Net, RoutingGrid, apply_route,
                   empty_mask, is_trivial, manhattan)


class RouteStatus(str, enum.Enum):
    ROUTED = "Routed"
    INFEASIBLE = "Infeasible"


@dataclass
class RouteResult:
    status: RouteStatus
    mask: np.ndarray

    @property
    def routed(self) -> bool:
        return self.status is RouteStatus.ROUTED

    @property
    def wirelength(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class RouteSummary:
    routed: int        # non-trivial nets routed
    nontrivial: int
    wirelength: int    # total over every routed net, trivial ones included

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.routed, self.nontrivial, self.wirelength)


def _can_move(h_cap, v_cap, r, c, nr, nc) -> bool:
    if nr == r:
        return h_cap[r, min(c, nc)] > 0
    return v_cap[min(r, nr), c] > 0


def _attach(grid: RoutingGrid, tree: np.ndarray, target: Coord) -> list[Coord] | None:
    """Shortest usable-edge path from any tree tile to ``target``.

    Breadth-first from every tree tile at distance 0; the path is rebuilt
    from the target by always stepping to the lowest (row, col) predecessor.
    """
    n = grid.n
    h_cap, v_cap = grid.h_cap, grid.v_cap
    if tree[target]:
        return [target]
    dist = np.full((n, n), -1, dtype=np.int64)
    queue = deque()
    for r, c in zip(*np.nonzero(tree)):
        dist[r, c] = 0
        queue.append((int(r), int(c)))
    found = False
    while queue and not found:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in NEIGHBOR_OFFSETS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < n and 0 <= nc < n and dist[nr, nc] < 0 and _can_move(h_cap, v_cap, r, c, nr, nc):
                dist[nr, nc] = d
                if (nr, nc) == target:
                    found = True
                    break
                queue.append((nr, nc))
    if not found:
        return None
    path = [target]
    r, c = target
    while dist[r, c] > 0:
        want = dist[r, c] - 1
        best = None
        for dr, dc in NEIGHBOR_OFFSETS:
            pr, pc = r + dr, c + dc
            if (0 <= pr < n and 0 <= pc < n and dist[pr, pc] == want
                    and _can_move(h_cap, v_cap, pr, pc, r, c)):
                if best is None or (pr, pc) < best:
                    best = (pr, pc)
        r, c = best
        path.append(best)
    path.reverse()
    return path


def route_two_pin(grid: RoutingGrid, a: Coord, b: Coord) -> RouteResult:
    a, b = tuple(a), tuple(b)
    if not (grid.in_range(a) and grid.in_range(b)):
        raise ValueError(f"pins {a}, {b} outside {grid.n}x{grid.n} grid")
    tree = empty_mask(grid.n)
    tree[a] = 1
    path = _attach(grid, tree, b)
    if path is None:
        return RouteResult(RouteStatus.INFEASIBLE, empty_mask(grid.n))
    for t in path:
        tree[t] = 1
    return RouteResult(RouteStatus.ROUTED, tree)


def route_net(grid: RoutingGrid, net: Net) -> RouteResult:
    """Prim-style tree growth: attach the nearest unconnected pin each round."""
    net.validate(grid.n)
    tree = empty_mask(grid.n)
    tree[net.pins[0]] = 1
    tree_tiles = [net.pins[0]]
    remaining = list(net.pins[1:])
    while remaining:
        dists = [min(manhattan(p, t) for t in tree_tiles) for p in remaining]
        pin = remaining.pop(int(np.argmin(dists)))
        if tree[pin]:
            continue
        path = _attach(grid, tree, pin)
        if path is None:
            return RouteResult(RouteStatus.INFEASIBLE, empty_mask(grid.n))
        for t in path:
            if not tree[t]:
                tree[t] = 1
                tree_tiles.append(t)
    return RouteResult(RouteStatus.ROUTED, tree)


def route_benchmark(bench: Benchmark) -> tuple[list[RouteResult], RouteSummary]:
    """Route every net in order, consuming capacity after each success."""
    grid = bench.grid.copy()
    results = []
    routed = nontrivial = wirelength = 0
    for net in bench.nets:
        res = route_net(grid, net)
        results.append(res)
        trivial = is_trivial(net)
        nontrivial += not trivial
        if res.routed:
            grid = apply_route(grid, res.mask)
            wirelength += res.wirelength
            routed += not trivial
    return results, RouteSummary(routed, nontrivial, wirelength)
