"""Routing-space domain model: tile grid, nets, path masks and feature encoding.

Capacity accounting uses a departure-tile edge model. The edge between
``(r, c)`` and ``(r, c + 1)`` is charged to the horizontal capacity of the
left tile; the edge between ``(r, c)`` and ``(r + 1, c)`` is charged to the
vertical capacity of the upper tile. A mask consumes one unit per edge of a
deterministic spanning forest built over its usable edges.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Coord = tuple[int, int]

# expansion order shared by every search in the package: up, down, left, right
NEIGHBOR_OFFSETS: tuple[Coord, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))


class CapacityError(ValueError):
    """Raised when a route would drive a tile capacity below zero."""


class BenchmarkParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class BenchmarkValidationError(ValueError):
    pass


@dataclass
class RoutingGrid:
    """Remaining horizontal/vertical wire capacity over an n x n tile map."""

    h_cap: np.ndarray
    v_cap: np.ndarray

    def __post_init__(self):
        self.h_cap = np.array(self.h_cap, dtype=np.int64)
        self.v_cap = np.array(self.v_cap, dtype=np.int64)
        if self.h_cap.ndim != 2 or self.h_cap.shape[0] != self.h_cap.shape[1]:
            raise ValueError(f"capacity maps must be square, got {self.h_cap.shape}")
        if self.h_cap.shape != self.v_cap.shape:
            raise ValueError("h_cap and v_cap shapes differ")
        if self.h_cap.shape[0] < 1:
            raise ValueError("grid side must be positive")
        if (self.h_cap < 0).any() or (self.v_cap < 0).any():
            raise ValueError("capacities must be non-negative")

    @classmethod
    def uniform(cls, n: int, h: int = 1, v: int | None = None) -> "RoutingGrid":
        v = h if v is None else v
        return cls(np.full((n, n), h), np.full((n, n), v))

    @property
    def n(self) -> int:
        return self.h_cap.shape[0]

    def copy(self) -> "RoutingGrid":
        return RoutingGrid(self.h_cap.copy(), self.v_cap.copy())

    def in_range(self, rc: Coord) -> bool:
        return 0 <= rc[0] < self.n and 0 <= rc[1] < self.n

    def max_capacity(self) -> int:
        return int(max(self.h_cap.max(), self.v_cap.max()))

    def __eq__(self, other):
        if not isinstance(other, RoutingGrid):
            return NotImplemented
        return (np.array_equal(self.h_cap, other.h_cap)
                and np.array_equal(self.v_cap, other.v_cap))


@dataclass(frozen=True)
class Net:
    id: str
    pins: tuple[Coord, ...]

    def __post_init__(self):
        pins = tuple((int(r), int(c)) for r, c in self.pins)
        object.__setattr__(self, "pins", pins)
        if not pins:
            raise ValueError(f"net {self.id!r} has no pins")
        if len(set(pins)) != len(pins) and len(set(pins)) != 1:
            raise ValueError(f"net {self.id!r} repeats a pin coordinate")

    def validate(self, n: int) -> None:
        for r, c in self.pins:
            if not (0 <= r < n and 0 <= c < n):
                raise BenchmarkValidationError(
                    f"net {self.id!r}: pin ({r}, {c}) outside {n}x{n} grid")

    @property
    def distinct_pins(self) -> list[Coord]:
        return list(dict.fromkeys(self.pins))


def is_trivial(net: Net) -> bool:
    """True when every pin sits on the same tile (no routing needed)."""
    return len(set(net.pins)) == 1


@dataclass
class Benchmark:
    grid: RoutingGrid
    nets: list[Net] = field(default_factory=list)
    name: str = "benchmark"

    def __post_init__(self):
        ids = [net.id for net in self.nets]
        if len(set(ids)) != len(ids):
            dup = [k for k, v in Counter(ids).items() if v > 1]
            raise BenchmarkValidationError(f"duplicate net ids: {dup}")
        for net in self.nets:
            net.validate(self.grid.n)

    def __eq__(self, other):
        if not isinstance(other, Benchmark):
            return NotImplemented
        return self.grid == other.grid and self.nets == other.nets


# ---------------------------------------------------------------------------
# masks

def empty_mask(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=np.uint8)


def mask_from_tiles(n: int, tiles: Iterable[Coord]) -> np.ndarray:
    mask = empty_mask(n)
    for r, c in tiles:
        mask[r, c] = 1
    return mask


def pin_mask(n: int, net: Net) -> np.ndarray:
    return mask_from_tiles(n, net.pins)


def edge_capacity(h_cap: np.ndarray, v_cap: np.ndarray, a: Coord, b: Coord) -> int:
    """Remaining capacity of the edge between 4-adjacent tiles ``a`` and ``b``."""
    (r0, c0), (r1, c1) = sorted((a, b))
    if r0 == r1:
        return int(h_cap[r0, c0])
    return int(v_cap[r0, c0])


def spanning_moves(mask: np.ndarray, grid: RoutingGrid) -> tuple[list[tuple[Coord, Coord]], bool]:
    """Spanning-forest moves of ``mask`` using only edges with capacity left.

    Each component is grown breadth-first from its lowest (row, col) tile.
    Returns the move list and whether the forest spans every 4-connected
    component of the mask (False means some adjacency can only be realised
    through an exhausted edge).
    """
    mask = np.asarray(mask)
    n = mask.shape[0]
    tiles = list(zip(*np.nonzero(mask)))
    seen = np.zeros(mask.shape, dtype=bool)
    moves: list[tuple[Coord, Coord]] = []
    usable_components = 0
    for start in tiles:
        start = (int(start[0]), int(start[1]))
        if seen[start]:
            continue
        usable_components += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            r, c = queue.popleft()
            for dr, dc in NEIGHBOR_OFFSETS:
                nr, nc = r + dr, c + dc
                if not (0 <= nr < n and 0 <= nc < n) or seen[nr, nc] or not mask[nr, nc]:
                    continue
                if edge_capacity(grid.h_cap, grid.v_cap, (r, c), (nr, nc)) < 1:
                    continue
                seen[nr, nc] = True
                moves.append(((r, c), (nr, nc)))
                queue.append((nr, nc))
    return moves, usable_components == count_components(mask)


def count_components(mask: np.ndarray) -> int:
    from scipy import ndimage

    _, count = ndimage.label(np.asarray(mask) > 0)
    return int(count)


def check_legality(mask: np.ndarray, grid: RoutingGrid) -> bool:
    """True iff ``apply_route(grid, mask)`` would succeed."""
    if np.asarray(mask).shape != (grid.n, grid.n):
        raise ValueError(f"mask shape {np.shape(mask)} does not match grid {grid.n}x{grid.n}")
    _, spans = spanning_moves(mask, grid)
    return spans


def apply_route(grid: RoutingGrid, mask: np.ndarray) -> RoutingGrid:
    """Return a copy of ``grid`` with the route's capacity consumed.

    Raises CapacityError (leaving ``grid`` untouched) when a required
    adjacency has no capacity left.
    """
    if np.asarray(mask).shape != (grid.n, grid.n):
        raise ValueError(f"mask shape {np.shape(mask)} does not match grid {grid.n}x{grid.n}")
    moves, spans = spanning_moves(mask, grid)
    if not spans:
        raise CapacityError("route needs an edge with no remaining capacity")
    out = grid.copy()
    for a, b in moves:
        (r0, c0), (r1, c1) = sorted((a, b))
        if r0 == r1:
            out.h_cap[r0, c0] -= 1
        else:
            out.v_cap[r0, c0] -= 1
    return out


# ---------------------------------------------------------------------------
# features

def encode_features(grid: RoutingGrid, net: Net, cap_max: int) -> np.ndarray:
    """n x n x 3 float32 input: scaled v_cap, scaled h_cap, pin indicator."""
    if cap_max <= 0:
        raise ValueError("cap_max must be positive")
    if grid.max_capacity() > cap_max:
        raise ValueError(f"capacity {grid.max_capacity()} exceeds cap_max={cap_max}")
    net.validate(grid.n)
    feats = np.empty((grid.n, grid.n, 3), dtype=np.float32)
    feats[..., 0] = grid.v_cap / cap_max
    feats[..., 1] = grid.h_cap / cap_max
    feats[..., 2] = pin_mask(grid.n, net)
    return feats


# ---------------------------------------------------------------------------
# benchmark text format

def _is_power_of_two(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


def check_resolution(n: int, core_size: int | None = None) -> None:
    if core_size is None:
        ok = _is_power_of_two(n)
    else:
        ok = n >= core_size and n % core_size == 0 and _is_power_of_two(n // core_size)
    if not ok:
        base = "a power of two" if core_size is None else f"{core_size} times a power of two"
        raise BenchmarkValidationError(f"grid side {n} is not {base}")


def parse_benchmark(text: str | Iterable[str], core_size: int | None = None,
                    name: str = "benchmark") -> Benchmark:
    """Read the line-oriented benchmark format.

    ``grid n n`` / ``capacity h v`` / ``blockage r c h v`` /
    ``net id k`` followed by k ``pin r c`` lines. ``#`` starts a comment.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    n = None
    default = None
    blockages: list[tuple[int, int, int, int, int]] = []
    nets: list[Net] = []
    pending: tuple[str, int, list[Coord], int] | None = None

    def ints(tokens, count, lineno):
        if len(tokens) != count:
            raise BenchmarkParseError(lineno, f"expected {count} fields, got {len(tokens)}")
        try:
            return [int(t) for t in tokens]
        except ValueError:
            raise BenchmarkParseError(lineno, f"non-integer field in {tokens}") from None

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if pending is not None and key != "pin":
            raise BenchmarkParseError(lineno, f"net {pending[0]!r} expects {pending[1]} pins")
        if key == "grid":
            if n is not None:
                raise BenchmarkParseError(lineno, "duplicate grid line")
            rows, cols = ints(rest, 2, lineno)
            if rows != cols:
                raise BenchmarkParseError(lineno, "grid must be square")
            if rows < 1:
                raise BenchmarkParseError(lineno, "grid side must be positive")
            n = rows
        elif key == "capacity":
            h, v = ints(rest, 2, lineno)
            if h < 0 or v < 0:
                raise BenchmarkParseError(lineno, "negative capacity")
            default = (h, v)
        elif key == "blockage":
            r, c, h, v = ints(rest, 4, lineno)
            if h < 0 or v < 0:
                raise BenchmarkParseError(lineno, "negative capacity")
            blockages.append((lineno, r, c, h, v))
        elif key == "net":
            if len(rest) != 2:
                raise BenchmarkParseError(lineno, "expected 'net <id> <k>'")
            k = ints(rest[1:], 1, lineno)[0]
            if k < 1:
                raise BenchmarkParseError(lineno, "net needs at least one pin")
            pending = (rest[0], k, [], lineno)
        elif key == "pin":
            if pending is None:
                raise BenchmarkParseError(lineno, "pin outside a net block")
            pending[2].append(tuple(ints(rest, 2, lineno)))
            if len(pending[2]) == pending[1]:
                try:
                    nets.append(Net(pending[0], tuple(pending[2])))
                except ValueError as exc:
                    raise BenchmarkParseError(pending[3], str(exc)) from None
                pending = None
        else:
            raise BenchmarkParseError(lineno, f"unknown record {key!r}")
    if pending is not None:
        raise BenchmarkParseError(len(lines), f"net {pending[0]!r} truncated")
    if n is None:
        raise BenchmarkParseError(len(lines), "missing grid line")
    check_resolution(n, core_size)
    h, v = default if default is not None else (1, 1)
    grid = RoutingGrid.uniform(n, h, v)
    for lineno, r, c, bh, bv in blockages:
        if not grid.in_range((r, c)):
            raise BenchmarkValidationError(f"line {lineno}: blockage ({r}, {c}) out of range")
        grid.h_cap[r, c] = bh
        grid.v_cap[r, c] = bv
    return Benchmark(grid, nets, name=name)


def emit_benchmark(bench: Benchmark) -> str:
    grid = bench.grid
    pairs = Counter(zip(grid.h_cap.ravel().tolist(), grid.v_cap.ravel().tolist()))
    h, v = pairs.most_common(1)[0][0]
    out = [f"grid {grid.n} {grid.n}", f"capacity {h} {v}"]
    for r in range(grid.n):
        for c in range(grid.n):
            if (grid.h_cap[r, c], grid.v_cap[r, c]) != (h, v):
                out.append(f"blockage {r} {c} {grid.h_cap[r, c]} {grid.v_cap[r, c]}")
    for net in bench.nets:
        out.append(f"net {net.id} {len(net.pins)}")
        out.extend(f"pin {r} {c}" for r, c in net.pins)
    return "\n".join(out) + "\n"


def tiles_of(mask: np.ndarray) -> list[Coord]:
    return [(int(r), int(c)) for r, c in zip(*np.nonzero(mask))]


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def nearest_distance(p: Coord, tiles: Sequence[Coord]) -> int:
    return min(manhattan(p, t) for t in tiles)
