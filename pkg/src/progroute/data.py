"""Synthetic routing datasets: instance generation, labeling and binary I/O."""

from __future__ import annotations

import enum
import json
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .grid import Benchmark, Net, RoutingGrid, encode_features, is_trivial, pin_mask
from .oracle import route_net

MAGIC = b"PVAE"
VERSION = 1
# magic, version, n, count, kind, seed, pin_lo, pin_hi, density, cap_default, cap_max
_HEADER = struct.Struct("<4sIIIBQIIdII")


class DatasetKind(str, enum.Enum):
    ROUTED = "Routed"
    ROUTE_FREE = "RouteFree"


class SynthesisError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class SynthParams:
    pin_count_range: tuple[int, int] = (2, 5)
    obstacle_density: float = 0.1
    cap_default: int = 2
    cap_max: int = 2

    def __post_init__(self):
        lo, hi = self.pin_count_range
        object.__setattr__(self, "pin_count_range", (int(lo), int(hi)))
        if not 1 <= lo <= hi:
            raise ValueError(f"bad pin_count_range {self.pin_count_range}")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ValueError("obstacle_density must lie in [0, 1)")
        if self.cap_default < 1 or self.cap_max < self.cap_default:
            raise ValueError("need 1 <= cap_default <= cap_max")


class Sample(NamedTuple):
    features: np.ndarray   # (n, n, 3) float32
    label: np.ndarray      # (n, n) uint8


@dataclass
class Dataset:
    resolution: int
    kind: DatasetKind
    features: np.ndarray   # (count, n, n, 3) float32
    labels: np.ndarray     # (count, n, n) uint8
    seed: int
    params: SynthParams

    def __post_init__(self):
        self.kind = DatasetKind(self.kind)
        n = self.resolution
        if len(self.features) == 0:
            raise ValueError("dataset must not be empty")
        if self.features.shape[1:] != (n, n, 3) or self.labels.shape[1:] != (n, n):
            raise ValueError("sample shapes do not match the dataset resolution")
        if len(self.features) != len(self.labels):
            raise ValueError("features/labels count mismatch")

    def __len__(self):
        return len(self.features)

    def __getitem__(self, i) -> Sample:
        return Sample(self.features[i], self.labels[i])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.resolution == other.resolution and self.kind == other.kind
                and self.seed == other.seed and self.params == other.params
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    @property
    def samples(self) -> list[Sample]:
        return [self[i] for i in range(len(self))]


def synth_instance(n: int, params: SynthParams, rng: np.random.Generator,
                   max_retries: int = 100) -> tuple[RoutingGrid, Net]:
    """Uniform grid with random zero-capacity obstacles and random pins."""
    if n < 4:
        raise ValueError("resolution must be at least 4")
    lo, hi = params.pin_count_range
    for _ in range(max_retries):
        k = int(rng.integers(lo, hi + 1))
        blocked = rng.random((n, n)) < params.obstacle_density
        free = np.flatnonzero(~blocked)
        if len(free) < k:
            continue
        grid = RoutingGrid.uniform(n, params.cap_default)
        grid.h_cap[blocked] = 0
        grid.v_cap[blocked] = 0
        picks = free[rng.integers(0, len(free), size=k)]
        if 1 < len(set(picks.tolist())) < k:
            continue    # partial pin overlap is not a valid net
        pins = tuple((int(p // n), int(p % n)) for p in picks)
        return grid, Net("n0", pins)
    raise SynthesisError(
        f"density {params.obstacle_density} left too few free tiles after {max_retries} tries")


def _make_sample(n, params, seed, index, kind, max_attempts):
    rng = np.random.default_rng([seed, index])
    for _ in range(max_attempts):
        grid, net = synth_instance(n, params, rng)
        if kind is DatasetKind.ROUTE_FREE:
            label = pin_mask(n, net)
        else:
            if is_trivial(net):
                continue
            res = route_net(grid, net)
            if not res.routed:
                continue
            label = res.mask
        return encode_features(grid, net, params.cap_max), label
    raise SynthesisError(
        f"sample {index}: no usable instance after {max_attempts} attempts "
        "(feasible rate too low for these parameters)")


def build_dataset(n: int, count: int, params: SynthParams | None = None, seed: int = 0,
                  kind: DatasetKind | str = DatasetKind.ROUTED, workers: int = 1,
                  max_attempts: int = 200) -> Dataset:
    """Synthesize ``count`` labeled samples at resolution ``n``.

    Each sample slot draws from its own RNG stream seeded by (seed, index),
    so the result does not depend on ``workers``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    params = params or SynthParams()
    kind = DatasetKind(kind)
    if kind is DatasetKind.ROUTED and params.pin_count_range[0] < 2:
        raise ValueError("routed datasets need at least two pins per net")

    def job(i):
        return _make_sample(n, params, seed, i, kind, max_attempts)

    feats = np.empty((count, n, n, 3), dtype=np.float32)
    labels = np.empty((count, n, n), dtype=np.uint8)

    def fill(i):
        feats[i], labels[i] = job(i)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, range(count)))
    else:
        for i in range(count):
            fill(i)
    return Dataset(n, kind, feats, labels, int(seed), params)


def synth_benchmark(n: int, net_count: int, params: SynthParams | None = None,
                    seed: int = 0, name: str = "synthetic") -> Benchmark:
    """One obstacle grid shared by ``net_count`` non-trivial nets."""
    params = params or SynthParams()
    rng = np.random.default_rng([seed, 0x62656E63])
    grid, _ = synth_instance(n, params, rng)
    free = np.flatnonzero((grid.h_cap > 0) | (grid.v_cap > 0))
    lo, hi = params.pin_count_range
    nets = []
    while len(nets) < net_count:
        k = int(rng.integers(lo, hi + 1))
        if len(free) < k:
            raise SynthesisError("too few free tiles for the requested pin count")
        picks = rng.choice(free, size=k, replace=False)
        pins = tuple((int(p // n), int(p % n)) for p in picks)
        nets.append(Net(f"net{len(nets)}", pins))
    return Benchmark(grid, nets, name=name)


def derive_seed(master: int, resolution: int) -> int:
    seq = np.random.SeedSequence([int(master), int(resolution)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def multi_resolution_suite(resolutions: Sequence[int], counts: Sequence[int],
                           params: SynthParams | None = None, seed: int = 0,
                           kind: DatasetKind | str = DatasetKind.ROUTED,
                           workers: int = 1) -> list[Dataset]:
    if len(resolutions) != len(counts):
        raise ValueError("resolutions and counts differ in length")
    if not resolutions:
        raise ValueError("empty resolution list")
    base = resolutions[0]
    for prev, cur in zip(resolutions, resolutions[1:]):
        if cur <= prev:
            raise ValueError("resolutions must be strictly increasing")
    for r in resolutions:
        ratio = r // base
        if r % base or ratio & (ratio - 1):
            raise ValueError(f"resolution {r} is not {base} times a power of two")
    return [build_dataset(r, c, params, derive_seed(seed, r), kind, workers)
            for r, c in zip(resolutions, counts)]


# ---------------------------------------------------------------------------
# serialization

_KIND_CODES = {DatasetKind.ROUTED: 0, DatasetKind.ROUTE_FREE: 1}


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(path) -> Path:
    return Path(str(path) + ".json")


def dataset_header(ds: Dataset) -> dict:
    return {
        "magic": MAGIC.decode(), "version": VERSION, "resolution": ds.resolution,
        "count": len(ds), "kind": ds.kind.value, "seed": ds.seed,
        "params": asdict(ds.params),
    }


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    p = ds.params
    header = _HEADER.pack(MAGIC, VERSION, ds.resolution, len(ds), _KIND_CODES[ds.kind],
                          ds.seed, p.pin_count_range[0], p.pin_count_range[1],
                          p.obstacle_density, p.cap_default, p.cap_max)
    payload = (header + ds.features.astype("<f4").tobytes()
               + ds.labels.astype(np.uint8).tobytes())
    _atomic_write(path, payload)
    _atomic_write(manifest_path(path),
                  (json.dumps(dataset_header(ds), indent=2) + "\n").encode())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise DatasetFormatError(f"expected magic {MAGIC!r}, found {raw[:4]!r}", 0)
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("truncated header", len(raw))
    (_, version, n, count, kind_code, seed, lo, hi, density,
     cap_default, cap_max) = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if kind_code not in kinds:
        raise DatasetFormatError(f"unknown dataset kind code {kind_code}", 16)
    off = _HEADER.size
    nf = count * n * n * 3
    nl = count * n * n
    need = off + 4 * nf + nl
    if len(raw) < need:
        raise DatasetFormatError(f"truncated payload: need {need} bytes, have {len(raw)}", len(raw))
    if len(raw) > need:
        raise DatasetFormatError("trailing bytes after label block", need)
    feats = np.frombuffer(raw, dtype="<f4", count=nf, offset=off)
    labels = np.frombuffer(raw, dtype=np.uint8, count=nl, offset=off + 4 * nf)
    try:
        params = SynthParams((lo, hi), density, cap_default, cap_max)
        return Dataset(n, kinds[kind_code],
                       feats.reshape(count, n, n, 3).astype(np.float32),
                       labels.reshape(count, n, n).copy(), seed, params)
    except ValueError as exc:
        raise DatasetFormatError(f"invalid header contents: {exc}", 0) from None
