"""Cubic partitions of R^d anchored so that (0, h]^d is the cell (1, ..., 1)."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np

from .models import InvalidInputError, ResourceError, validate_positive

CellKey = Tuple[int, ...]

DEFAULT_CELL_CAP = 10**7
KEY_LIMIT = 2.0**62
ULP_GUARD = 4


@dataclass(frozen=True)
class PartitionSpec:
    """Side length h and the bounding box of the support of X."""

    h: float
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        validate_positive("h", self.h)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise InvalidInputError("Invalid bbox: lower and upper must be non-empty and of equal length")
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise InvalidInputError(f"Invalid bbox: need finite lower < upper, got {lo} >= {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def with_h(self, h: float) -> "PartitionSpec":
        return PartitionSpec(h, self.lower, self.upper)


def _ceil_guarded(q: np.ndarray) -> np.ndarray:
    # a quotient within a few ulps of an integer is that integer (upper face)
    nearest = np.rint(q)
    on_face = np.abs(q - nearest) <= ULP_GUARD * np.spacing(np.abs(q))
    return np.where(on_face, nearest, np.ceil(q))


def cell_keys(points: np.ndarray, spec: PartitionSpec) -> np.ndarray:
    """Map an (N, d) array of points to an (N, d) int64 array of cell keys.

    Raises:
        InvalidInputError: on non-finite coordinates, a dimension mismatch, or
            a key beyond the signed 64-bit range used for keys.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, spec.dim)
    if pts.shape[1] != spec.dim:
        raise InvalidInputError(f"Invalid point dimension: {pts.shape[1]}, partition has {spec.dim}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("Invalid point: non-finite coordinate")
    q = pts / spec.h
    if np.any(np.abs(q) > KEY_LIMIT):
        raise InvalidInputError(f"Invalid point: |x/h| exceeds 2^62 for h={spec.h}")
    return _ceil_guarded(q).astype(np.int64)


def cell_key(x: Sequence[float], spec: PartitionSpec) -> CellKey:
    """Return the key k with (k_i - 1) h < x_i <= k_i h for every coordinate."""
    row = cell_keys(np.asarray(x, dtype=float).reshape(1, -1), spec)[0]
    return tuple(int(v) for v in row)


def cell_bounds(key: Sequence[int], spec: PartitionSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Lower (open) and upper (closed) faces of a cell."""
    k = np.asarray(key, dtype=float)
    return (k - 1.0) * spec.h, k * spec.h


def contains(key: Sequence[int], x: Sequence[float], spec: PartitionSpec) -> bool:
    """Interval membership test, independent of the ceil computation."""
    lo, hi = cell_bounds(key, spec)
    x = np.asarray(x, dtype=float)
    return bool(np.all((lo < x) & (x <= hi)))


class CellUniverse:
    """The finite set of cells meeting a bounding box, in lexicographic order.

    Cells are indexed in mixed radix over the per-axis key ranges, so the
    index of a key array is computed without hashing.
    """

    def __init__(self, spec: PartitionSpec, cap: int = DEFAULT_CELL_CAP):
        self.spec = spec
        self.key_lo = cell_keys(np.asarray(spec.lower).reshape(1, -1), spec)[0]
        self.key_hi = cell_keys(np.asarray(spec.upper).reshape(1, -1), spec)[0]
        self.shape = tuple(int(v) for v in (self.key_hi - self.key_lo + 1))
        count = math.prod(self.shape)
        if count > cap:
            raise ResourceError(f"Cell universe has {count} cells, cap is {cap}")
        self.size = count
        # row-major strides: last axis varies fastest
        strides = np.ones(spec.dim, dtype=np.int64)
        for i in range(spec.dim - 2, -1, -1):
            strides[i] = strides[i + 1] * self.shape[i + 1]
        self._strides = strides

    def __len__(self) -> int:
        return self.size

    @cached_property
    def keys(self) -> List[CellKey]:
        ranges = [range(int(lo), int(hi) + 1) for lo, hi in zip(self.key_lo, self.key_hi)]
        return [tuple(k) for k in itertools.product(*ranges)]

    @cached_property
    def key_array(self) -> np.ndarray:
        return np.array(self.keys, dtype=np.int64).reshape(self.size, self.spec.dim)

    @cached_property
    def fingerprint(self) -> str:
        payload = repr((self.spec.h, self.spec.lower, self.spec.upper, self.shape)).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def index_of(self, keys: np.ndarray) -> np.ndarray:
        """Flat index of each key row, or -1 for keys outside the universe."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, self.spec.dim)
        offset = keys - self.key_lo
        inside = np.all((offset >= 0) & (keys <= self.key_hi), axis=1)
        idx = offset @ self._strides
        return np.where(inside, idx, -1)

    def index_of_points(self, points: np.ndarray) -> np.ndarray:
        return self.index_of(cell_keys(points, self.spec))


def enumerate_cells(spec: PartitionSpec, cap: int = DEFAULT_CELL_CAP) -> List[CellKey]:
    """Every key whose cell meets [lower, upper], without duplicates.

    Raises:
        ResourceError: if the cell count exceeds ``cap``.
    """
    return CellUniverse(spec, cap).keys
