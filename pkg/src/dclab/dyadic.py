"""The dyadic cube {-1, 1}^n with uniform measure and its coordinate filtration.

Tables are indexed with the first coordinate as the most significant bit and
-1 ordered before +1, so ``values[i]`` is the value at the path whose signs
are the binary digits of ``i`` (0 -> -1, 1 -> +1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DEPTH = 20


def _depth_of(length: int) -> int:
    n = int(length).bit_length() - 1
    if length < 1 or (1 << n) != length:
        raise ValueError(f"table length {length} is not a power of two")
    if n > MAX_DEPTH:
        raise ValueError(f"depth {n} exceeds the cap {MAX_DEPTH}")
    return n


@dataclass(frozen=True, eq=False)
class DyadicTable:
    """A function on {-1, 1}^n with values in R^m, stored as a (2**n, m) array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"expected a (2**n, m) array, got shape {v.shape}")
        _depth_of(v.shape[0])
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def depth(self) -> int:
        return _depth_of(self.values.shape[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, path):
        return self.values[path_index(path)]

    def __repr__(self):
        return f"DyadicTable(depth={self.depth}, dim={self.dim})"

    @classmethod
    def constant(cls, c, depth: int) -> "DyadicTable":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.tile(c, (1 << depth, 1)))

    @classmethod
    def coordinate(cls, k: int, depth: int) -> "DyadicTable":
        """The Rademacher function eta_k (1-based) as a scalar table."""
        if not 1 <= k <= depth:
            raise ValueError(f"coordinate {k} outside 1..{depth}")
        return cls(paths(depth)[:, k - 1].astype(float))


def paths(n: int) -> np.ndarray:
    """All 2**n sign paths in table order, as an int8 array of shape (2**n, n)."""
    if not 0 <= n <= MAX_DEPTH:
        raise ValueError(f"depth {n} outside 0..{MAX_DEPTH}")
    idx = np.arange(1 << n)
    shifts = np.arange(n - 1, -1, -1)
    bits = (idx[:, None] >> shifts) & 1
    return (2 * bits - 1).astype(np.int8)


def path_index(path: Sequence[int]) -> int:
    i = 0
    for s in path:
        if s not in (-1, 1):
            raise ValueError(f"path entries must be -1 or +1, got {s}")
        i = 2 * i + (s > 0)
    return i


def halve(values: np.ndarray, steps: int = 1) -> np.ndarray:
    """Average adjacent index pairs ``steps`` times (pairwise tree reduction).

    Works on any array whose leading axis has length divisible by 2**steps.
    """
    v = values
    for _ in range(steps):
        v = 0.5 * (v[0::2] + v[1::2])
    return v


def expectation(f: DyadicTable) -> np.ndarray:
    return halve(f.values, f.depth)[0]


def conditional_expectation(f: DyadicTable, k: int) -> DyadicTable:
    """E(f | Sigma_k): average out the last n - k coordinates."""
    n = f.depth
    if not 0 <= k <= n:
        raise ValueError(f"filtration level {k} outside 0..{n}")
    if k == n:
        return f
    coarse = halve(f.values, n - k)
    return DyadicTable(np.repeat(coarse, 1 << (n - k), axis=0))


def is_measurable(f: DyadicTable, k: int, tol: float = 0.0) -> bool:
    """True iff f depends only on the first k coordinates (checked by enumeration)."""
    n = f.depth
    if not 0 <= k <= n:
        raise ValueError(f"filtration level {k} outside 0..{n}")
    blocks = f.values.reshape(1 << k, 1 << (n - k), f.dim)
    return bool(np.all(np.abs(blocks - blocks[:, :1]) <= tol))


def section(f: DyadicTable, prefix: Sequence[int]) -> DyadicTable:
    """The table xi -> f(prefix, xi) on {-1, 1}^(n - len(prefix))."""
    n, k = f.depth, len(prefix)
    if k >= n:
        raise ValueError(f"prefix of length {k} is not shorter than depth {n}")
    start = path_index(prefix) << (n - k)
    return DyadicTable(f.values[start:start + (1 << (n - k))])


def tail_weighted_sum(g: DyadicTable, p: float) -> tuple[float, float]:
    """Both sides of sum_j 2^(jp) P(g > 2^j) <= 2^p / (2^p - 1) E g^p."""
    if p <= 0:
        raise ValueError("p must be positive")
    if g.dim != 1:
        raise ValueError("g must be scalar valued")
    v = g.values[:, 0]
    if np.any(v < 0):
        raise ValueError("g must be nonnegative")
    lhs = 0.0
    j = 1
    top = v.max()
    while 2.0 ** j < top:
        lhs += 2.0 ** (j * p) * np.mean(v > 2.0 ** j)
        j += 1
    rhs = 2.0 ** p / (2.0 ** p - 1.0) * float(np.mean(v ** p))
    return float(lhs), rhs
