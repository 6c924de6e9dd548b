"""Walsh-Paley martingales on the dyadic cube, their transforms and stopping times."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dyadic import DyadicTable, halve, is_measurable, path_index
from .quadform import Evaluator, Space

LEVEL_TOL = 1e-12


class WalshPaleyMartingale:
    """Levels f_0, ..., f_n of a martingale, each stored as a full (2**n, m) table.

    ``data[k]`` is f_k; ``diffs[k - 1]`` is df_k = f_k - f_{k-1}.
    """

    def __init__(self, levels, check: bool = True):
        data = np.array(levels, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"levels must have shape (n+1, 2**n, m), got {data.shape}")
        n = data.shape[0] - 1
        if data.shape[1] != 1 << n:
            raise ValueError(f"{n + 1} levels need tables of length {1 << n}, got {data.shape[1]}")
        data.setflags(write=False)
        self.data = data
        if check:
            self.validate()

    @classmethod
    def from_terminal(cls, f_n) -> "WalshPaleyMartingale":
        if not isinstance(f_n, DyadicTable):
            f_n = DyadicTable(f_n)
        n = f_n.depth
        levels = np.empty((n + 1, 1 << n, f_n.dim))
        coarse = f_n.values
        levels[n] = coarse
        for k in range(n - 1, -1, -1):
            coarse = halve(coarse)
            levels[k] = np.repeat(coarse, 1 << (n - k), axis=0)
        return cls(levels, check=False)

    @property
    def depth(self) -> int:
        return self.data.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def terminal(self) -> np.ndarray:
        return self.data[-1]

    @property
    def start(self) -> np.ndarray:
        return self.data[0, 0]

    @property
    def diffs(self) -> np.ndarray:
        return np.diff(self.data, axis=0)

    def level(self, k: int) -> DyadicTable:
        return DyadicTable(self.data[k])

    def validate(self, tol: float = LEVEL_TOL):
        """Raise ValueError unless every level is Sigma_k-measurable and averages the next."""
        n = self.depth
        scale = 1.0 + float(np.max(np.abs(self.data), initial=0.0))
        for k in range(n + 1):
            if not is_measurable(self.level(k), k, tol * scale):
                raise ValueError(f"level {k} is not Sigma_{k}-measurable")
        for k in range(n):
            coarse_next = halve(self.data[k + 1], n - k)
            coarse = halve(self.data[k], n - k)
            if np.max(np.abs(coarse_next - coarse), initial=0.0) > tol * scale:
                raise ValueError(f"level {k} is not the average of level {k + 1}")

    def __repr__(self):
        return f"WalshPaleyMartingale(depth={self.depth}, dim={self.dim})"


def from_terminal(f_n) -> WalshPaleyMartingale:
    return WalshPaleyMartingale.from_terminal(f_n)


def differences(mart: WalshPaleyMartingale) -> list[DyadicTable]:
    return [DyadicTable(d) for d in mart.diffs]


def pad(mart: WalshPaleyMartingale, extra: int) -> WalshPaleyMartingale:
    """Append ``extra`` copies of the terminal level on a cube of depth n + extra."""
    n, rep = mart.depth, 1 << extra
    levels = [np.repeat(mart.data[k], rep, axis=0) for k in range(n + 1)]
    levels += [levels[-1]] * extra
    return WalshPaleyMartingale(levels, check=False)


def apply(mart: WalshPaleyMartingale, a) -> WalshPaleyMartingale:
    """The martingale (A f_0, ..., A f_n) for a linear map A given as a matrix."""
    a = np.atleast_2d(np.asarray(a, float))
    if a.shape[1] != mart.dim:
        raise ValueError(f"matrix with {a.shape[1]} columns applied to dimension {mart.dim}")
    return WalshPaleyMartingale(mart.data @ a.T, check=False)


def restrict(mart: WalshPaleyMartingale, prefix: Sequence[int]) -> WalshPaleyMartingale:
    """The martingale g_k = f_{m+k}(prefix, .) on the remaining n - m coordinates."""
    n, m = mart.depth, len(prefix)
    if m >= n:
        raise ValueError(f"prefix of length {m} is not shorter than depth {n}")
    start = path_index(prefix) << (n - m)
    block = mart.data[m:, start:start + (1 << (n - m))]
    return WalshPaleyMartingale(block, check=False)


# ---------------------------------------------------------------------------
# predictable signs and transforms


class PredictableSigns:
    """Signs eps_1..eps_n with eps_k depending only on the first k - 1 coordinates."""

    def __init__(self, eps, check: bool = True):
        eps = np.array(eps, dtype=float)
        if eps.ndim != 2:
            raise ValueError(f"signs must have shape (n, 2**n), got {eps.shape}")
        eps.setflags(write=False)
        self.eps = eps
        if check:
            if not np.all(np.abs(eps) == 1):
                raise ValueError("signs must be exactly -1 or +1")
            for k in range(1, self.depth + 1):
                if not is_measurable(DyadicTable(eps[k - 1]), k - 1):
                    raise ValueError(f"eps_{k} is not Sigma_{k - 1}-measurable")

    @property
    def depth(self) -> int:
        return self.eps.shape[0]

    @classmethod
    def constant(cls, signs: Sequence[int]) -> "PredictableSigns":
        n = len(signs)
        return cls(np.repeat(np.asarray(signs, float)[:, None], 1 << n, axis=1))

    @classmethod
    def from_nodes(cls, nodes: Sequence[Sequence[int]]) -> "PredictableSigns":
        """Build from node values: ``nodes[k-1]`` has 2**(k-1) entries, one per path prefix."""
        n = len(nodes)
        eps = np.empty((n, 1 << n))
        for k, v in enumerate(nodes, start=1):
            v = np.asarray(v, float)
            if v.shape != (1 << (k - 1),):
                raise ValueError(f"eps_{k} needs {1 << (k - 1)} node values")
            eps[k - 1] = np.repeat(v, 1 << (n - k + 1))
        return cls(eps)

    def nodes(self) -> list[np.ndarray]:
        n = self.depth
        return [self.eps[k - 1, :: 1 << (n - k + 1)].copy() for k in range(1, n + 1)]


def transform(t, mart: WalshPaleyMartingale, signs: PredictableSigns | None = None) -> DyadicTable:
    """The martingale transform sum_k eps_k T df_k."""
    t = np.atleast_2d(np.asarray(getattr(t, "matrix", t), float))
    if t.shape[1] != mart.dim:
        raise ValueError(f"operator with {t.shape[1]} columns applied to dimension {mart.dim}")
    d = mart.diffs
    if signs is not None:
        if signs.depth != mart.depth:
            raise ValueError(f"signs of depth {signs.depth} for a martingale of depth {mart.depth}")
        d = d * signs.eps[:, :, None]
    return DyadicTable(d.sum(axis=0) @ t.T)


def doob_ratio(mart: WalshPaleyMartingale, p: float, space: Space) -> float:
    """(E max_k ||f_k||^p)^(1/p) / (E ||f_n||^p)^(1/p); 1 when f_n vanishes a.e."""
    if p <= 1:
        raise ValueError("Doob ratio needs p > 1")
    norms = space.norm(mart.data)
    top = np.mean(norms.max(axis=0) ** p)
    bottom = np.mean(norms[-1] ** p)
    if bottom == 0:
        return 1.0
    return float((top / bottom) ** (1.0 / p))


# ---------------------------------------------------------------------------
# stopping times


@dataclass(frozen=True, eq=False)
class StoppingProfile:
    """Stopping times m_r for thresholds base**r; ``times[r]`` is the table of m_r."""

    base: float
    times: np.ndarray

    @property
    def depth(self) -> int:
        return int(np.log2(self.times.shape[1]))

    def event(self, r: int, m: int) -> np.ndarray:
        return self.times[r] == m

    def event_measurable(self, r: int, m: int) -> bool:
        return is_measurable(DyadicTable(self.event(r, m).astype(float)), m)


def branch_norms(mart: WalshPaleyMartingale, space: Space) -> np.ndarray:
    """max ||f_k +- df_{k+1}|| for k = 0..n-1, shape (n, 2**n)."""
    f, d = mart.data[:-1], mart.diffs
    return np.maximum(space.norm(f + d), space.norm(f - d))


def stopping_profile(mart: WalshPaleyMartingale, space: Space, base: float = 2.0) -> StoppingProfile:
    """m_r(eta) = first k with max ||f_k +- df_{k+1}|| > base**r, or n if there is none.

    The comparison is strict, so values sitting exactly on a threshold never stop.
    """
    if base <= 1:
        raise ValueError("base must exceed 1")
    n = mart.depth
    s = branch_norms(mart, space)
    top = float(s.max(initial=0.0))
    times = [np.zeros(1 << n, dtype=int)]
    r = 1
    while True:
        over = s > base ** r
        hit = over.any(axis=0)
        times.append(np.where(hit, np.argmax(over, axis=0), n))
        if base ** r >= top:
            break
        r += 1
    return StoppingProfile(base, np.array(times))


def second_difference_sum(phi: Evaluator, mart: WalshPaleyMartingale) -> tuple[float, float]:
    """(E sum_k D2 phi(f_{k-1}, df_k), E sum_k |D2 phi(f_{k-1}, df_k)|)."""
    f, d = mart.data[:-1], mart.diffs
    n, rows, m = d.shape
    if n == 0:
        return 0.0, 0.0

    def ev(x):
        return np.asarray(phi(x.reshape(-1, m)), float).reshape(n, rows)

    dd = ev(f + d) + ev(f - d) - 2.0 * ev(f)
    return float(dd.sum(axis=0).mean()), float(np.abs(dd).sum(axis=0).mean())
