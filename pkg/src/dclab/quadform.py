"""Normed-space descriptors, symmetric operators and quadratic forms on R^m."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
import scipy.linalg
import scipy.optimize

SYMMETRY_TOL = 1e-12

Evaluator = Callable[[np.ndarray], np.ndarray]


def dual_index(p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _fmt_p(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return f"{p:g}"


@dataclass(frozen=True)
class Lp:
    """The space l_p^dim."""

    dim: int
    p: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    def norm(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        if self.p == 1:
            return a.sum(axis=-1)
        if self.p == 2:
            return np.sqrt((x * x).sum(axis=-1))
        if math.isinf(self.p):
            return a.max(axis=-1)
        # scale by the max entry so large p does not overflow
        top = a.max(axis=-1, keepdims=True)
        safe = np.where(top > 0, top, 1.0)
        return top[..., 0] * ((a / safe) ** self.p).sum(axis=-1) ** (1.0 / self.p)

    def norm_grad(self, x):
        """A (sub)gradient of the norm at each row of x; zero at the origin."""
        x = np.asarray(x, dtype=float)
        if self.p == 1:
            return np.sign(x)
        if math.isinf(self.p):
            a = np.abs(x)
            hit = a == a.max(axis=-1, keepdims=True)
            first = hit & (np.cumsum(hit, axis=-1) == 1)
            return np.where(first & (a > 0), np.sign(x), 0.0)
        nrm = self.norm(x)[..., None]
        safe = np.where(nrm > 0, nrm, 1.0)
        g = np.sign(x) * (np.abs(x) / safe) ** (self.p - 1.0)
        return np.where(nrm > 0, g, 0.0)

    def smooth_norm(self, x, delta: float):
        """A smooth upper approximation of the norm and its gradient.

        Entries are replaced by sqrt(x^2 + delta^2) and, for p = inf, the max by
        a log-sum-exp at temperature delta; delta = 0 gives the norm back.
        """
        x = np.asarray(x, dtype=float)
        if delta <= 0:
            return self.norm(x), self.norm_grad(x)
        r = np.sqrt(x * x + delta * delta)
        if math.isinf(self.p):
            top = r.max(axis=-1, keepdims=True)
            w = np.exp((r - top) / delta)
            total = w.sum(axis=-1, keepdims=True)
            value = top[..., 0] + delta * np.log(total[..., 0])
            return value, (w / total) * x / r
        top = r.max(axis=-1, keepdims=True)
        rel = r / top
        value = top[..., 0] * (rel ** self.p).sum(axis=-1) ** (1.0 / self.p)
        return value, (r / value[..., None]) ** (self.p - 1.0) * x / r

    def dual(self) -> "Lp":
        return Lp(self.dim, dual_index(self.p))

    def __str__(self):
        return f"lp:{self.dim}:{_fmt_p(self.p)}"


@dataclass(frozen=True)
class DirectSum:
    """left (+) right with the l_1 (outer=1) or l_inf (outer=inf) combination."""

    left: "Space"
    right: "Space"
    outer: float = 1.0

    def __post_init__(self):
        if self.outer not in (1, math.inf):
            raise ValueError(f"outer must be 1 or inf, got {self.outer}")
        object.__setattr__(self, "outer", float(self.outer))

    @property
    def dim(self) -> int:
        return self.left.dim + self.right.dim

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        k = self.left.dim
        return x[..., :k], x[..., k:]

    def norm(self, x):
        a, b = self._split(x)
        na, nb = self.left.norm(a), self.right.norm(b)
        return na + nb if self.outer == 1 else np.maximum(na, nb)

    def norm_grad(self, x):
        a, b = self._split(x)
        ga, gb = self.left.norm_grad(a), self.right.norm_grad(b)
        if self.outer == 1:
            return np.concatenate([ga, gb], axis=-1)
        left_wins = (self.left.norm(a) >= self.right.norm(b))[..., None]
        return np.concatenate([np.where(left_wins, ga, 0.0), np.where(left_wins, 0.0, gb)], axis=-1)

    def smooth_norm(self, x, delta: float):
        if delta <= 0:
            return self.norm(x), self.norm_grad(x)
        a, b = self._split(x)
        (na, ga), (nb, gb) = self.left.smooth_norm(a, delta), self.right.smooth_norm(b, delta)
        if self.outer == 1:
            return na + nb, np.concatenate([ga, gb], axis=-1)
        top = np.maximum(na, nb)
        wa, wb = np.exp((na - top) / delta), np.exp((nb - top) / delta)
        total = wa + wb
        value = top + delta * np.log(total)
        return value, np.concatenate([(wa / total)[..., None] * ga, (wb / total)[..., None] * gb], axis=-1)

    def dual(self) -> "DirectSum":
        return DirectSum(self.left.dual(), self.right.dual(), dual_index(self.outer))

    def __str__(self):
        tag = "sum1" if self.outer == 1 else "suminf"
        return f"{tag}({self.left},{self.right})"


Space = Union[Lp, DirectSum]


def sq_norm_grad(space: Space, x):
    """Gradient of ||x||^2, i.e. 2 ||x|| times a norm subgradient."""
    return 2.0 * space.norm(x)[..., None] * space.norm_grad(x)


def parse_space(text: str) -> Space:
    """Parse ``lp:<m>:<p>``, ``sum1(<a>,<b>)`` or ``suminf(<a>,<b>)``."""
    text = text.strip()
    for tag, outer in (("sum1(", 1.0), ("suminf(", math.inf)):
        if text.startswith(tag) and text.endswith(")"):
            body = text[len(tag):-1]
            depth = 0
            for i, ch in enumerate(body):
                depth += ch == "("
                depth -= ch == ")"
                if ch == "," and depth == 0:
                    return DirectSum(parse_space(body[:i]), parse_space(body[i + 1:]), outer)
            raise ValueError(f"direct sum needs two components: {text!r}")
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "lp":
        raise ValueError(f"cannot parse space descriptor {text!r}")
    return Lp(int(parts[1]), float(parts[2]))


def is_l1_like(space: Space) -> bool:
    if isinstance(space, Lp):
        return space.p == 1
    return space.outer == 1 and is_l1_like(space.left) and is_l1_like(space.right)


def is_linf_like(space: Space) -> bool:
    if isinstance(space, Lp):
        return math.isinf(space.p)
    return space.outer != 1 and is_linf_like(space.left) and is_linf_like(space.right)


def euclidean_constants(space: Space) -> tuple[float, float]:
    """Constants (a, b) with ||x||_2 <= a ||x|| and ||x|| <= b ||x||_2."""
    if isinstance(space, Lp):
        inv_p = 0.0 if math.isinf(space.p) else 1.0 / space.p
        return space.dim ** max(0.0, 0.5 - inv_p), space.dim ** max(0.0, inv_p - 0.5)
    al, bl = euclidean_constants(space.left)
    ar, br = euclidean_constants(space.right)
    if space.outer == 1:
        return max(al, ar), math.hypot(bl, br)
    return math.hypot(al, ar), max(bl, br)


# ---------------------------------------------------------------------------
# operators and forms


@dataclass(frozen=True, eq=False)
class SymOperator:
    """A symmetric m x m matrix T, viewed as an operator X -> X*."""

    matrix: np.ndarray

    def __post_init__(self):
        t = np.array(self.matrix, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"operator must be square, got shape {t.shape}")
        if t.size and np.max(np.abs(t - t.T)) > SYMMETRY_TOL:
            raise ValueError("operator is not symmetric")
        t.setflags(write=False)
        object.__setattr__(self, "matrix", t)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"SymOperator(dim={self.dim})"


def symmetrize(b) -> SymOperator:
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {b.shape}")
    return SymOperator(0.5 * (b + b.T))


class QuadraticForm:
    """q(x) = <Tx, x> for a symmetric operator T. Calls broadcast over rows."""

    def __init__(self, op):
        if not isinstance(op, SymOperator):
            op = SymOperator(op)
        self.op = op

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def dim(self) -> int:
        return self.op.dim

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point of dimension {x.shape[-1]} for a form on R^{self.dim}")
        return x

    def __call__(self, x):
        x = self._check(x)
        return np.einsum("...i,ij,...j->...", x, self.matrix, x)

    def gradient(self, x):
        return 2.0 * self._check(x) @ self.matrix

    def bilinear(self, x, y):
        return np.einsum("...i,ij,...j->...", self._check(x), self.matrix, self._check(y))

    def __repr__(self):
        return f"QuadraticForm(dim={self.dim})"


def polarize(q: Evaluator, x, y):
    """The symmetric bilinear form recovered from q: (q(x+y) - q(x) - q(y)) / 2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 0.5 * (q(x + y) - q(x) - q(y))


def delta2(phi: Evaluator, x, u):
    """Second difference phi(x+u) + phi(x-u) - 2 phi(x)."""
    x, u = np.asarray(x, float), np.asarray(u, float)
    return phi(x + u) + phi(x - u) - 2.0 * phi(x)


def block_symmetric(t11, t12, t21, t22, tol: float = SYMMETRY_TOL) -> bool:
    """Whether the block operator [[T11, T12], [T21, T22]] is symmetric.

    Block T_ij maps X_j into X_i*, so T12 is (dim X1) x (dim X2).
    """
    t11, t12, t21, t22 = (np.atleast_2d(np.asarray(t, float)) for t in (t11, t12, t21, t22))
    a, b = t11.shape[0], t22.shape[0]
    if t11.shape != (a, a) or t22.shape != (b, b) or t12.shape != (a, b) or t21.shape != (b, a):
        raise ValueError(
            f"blocks are not conformable: {t11.shape}, {t12.shape}, {t21.shape}, {t22.shape}"
        )

    def close(u, v):
        return u.size == 0 or np.max(np.abs(u - v)) <= tol

    return close(t11, t11.T) and close(t22, t22.T) and close(t12.T, t21)


# ---------------------------------------------------------------------------
# named forms


def sylvester_hadamard(m: int) -> np.ndarray:
    if m < 1 or m & (m - 1):
        raise ValueError(f"Hadamard size must be a power of two, got {m}")
    return scipy.linalg.hadamard(m).astype(float)


def all_sign_rows(m: int) -> np.ndarray:
    """All sign vectors in R^m with first entry +1; x -> Jx embeds l_1^m in l_inf isometrically."""
    if not 1 <= m <= 12:
        raise ValueError(f"fullsign variant needs 1 <= m <= 12, got {m}")
    rows = np.ones((1 << (m - 1), m))
    if m > 1:
        idx = np.arange(1 << (m - 1))
        bits = (idx[:, None] >> np.arange(m - 2, -1, -1)) & 1
        rows[:, 1:] = 1 - 2 * bits
    return rows


def counterexample_form(m: int, variant: str = "hadamard") -> tuple[QuadraticForm, DirectSum]:
    """q(x, y) = <y, Jx> + <Jy, x> on l_1^m (+)_1 l_1^k, generated by [[0, J^T], [J, 0]]."""
    if variant == "hadamard":
        j = sylvester_hadamard(m)
        j = j / np.abs(j).max()
    elif variant == "fullsign":
        j = all_sign_rows(m)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    k = j.shape[0]
    t = np.block([[np.zeros((m, m)), j.T], [j, np.zeros((k, k))]])
    return QuadraticForm(t), DirectSum(Lp(m, 1), Lp(k, 1), 1)


def duality_form(space: Lp) -> tuple[QuadraticForm, DirectSum]:
    """Q(x, x*) = x*(x) on X (+)_1 X*, generated by 1/2 [[0, I], [I, 0]]."""
    if not isinstance(space, Lp):
        raise ValueError("duality_form needs an lp descriptor")
    m = space.dim
    eye = np.eye(m)
    t = 0.5 * np.block([[np.zeros((m, m)), eye], [eye, np.zeros((m, m))]])
    return QuadraticForm(t), DirectSum(space, space.dual(), 1)


# ---------------------------------------------------------------------------
# operator norms


class NormEstimate(NamedTuple):
    value: float
    exact: bool


def _exact_norm(m, src: Space, dst: Space):
    if is_l1_like(src):
        return float(np.max(dst.norm(m.T), initial=0.0))
    if is_linf_like(dst):
        return float(np.max(src.dual().norm(m), initial=0.0))
    if isinstance(src, Lp) and isinstance(dst, Lp) and src.p == 2 and dst.p == 2:
        return float(np.linalg.norm(m, 2)) if m.size else 0.0
    return None


def has_exact_norm(src: Space, dst: Space) -> bool:
    return _exact_norm(np.zeros((dst.dim, src.dim)), src, dst) is not None


def sampled_norm(m, src: Space, dst: Space, restarts: int = 16, seed: int = 0) -> float:
    """Lower bound for ||M: src -> dst|| by local ascent of ||Mx|| / ||x|| from many starts."""
    m = np.asarray(m, float)
    if not m.size or not np.any(m):
        return 0.0
    rng = np.random.default_rng(seed)

    def neg_log_ratio(x):
        y = m @ x
        ny, nx = dst.norm(y), src.norm(x)
        if ny <= 0 or nx <= 0:
            return 0.0, np.zeros_like(x)
        g = m.T @ dst.norm_grad(y) / ny - src.norm_grad(x) / nx
        return -math.log(ny / nx), -g

    starts = [np.linalg.svd(m)[2][0], *np.eye(m.shape[1])]
    starts += [rng.standard_normal(m.shape[1]) for _ in range(restarts)]
    best = 0.0
    for x0 in starts:
        res = scipy.optimize.minimize(neg_log_ratio, x0, jac=True, method="L-BFGS-B")
        for x in (x0, res.x):
            nx = src.norm(x)
            if nx > 0:
                best = max(best, float(dst.norm(m @ x) / nx))
    return best


def operator_norm(m, src: Space, dst: Space, method: str = "exact", **kw) -> NormEstimate:
    """Norm of M as a map src -> dst.

    Exact when src is l_1-like (max column norm), dst is l_inf-like (max dual row
    norm) or both are l_2. Otherwise, or with method="sampled", a certified lower
    bound from local search, flagged ``exact=False``.
    """
    m = np.atleast_2d(np.asarray(m, float))
    if m.shape != (dst.dim, src.dim):
        raise ValueError(f"matrix shape {m.shape} does not map R^{src.dim} -> R^{dst.dim}")
    if method not in ("exact", "sampled"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact":
        v = _exact_norm(m, src, dst)
        if v is not None:
            return NormEstimate(v, True)
        warnings.warn(f"no exact formula for {src} -> {dst}; using a sampled lower bound", stacklevel=2)
    return NormEstimate(sampled_norm(m, src, dst, **kw), False)


def norm_upper_bound(m, src: Space, dst: Space) -> float:
    """An upper bound from the spectral norm and Euclidean comparison constants."""
    m = np.atleast_2d(np.asarray(m, float))
    exact = _exact_norm(m, src, dst)
    if exact is not None:
        return exact
    a, _ = euclidean_constants(src)
    _, b = euclidean_constants(dst)
    return a * b * float(np.linalg.norm(m, 2))
