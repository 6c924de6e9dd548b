"""Lower bounds for delta-convexity and UMD constants of quadratic forms.

All suprema here run over Walsh-Paley martingales of a fixed depth and are
reported as certified lower bounds: each estimate carries the witness
martingale (and signs) on which its value was evaluated.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .martingale import PredictableSigns, WalshPaleyMartingale, transform
from .quadform import Evaluator, QuadraticForm, Space, delta2

MAX_FIXED_DEPTH = 12


# ---------------------------------------------------------------------------
# helpers


def _energy(space: Space, f: np.ndarray) -> float:
    return float(np.mean(space.norm(f) ** 2))


# ---------------------------------------------------------------------------
# results


@dataclass
class ConstantEstimate:
    value: float
    witness: WalshPaleyMartingale
    kind: str
    depth: int
    dim: int
    restarts: int
    seed: int
    signs: PredictableSigns | None = None
    trace: list | None = None

    def as_record(self) -> dict:
        return {"kind": self.kind, "value": self.value, "n": self.depth, "m": self.dim,
                "seed": self.seed, "restarts": self.restarts}


@dataclass
class DcSumReport:
    absolute: float
    signed: float
    terminal_energy: float
    ratio: float
    telescoped: float

    @property
    def lemma_defect(self) -> float:
        return abs(self.signed - self.telescoped)


@dataclass
class SearchConfig:
    """Search effort. ``steps`` bounds L-BFGS iterations per stage; the stages are
    the smoothing levels in ``smoothing`` (relative to the entry scale) followed
    by one exact stage."""

    restarts: int = 8
    seed: int = 0
    steps: int = 400
    structured_steps: int = 200
    smoothing: tuple = (0.03, 0.01, 0.003, 0.001, 0.0003)
    workers: int = 1
    keep_trace: bool = False
    init_scale: float = 1.0
    candidates: Iterable | None = None


# ---------------------------------------------------------------------------
# dc sums


def dc_sum(q: QuadraticForm, space: Space, mart: WalshPaleyMartingale) -> DcSumReport:
    """E sum_k |D2 q(f_{k-1}, df_k)| via D2 q(x, u) = 2 q(u), with the signed sum
    checked against 2 E q(f_n) - 2 q(f_0)."""
    if q.dim != mart.dim or space.dim != mart.dim:
        raise ValueError("form, space and martingale dimensions differ")
    qd = 2.0 * q(mart.diffs)
    absolute = float(np.abs(qd).sum(axis=0).mean()) if mart.depth else 0.0
    signed = float(qd.sum(axis=0).mean()) if mart.depth else 0.0
    telescoped = 2.0 * float(np.mean(q(mart.terminal))) - 2.0 * float(q(mart.start))
    energy = _energy(space, mart.terminal)
    ratio = absolute / energy if energy > 0 else 0.0
    return DcSumReport(absolute, signed, energy, ratio, telescoped)


def dc_ratio(q: QuadraticForm, space: Space, mart: WalshPaleyMartingale) -> float:
    return dc_sum(q, space, mart).ratio


def umd_ratio(t, space_x: Space, space_y: Space, mart: WalshPaleyMartingale,
              signs: PredictableSigns | None = None) -> float:
    """E ||sum_k eps_k T df_k||_Y^2 / E ||f_n||_X^2 (0 for a vanishing martingale)."""
    energy = _energy(space_x, mart.terminal)
    if energy == 0:
        return 0.0
    g = transform(t, mart, signs).values
    return _energy(space_y, g) / energy


# ---------------------------------------------------------------------------
# Haar coordinates
#
# A depth-n martingale is stored as a (2**n, m) coefficient array z in heap
# order: z[0] = f_0, and rows 2**(k-1) .. 2**k - 1 hold the nodes of level k,
# one per prefix (eta_1..eta_{k-1}), with df_k = eta_k * 2**((k-1)/2) * z[node].
# The scaling makes E ||f_n||_2^2 = ||z||_F^2 and
# E sum_k |q(df_k)| = sum over nodes of |q(z[node])|.


def _level_rows(k: int) -> slice:
    return slice(1 << (k - 1), 1 << k)


def haar_synthesis(z: np.ndarray) -> np.ndarray:
    """Terminal table f_n of the martingale with Haar coefficients z."""
    z = np.asarray(z, float)
    n = z.shape[0].bit_length() - 1
    v = z[:1]
    for k in range(1, n + 1):
        d = z[_level_rows(k)] * 2.0 ** ((k - 1) / 2)
        v = np.stack([v - d, v + d], axis=1).reshape(1 << k, z.shape[1])
    return v


def haar_adjoint(g: np.ndarray) -> np.ndarray:
    """Transpose of haar_synthesis; haar_adjoint(f) / 2**n recovers the coefficients of f."""
    g = np.asarray(g, float)
    n = g.shape[0].bit_length() - 1
    out = np.empty_like(g)
    v = g
    for k in range(n, 0, -1):
        a, b = v[0::2], v[1::2]
        out[_level_rows(k)] = (b - a) * 2.0 ** ((k - 1) / 2)
        v = a + b
    out[:1] = v
    return out


def haar_analysis(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, float)
    return haar_adjoint(f) / f.shape[0]


def _node_signs(eps: np.ndarray) -> np.ndarray:
    """Per-node signs in heap order from an (n, 2**n) sign table (entry 0 unused)."""
    n, rows = eps.shape
    out = np.ones(rows)
    for k in range(1, n + 1):
        out[_level_rows(k)] = eps[k - 1, :: rows >> (k - 1)]
    return out


# ---------------------------------------------------------------------------
# search machinery


class _Trace:
    def __init__(self, keep):
        self.values = [] if keep else None

    def add(self, v):
        if self.values is not None:
            self.values.append(float(v))


def _maximize(objective, z0, maxiter, trace):
    """L-BFGS ascent of a 0-homogeneous objective; returns the best point evaluated.

    ``objective(z)`` returns (value, gradient, energy). The objective is only
    piecewise smooth, so the best evaluated point is kept rather than the last.
    """
    val, _, energy = objective(z0)
    trace.add(val)
    if energy <= 0 or maxiter <= 0:
        return z0, val
    z0 = z0 / math.sqrt(energy)
    shape = z0.shape
    best = [-np.inf, z0]

    def fun(x):
        z = x.reshape(shape)
        v, g, _ = objective(z)
        trace.add(v)
        if v > best[0]:
            best[0], best[1] = v, z.copy()
        return -v, -g.ravel()

    minimize(fun, z0.ravel(), jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
    return best[1], best[0]


def _run_restarts(fn: Callable[[int], tuple], restarts: int, workers: int) -> list:
    if workers > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(restarts)))
    return [fn(i) for i in range(restarts)]


def _pick_best(results):
    # ties go to the lowest restart index, so worker count never changes the answer
    best = 0
    for i, r in enumerate(results):
        if r[0] > results[best][0]:
            best = i
    return results[best]


def _random_table(rng, n, m, scale):
    kind = rng.integers(3)
    if kind == 0:
        f = rng.standard_normal((1 << n, m))
    elif kind == 1:
        f = rng.standard_normal((1 << n, m)) * (rng.random((1 << n, m)) < 2.0 / m)
    else:
        f = rng.standard_cauchy((1 << n, m))
    return scale * f


def _rademacher_lift(n, m):
    """Maps x (n, m) to the coefficients of f_k = sum_{j<=k} eta_j x_j, and back for gradients."""
    scales = [2.0 ** (-(k - 1) / 2) for k in range(1, n + 1)]

    def lift(x):
        z = np.zeros((1 << n, m))
        for k in range(1, n + 1):
            z[_level_rows(k)] = scales[k - 1] * x[k - 1]
        return z

    def pull(g):
        return np.array([scales[k - 1] * g[_level_rows(k)].sum(axis=0) for k in range(1, n + 1)])

    return lift, pull


def _continuation(make, z, cfg, dim, trace):
    """Ascend through the smoothing schedule, then once on the exact objective."""
    for c in cfg.smoothing:
        nz = float(np.linalg.norm(z))
        if nz == 0:
            break
        z, _ = _maximize(make(c / math.sqrt(dim)), z / nz, cfg.steps, _Trace(False))
    return _maximize(make(0.0), z, cfg.steps, trace)


def _search(make, n, m, cfg):
    """Restart loop shared by the dc and UMD searches; returns (terminal, trace).

    ``make(delta)`` builds the objective with norms smoothed at scale delta.
    """
    lift, pull = _rademacher_lift(n, m)

    def lifted(delta):
        objective = make(delta)

        def wrapped(x):
            val, g, en = objective(lift(x))
            return val, pull(g), en

        return wrapped

    def one(i):
        rng = np.random.default_rng(cfg.seed + i)
        trace = _Trace(cfg.keep_trace)
        if i % 2 == 0:
            z0 = haar_analysis(_random_table(rng, n, m, cfg.init_scale))
        else:
            x0 = cfg.init_scale * rng.standard_normal((n, m))
            x, _ = _continuation(lifted, x0, replace(cfg, steps=cfg.structured_steps), m, trace)
            z0 = lift(x)
        z, val = _continuation(make, z0, cfg, m, trace)
        return val, haar_synthesis(z), trace.values

    results = _run_restarts(one, max(cfg.restarts, 1), cfg.workers)
    _, f, _ = _pick_best(results)
    trace = [v for r in results for v in r[2]] if cfg.keep_trace else None
    return f, trace


def _best_candidate(cfg, n, m, kind, score):
    best_val, best_f, best_signs = -1.0, None, None
    trace = [] if cfg.keep_trace else None
    for f in cfg.candidates:
        f = np.asarray(f, float).reshape(1 << n, m)
        val, signs = score(f)
        if trace is not None:
            trace.append(val)
        if val > best_val:
            best_val, best_f, best_signs = val, f, signs
    if best_f is None:
        raise ValueError("empty candidate family")
    witness = WalshPaleyMartingale.from_terminal(best_f)
    return ConstantEstimate(float(best_val), witness, kind, n, m, 0, cfg.seed, best_signs, trace)


# ---------------------------------------------------------------------------
# delta-convexity constant


def _dc_objective(q, space, n, delta=0.0):
    t = q.matrix
    rows = 1 << n

    def objective(z):
        f = haar_synthesis(z)
        nf, gf = space.smooth_norm(f, delta)
        den = float(np.mean(nf ** 2))
        tw = z[1:] @ t
        qd = np.einsum("ni,ni->n", z[1:], tw)
        if den <= 0:
            return 0.0, np.zeros_like(z), den
        a = np.sqrt(qd * qd + delta ** 4) if delta > 0 else np.abs(qd)
        ratio = 2.0 * float(a.sum()) / den
        g = -ratio * haar_adjoint(2.0 * nf[:, None] * gf) / rows
        slope = qd / a if delta > 0 else np.sign(qd)
        g[1:] += 4.0 * slope[:, None] * tw
        return ratio, g / den, den

    return objective


def dc_lower_bound(q: QuadraticForm, space: Space, n: int, cfg: SearchConfig | None = None) -> ConstantEstimate:
    """Largest E sum |D2 q(f_{k-1}, df_k)| / E ||f_n||^2 found over depth-n martingales.

    Restart i uses seed + i. Even restarts run L-BFGS ascent over the whole
    martingale from a random terminal table; odd restarts first optimize the
    Rademacher-increment family f_k = sum_{j<=k} eta_j x_j and then refine the
    result over the whole martingale. With ``cfg.candidates`` the listed
    terminal tables are scored exactly instead.
    """
    cfg = cfg or SearchConfig()
    if n < 1:
        raise ValueError("depth must be >= 1")
    m = q.dim
    if space.dim != m:
        raise ValueError(f"space of dimension {space.dim} for a form on R^{m}")

    if cfg.candidates is not None:
        return _best_candidate(cfg, n, m, "dc",
                               lambda f: (dc_ratio(q, space, WalshPaleyMartingale.from_terminal(f)), None))

    f, trace = _search(lambda d: _dc_objective(q, space, n, d), n, m, cfg)
    witness = WalshPaleyMartingale.from_terminal(f)
    return ConstantEstimate(dc_ratio(q, space, witness), witness, "dc", n, m, cfg.restarts, cfg.seed,
                            trace=trace)


# ---------------------------------------------------------------------------
# UMD constant


def _sign_vectors(n):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def best_fixed_signs(h: np.ndarray, space_y: Space, chunk: int = 1 << 22) -> tuple[float, np.ndarray]:
    """max over eps in {-1,1}^n of E ||sum_k eps_k h_k||_Y^2, by enumeration.

    ``h`` is the stack (T df_1, ..., T df_n) of shape (n, 2**n, p). Ties go to
    the first sign vector in enumeration order.
    """
    n = h.shape[0]
    if n > MAX_FIXED_DEPTH:
        raise ValueError(f"fixed-sign enumeration is limited to depth {MAX_FIXED_DEPTH}")
    # eps and -eps give the same value; fix eps_1 = +1
    eps = _sign_vectors(n - 1) if n > 1 else np.zeros((1, 0))
    eps = np.hstack([np.ones((len(eps), 1)), eps])
    flat = h.reshape(n, -1)
    per = max(1, chunk // max(flat.shape[1], 1))
    best_val, best_eps = -1.0, eps[0]
    for s in range(0, len(eps), per):
        block = eps[s:s + per]
        g = (block @ flat).reshape(len(block), h.shape[1], h.shape[2])
        vals = np.mean(space_y.norm(g) ** 2, axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_eps = float(vals[i]), block[i]
    return best_val, best_eps


def improve_predictable(h: np.ndarray, space_y: Space, eps: np.ndarray, max_sweeps: int = 50) -> np.ndarray:
    """Per-node sign flips that increase E ||sum_k eps_k h_k||_Y^2, level by level.

    ``eps`` has shape (n, 2**n) and stays predictable: a flip of eps_k acts on a
    whole cylinder {first k-1 coordinates fixed}. Flips within one level touch
    disjoint cylinders, so all improving flips of a level are applied together.
    """
    n, rows, p = h.shape
    eps = eps.copy()
    g = np.einsum("kn,knp->np", eps, h)
    for _ in range(max_sweeps):
        changed = False
        for k in range(1, n + 1):
            blocks = 1 << (k - 1)
            hk = (eps[k - 1][:, None] * h[k - 1]).reshape(blocks, -1, p)
            gk = g.reshape(blocks, -1, p)
            before = (space_y.norm(gk) ** 2).sum(axis=1)
            after = (space_y.norm(gk - 2.0 * hk) ** 2).sum(axis=1)
            flip = after > before * (1 + 1e-12) + 1e-300
            if flip.any():
                mask = np.repeat(flip, rows // blocks)
                g = g - 2.0 * np.where(mask[:, None], eps[k - 1][:, None] * h[k - 1], 0.0)
                eps[k - 1] = np.where(mask, -eps[k - 1], eps[k - 1])
                changed = True
        if not changed:
            break
    return eps


def _level_tables(hz: np.ndarray, n: int) -> np.ndarray:
    """The stack (T df_1, ..., T df_n) from transformed node coefficients hz."""
    out = np.empty((n, 1 << n, hz.shape[1]))
    for k in range(1, n + 1):
        zk = np.zeros_like(hz)
        zk[_level_rows(k)] = hz[_level_rows(k)]
        out[k - 1] = haar_synthesis(zk)
    return out


def choose_signs(t, space_y: Space, mart: WalshPaleyMartingale, mode: str) -> PredictableSigns:
    """Best constant signs for T f, improved node by node in predictable mode."""
    t = np.atleast_2d(np.asarray(getattr(t, "matrix", t), float))
    h = mart.diffs @ t.T
    _, e = best_fixed_signs(h, space_y)
    eps = np.repeat(e[:, None], h.shape[1], axis=1)
    if mode == "predictable":
        eps = improve_predictable(h, space_y, eps)
    return PredictableSigns(eps, check=False)


def _umd_objective(t, space_x, space_y, n, delta=0.0):
    rows = 1 << n

    def objective(z):
        hz = z @ t.T
        hz[0] = 0.0
        _, e = best_fixed_signs(_level_tables(hz, n), space_y)
        signs = np.ones(rows)
        for k in range(1, n + 1):
            signs[_level_rows(k)] = e[k - 1]
        g_tab = haar_synthesis(signs[:, None] * hz)
        f = haar_synthesis(z)
        nf, gf = space_x.smooth_norm(f, delta)
        ng, gg = space_y.smooth_norm(g_tab, delta)
        den = float(np.mean(nf ** 2))
        if den <= 0:
            return 0.0, np.zeros_like(z), den
        ratio = float(np.mean(ng ** 2)) / den
        g_num = (signs[:, None] * haar_adjoint(2.0 * ng[:, None] * gg)) @ t / rows
        g_num[0] = 0.0
        g_den = haar_adjoint(2.0 * nf[:, None] * gf) / rows
        return ratio, (g_num - ratio * g_den) / den, den

    return objective


def umd_lower_bound(t, space_x: Space, space_y: Space, n: int, mode: str = "fixed",
                    cfg: SearchConfig | None = None) -> ConstantEstimate:
    """Largest E ||sum eps_k T df_k||_Y^2 / E ||f_n||_X^2 found at depth n.

    Mode "fixed" maximizes over constant signs by exact enumeration. Mode
    "predictable" runs the same search and then applies improving per-node sign
    flips to the witness, so for equal settings it is at least the fixed value.
    """
    cfg = cfg or SearchConfig()
    if mode not in ("fixed", "predictable"):
        raise ValueError(f"mode must be 'fixed' or 'predictable', got {mode!r}")
    if not 1 <= n <= MAX_FIXED_DEPTH:
        raise ValueError(f"depth must lie in 1..{MAX_FIXED_DEPTH}")
    t = np.atleast_2d(np.asarray(getattr(t, "matrix", t), float))
    if t.shape != (space_y.dim, space_x.dim):
        raise ValueError(f"operator of shape {t.shape} for {space_x} -> {space_y}")
    m = space_x.dim
    kind = f"umd_{mode}"

    def score(f):
        mart = WalshPaleyMartingale.from_terminal(f)
        signs = choose_signs(t, space_y, mart, mode)
        return umd_ratio(t, space_x, space_y, mart, signs), signs

    if cfg.candidates is not None:
        return _best_candidate(cfg, n, m, kind, score)

    f, trace = _search(lambda d: _umd_objective(t, space_x, space_y, n, d), n, m, cfg)
    value, signs = score(f)
    witness = WalshPaleyMartingale.from_terminal(f)
    return ConstantEstimate(value, witness, kind, n, m, cfg.restarts, cfg.seed, signs, trace)


# ---------------------------------------------------------------------------
# the pairing identity behind the dc <=> UMD equivalence


@dataclass
class PairingReport:
    signs: PredictableSigns
    lhs: float
    pairing: float
    cauchy_schwarz: float
    identity_defect: float

    @property
    def identity_holds(self) -> bool:
        return self.identity_defect <= 1e-9

    @property
    def bound_holds(self) -> bool:
        return self.lhs <= self.cauchy_schwarz + 1e-9 * (1.0 + abs(self.cauchy_schwarz))


def optimal_signs(q: QuadraticForm, mart: WalshPaleyMartingale) -> PredictableSigns:
    """eps_k = sign q(df_k), with ties set to +1.

    q(df_k) is computed from the half difference [f_k(w, 1) - f_k(w, -1)] / 2,
    which is even in the k-th coordinate, so the signs are predictable exactly.
    """
    n = mart.depth
    rows = 1 << n
    eps = np.empty((n, rows))
    for k in range(1, n + 1):
        block = mart.data[k].reshape(1 << (k - 1), 2, rows >> k, mart.dim)[:, :, 0]
        half = 0.5 * (block[:, 1] - block[:, 0])
        s = np.where(q(half) < 0, -1.0, 1.0)
        eps[k - 1] = np.repeat(s, rows >> (k - 1))
    return PredictableSigns(eps)


def theorem3_chain(q: QuadraticForm, space: Space, mart: WalshPaleyMartingale) -> PairingReport:
    """Check E sum |D2 q| = 2 E <f_n, sum eps_k T df_k> and its Cauchy-Schwarz bound."""
    signs = optimal_signs(q, mart)
    g = transform(q.matrix, mart, signs).values
    lhs = dc_sum(q, space, mart).absolute
    pairing = 2.0 * float(np.mean(np.einsum("ni,ni->n", mart.terminal, g)))
    cs = 2.0 * math.sqrt(_energy(space, mart.terminal) * _energy(space.dual(), g))
    defect = abs(lhs - pairing) / (1.0 + abs(lhs))
    return PairingReport(signs, lhs, pairing, cs, defect)


# ---------------------------------------------------------------------------
# control functions on a grid


@dataclass
class ControlGrid:
    """Values of a candidate control function on the box [-R, R]^d with step h."""

    radius: float
    step: float
    increments: np.ndarray
    values: np.ndarray
    sweeps: int = 0
    status: str = "init"
    changes: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def axis(self) -> np.ndarray:
        return -self.radius + self.step * np.arange(self.size)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def index(self, x) -> np.ndarray:
        """Grid indices of the points x (shape (N, d)); raises if any is off the grid."""
        x = np.asarray(x, float).reshape(-1, self.dim)
        pos = (x + self.radius) / self.step
        idx = np.rint(pos).astype(int)
        if np.any(np.abs(pos - idx) > 1e-9) or np.any(idx < 0) or np.any(idx >= self.size):
            raise ValueError("point is not a grid node")
        return idx

    def __call__(self, x) -> np.ndarray:
        idx = self.index(x)
        return self.values[tuple(idx.T)]

    def on_grid(self, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(-1, self.dim)
        pos = (x + self.radius) / self.step
        idx = np.rint(pos)
        return np.all((np.abs(pos - idx) <= 1e-9) & (idx >= 0) & (idx < self.size), axis=1)

    def dyadic_samples(self) -> np.ndarray:
        """Nonzero nodes x for which x / 2 and 2 x are nodes too."""
        pts = self.points()
        keep = self.on_grid(pts / 2) & self.on_grid(2 * pts) & np.any(pts != 0, axis=1)
        return pts[keep]


def _offsets(grid: ControlGrid, vecs) -> np.ndarray:
    vecs = np.atleast_2d(np.asarray(vecs, float))
    if vecs.shape[1] != grid.dim:
        raise ValueError(f"increments must have {grid.dim} components")
    off = vecs / grid.step
    ioff = np.rint(off).astype(int)
    if np.any(np.abs(off - ioff) > 1e-9):
        raise ValueError("increments must be multiples of the grid step")
    return ioff


def _shift(values, off, fill=np.nan):
    """out[x] = values[x + off], with ``fill`` where x + off leaves the grid."""
    out = np.full(values.shape, fill)
    src, dst = [], []
    for o, size in zip(off, values.shape):
        if abs(o) >= size:
            return out
        src.append(slice(max(o, 0), size + min(o, 0)))
        dst.append(slice(max(-o, 0), size + min(-o, 0)))
    out[tuple(dst)] = values[tuple(src)]
    return out


def make_grid(radius: float, step: float, increments, dim: int = 1) -> ControlGrid:
    if dim not in (1, 2):
        raise ValueError("grids are 1-D or 2-D")
    count = int(round(2 * radius / step)) + 1
    if abs((count - 1) * step - 2 * radius) > 1e-9 * max(radius, 1):
        raise ValueError("2 R must be a multiple of h")
    inc = np.atleast_2d(np.asarray(increments, float))
    if dim == 1 and inc.shape[0] == 1 and inc.shape[1] != 1:
        inc = inc.T
    grid = ControlGrid(radius, step, inc, np.zeros((count,) * dim))
    off = _offsets(grid, inc)
    keys = {tuple(o) for o in off}
    if any(tuple(-o) not in keys for o in off):
        raise ValueError("increment set must be closed under negation")
    return grid


def _grid_eval(fn, grid):
    return np.asarray(fn(grid.points()), float).reshape(grid.values.shape)


def control_value_iteration(phi: Evaluator, rho: Evaluator, grid: ControlGrid, tol: float = 1e-8,
                            max_sweeps: int = 500) -> ControlGrid:
    """Bellman iteration for the smallest control function below rho / 2.

    V_0 = rho / 2 and V_{t+1}(x) = min(V_t(x), min_u [V_t(x+u)/2 + V_t(x-u)/2 - |D2 phi(x,u)|/2]),
    where increments leaving the box are skipped. Stops when the sup-norm change
    drops below ``tol`` (status "converged"), when some value falls below -tol
    (status "diverged": phi is not controlled within this rho budget), or after
    ``max_sweeps``.
    """
    rho_v = _grid_eval(rho, grid)
    if np.any(rho_v < 0):
        raise ValueError("rho must be nonnegative on the grid")
    phi_v = _grid_eval(phi, grid)
    seen, terms = set(), []
    for o in _offsets(grid, grid.increments):
        key = tuple(o)
        if key in seen or tuple(-o) in seen or not any(key):
            continue
        seen.add(key)
        d2 = _shift(phi_v, o) + _shift(phi_v, -o) - 2.0 * phi_v
        terms.append((o, 0.5 * np.abs(d2)))
    v = 0.5 * rho_v
    changes = []
    status = "max_sweeps"
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        new = v.copy()
        for o, half_d2 in terms:
            cand = 0.5 * (_shift(v, o) + _shift(v, -o)) - half_d2
            np.fmin(new, cand, out=new)
        change = float(np.max(v - new))
        changes.append(change)
        v = new
        if v.min() < -tol:
            status = "diverged"
            break
        if change < tol:
            status = "converged"
            break
    return ControlGrid(grid.radius, grid.step, grid.increments, v, sweeps, status, changes)


def control_defect(phi: Evaluator, psi: ControlGrid, pairs: str | Sequence = "all") -> float:
    """max over tested (x, u) of |D2 phi(x, u)| - D2 psi(x, u), and of -D2 psi(x, u).

    ``pairs`` is "all" (every grid-compatible pair), "increments" (the grid's
    increment set) or an explicit sequence of (x, u) pairs.
    """
    if isinstance(pairs, str):
        phi_v = _grid_eval(phi, psi)
        if pairs == "all":
            rng = range(-(psi.size - 1), psi.size)
            offs = [o for o in itertools.product(rng, repeat=psi.dim) if any(o)]
        elif pairs == "increments":
            offs = [tuple(o) for o in _offsets(psi, psi.increments)]
        else:
            raise ValueError(f"unknown pair set {pairs!r}")
        worst = -np.inf
        for o in offs:
            o = np.array(o)
            d2phi = _shift(phi_v, o) + _shift(phi_v, -o) - 2.0 * phi_v
            d2psi = _shift(psi.values, o) + _shift(psi.values, -o) - 2.0 * psi.values
            ok = ~np.isnan(d2psi)
            if ok.any():
                worst = max(worst, float(np.max(np.abs(d2phi[ok]) - d2psi[ok])),
                            float(np.max(-d2psi[ok])))
        return worst
    worst = -np.inf
    for x, u in pairs:
        x, u = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(u, float))
        d2phi = float(delta2(phi, x, u)[0])
        d2psi = float(delta2(psi, x, u)[0])
        worst = max(worst, abs(d2phi) - d2psi, -d2psi)
    return worst


def control_check(phi: Evaluator, psi: ControlGrid, pairs: str | Sequence = "all", tol: float = 1e-9) -> bool:
    """True iff |D2 phi| <= D2 psi + tol and D2 psi >= -tol on the tested pairs."""
    return control_defect(phi, psi, pairs) <= tol


def homogeneity_check(psi: Evaluator, p: float, samples) -> float:
    """max |psi(t x) - t^p psi(x)| / (1 + t^p |psi(x)|) over samples and t in {1/2, 2}."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x = np.atleast_2d(np.asarray(samples, float))
    base = np.asarray(psi(x), float)
    worst = 0.0
    for t in (0.5, 2.0):
        scaled = np.asarray(psi(t * x), float)
        tp = t ** p
        worst = max(worst, float(np.max(np.abs(scaled - tp * base) / (1.0 + tp * np.abs(base)))))
    return worst
