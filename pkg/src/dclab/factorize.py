"""Dominating forms, factorization through Euclidean space, and gamma_2-type estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.special import logsumexp, softmax

from .quadform import (
    Lp,
    NormEstimate,
    QuadraticForm,
    Space,
    SymOperator,
    block_symmetric,
    has_exact_norm,
    is_l1_like,
    norm_upper_bound,
    operator_norm,
)

KERNEL_TOL = 1e-9
PINV_RTOL = 1e-9


class DominationError(ValueError):
    """S does not dominate |q|: some kernel vector of S is not killed by T."""


def _sym(t) -> np.ndarray:
    t = np.asarray(getattr(t, "matrix", t), float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {t.shape}")
    if t.size and np.max(np.abs(t - t.T)) > 1e-12:
        raise ValueError("operator is not symmetric")
    return 0.5 * (t + t.T)


def margins(s, t) -> tuple[float, float]:
    """(lambda_min(S - T), lambda_min(S + T))."""
    s, t = np.asarray(s, float), np.asarray(t, float)
    if not s.size:
        return 0.0, 0.0
    return float(np.linalg.eigvalsh(s - t)[0]), float(np.linalg.eigvalsh(s + t)[0])


# ---------------------------------------------------------------------------
# dominating forms

OBJECTIVES = ("spectral", "maxentry")


def default_objective(space: Space) -> str:
    """max-entry is the X -> X* norm on l_1-like spaces; spectral elsewhere."""
    return "maxentry" if is_l1_like(space) else "spectral"


def _norm_value(s, name) -> float:
    if not s.size:
        return 0.0
    if name == "spectral":
        return float(np.abs(np.linalg.eigvalsh(s)).max())
    return float(np.abs(s).max())


def _smoothed_norm(s, name, tau):
    """Log-sum-exp smoothing of the spectral or max-entry norm, with its gradient."""
    if name == "spectral":
        w, v = np.linalg.eigh(s)
        ww = np.concatenate([w, -w])
        p = softmax(ww / tau)
        return tau * logsumexp(ww / tau), (v * (p[: len(w)] - p[len(w):])) @ v.T
    a = np.sqrt(s * s + (0.1 * tau) ** 2)
    p = softmax((a / tau).ravel()).reshape(s.shape)
    return tau * logsumexp(a / tau), p * s / a


@dataclass
class DominatingFormCertificate:
    S: np.ndarray
    objective: str
    value: float
    margin_minus: float
    margin_plus: float

    @property
    def op(self) -> SymOperator:
        return SymOperator(self.S)

    @property
    def valid(self) -> bool:
        return min(self.margin_minus, self.margin_plus) >= -1e-9


def spectral_modulus(t) -> np.ndarray:
    w, v = np.linalg.eigh(_sym(t))
    return (v * np.abs(w)) @ v.T


def min_dominating_form(t, objective: str = "spectral",
                        schedule=((0.05, 1e1), (0.02, 1e2), (0.01, 1e3), (0.003, 1e4), (0.001, 1e5)),
                        ) -> DominatingFormCertificate:
    """Minimize the chosen norm of S subject to S - T >= 0 and S + T >= 0.

    Starts from the spectral modulus |T| (already optimal for the spectral
    norm). Each stage minimizes a smoothed norm plus mu * sum of squared negative
    eigenvalues of S -+ T by L-BFGS, then restores feasibility with
    S <- S - min(margin, 0) I. The best feasible point seen is returned, so the
    result is never worse than |T|; margins come from a final eigen-solve.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    t = _sym(t)
    m = t.shape[0]
    upper = np.triu_indices(m)

    def unpack(z):
        s = np.zeros((m, m))
        s[upper] = z
        return s + np.triu(s, 1).T

    def pack(g):
        return (g + g.T - np.diag(np.diag(g)))[upper]

    def penalized(z, tau, mu):
        s = unpack(z)
        val, g = _smoothed_norm(s, objective, tau)
        for sign in (-1.0, 1.0):
            w, v = np.linalg.eigh(s + sign * t)
            neg = np.minimum(w, 0.0)
            val += mu * float(neg @ neg)
            g = g + 2.0 * mu * (v * neg) @ v.T
        return val, pack(g)

    def restore(s):
        lo = min(margins(s, t))
        return s - lo * np.eye(m) if lo < 0 else s

    best = restore(spectral_modulus(t))
    best_val = _norm_value(best, objective)
    scale = best_val
    if m and scale > 0:
        z = best[upper]
        for tau, mu in schedule:
            res = scipy.optimize.minimize(penalized, z, args=(tau * scale, mu / scale), jac=True,
                                          method="L-BFGS-B")
            z = res.x
            cand = restore(unpack(z))
            val = _norm_value(cand, objective)
            if val < best_val:
                best, best_val = cand, val
    mm, mp = margins(best, t)
    return DominatingFormCertificate(best, objective, best_val, mm, mp)


# ---------------------------------------------------------------------------
# factorization through a Euclidean space


@dataclass
class FactorizationCertificate:
    """T = B A with A: X -> H and B: H -> X*, H Euclidean of dimension A.shape[0]."""

    A: np.ndarray
    B: np.ndarray
    residual: float
    gram_defect: float
    s_norm: float
    b_norm: NormEstimate
    claimed_bound: float
    rank: int

    @property
    def within_bound(self) -> bool:
        return self.b_norm.value <= self.claimed_bound + 1e-6


def hilbert_factorization(t, cert: DominatingFormCertificate, space: Space | None = None) -> FactorizationCertificate:
    """Factor T through the inner product <Sx, y>, with J = S^(1/2) and T0 = T J^+.

    ``s_norm`` is ||S: X -> X*|| (an upper bound when no exact formula applies),
    and ``claimed_bound`` is 1/2 [(1 + ||S||^(1/2))^2 + 1 + ||S||].
    """
    t = _sym(t)
    s = _sym(cert.S)
    m = t.shape[0]
    if space is None:
        space = Lp(max(m, 1), 2)
    if min(margins(s, t)) < -1e-9:
        raise DominationError("certificate margins are negative")
    w, v = np.linalg.eigh(s) if m else (np.zeros(0), np.zeros((0, 0)))
    ker = v[:, w <= KERNEL_TOL]
    if ker.size and np.max(np.linalg.norm(t @ ker, axis=0)) > 1e-6:
        raise DominationError("Ker(S) is not contained in Ker(T)")
    root = np.sqrt(np.clip(w, 0.0, None))
    j = (v * root) @ v.T
    cutoff = PINV_RTOL * (root.max() if root.size else 0.0)
    inv = np.where(root > cutoff, 1.0 / np.where(root > cutoff, root, 1.0), 0.0)
    j_pinv = (v * inv) @ v.T
    t0 = t @ j_pinv
    residual = float(np.max(np.abs(t - t0 @ j), initial=0.0))
    gram_defect = float(np.max(np.abs(j @ j - s), initial=0.0))
    rank = int(np.sum(root > cutoff))

    dual = space.dual()
    s_norm = norm_upper_bound(s, space, dual) if m else 0.0
    h = Lp(max(m, 1), 2)
    if not m:
        b_norm = NormEstimate(0.0, True)
    else:
        b_norm = operator_norm(t0, h, dual, method="exact" if has_exact_norm(h, dual) else "sampled")
    claimed = 0.5 * ((1.0 + np.sqrt(s_norm)) ** 2 + 1.0 + s_norm)
    return FactorizationCertificate(j, t0, residual, gram_defect, float(s_norm), b_norm, float(claimed), rank)


def dss_from_factorization(a, b, space: Space | None = None) -> tuple[QuadraticForm, QuadraticForm]:
    """q = q1 - q2 with q1(x) = ||Ax + B^T x||^2 / 4 and q2(x) = ||Ax - B^T x||^2 / 4."""
    a, b = np.atleast_2d(np.asarray(a, float)), np.atleast_2d(np.asarray(b, float))
    if a.shape[0] != b.shape[1] or a.shape[1] != b.shape[0]:
        raise ValueError(f"A {a.shape} and B {b.shape} do not compose to an operator on X")
    ba = b @ a
    if ba.size and np.max(np.abs(ba - ba.T)) > 1e-9:
        raise ValueError("BA is not symmetric")
    plus, minus = a + b.T, a - b.T
    g1, g2 = 0.25 * plus.T @ plus, 0.25 * minus.T @ minus
    return QuadraticForm(0.5 * (g1 + g1.T)), QuadraticForm(0.5 * (g2 + g2.T))


def spectral_split(t) -> tuple[QuadraticForm, QuadraticForm]:
    """T = T+ - T- with T+, T- >= 0 and T+ T- = 0."""
    w, v = np.linalg.eigh(_sym(t))
    tp = (v * np.clip(w, 0, None)) @ v.T
    tm = (v * np.clip(-w, 0, None)) @ v.T
    return QuadraticForm(0.5 * (tp + tp.T)), QuadraticForm(0.5 * (tm + tm.T))


def block_assemble(t11, t12, t21, t22) -> SymOperator:
    if not block_symmetric(t11, t12, t21, t22):
        raise ValueError("blocks do not form a symmetric operator")
    return SymOperator(np.block([[t11, t12], [t21, t22]]))


# ---------------------------------------------------------------------------
# gamma_2 for l_1 -> l_inf


@dataclass
class Gamma2Estimate:
    """M = B A with value = (max row norm of B) * (max column norm of A)."""

    value: float
    A: np.ndarray
    B: np.ndarray
    lower_bound: float
    restarts: int = 0
    seed: int = 0
    history: list = field(default_factory=list)


def factor_value(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if not a.size or not b.size:
        return 0.0
    return float(np.linalg.norm(b, axis=1).max() * np.linalg.norm(a, axis=0).max())


def _balanced_factors(m, rank):
    u, sv, vt = np.linalg.svd(m, full_matrices=False)
    tol = 1e-10 * (sv[0] if sv.size else 0.0)
    r = int(np.sum(sv > tol))
    if rank is not None and rank < r:
        raise ValueError(f"rank {rank} is below rank(M) = {r}; no exact factorization exists")
    root = np.sqrt(sv[:r])
    return root[:, None] * vt[:r], u[:, :r] * root


def gamma2_l1_linf(m, rank: int | None = None, restarts: int = 8, seed: int = 0,
                   temperatures=(0.1, 0.02, 0.004, 0.001)) -> Gamma2Estimate:
    """Upper bound on the l_1 -> l_inf factorization constant of M through Hilbert space.

    Every exact factorization of inner dimension rank(M) has the form
    A = R A0, B = B0 R^-1 for the balanced SVD pair (A0, B0), and only
    P = R^T R matters: the objective is max_j a_j^T P a_j times max_i b_i^T P^-1 b_i,
    convex in P after normalising one factor. The two maxima are smoothed by
    log-sum-exp at decreasing temperature and minimized over a Cholesky factor of
    P by L-BFGS from several starts; each candidate is scored exactly.
    """
    m = np.atleast_2d(np.asarray(m, float))
    lower = float(np.abs(m).max(initial=0.0))
    a0, b0 = _balanced_factors(m, rank)
    r = a0.shape[0]
    if r == 0:
        return Gamma2Estimate(0.0, np.zeros((1, m.shape[1])), np.zeros((m.shape[0], 1)), lower, restarts, seed)
    cols = a0[:, np.linalg.norm(a0, axis=0) > 0]
    rows = b0[np.linalg.norm(b0, axis=1) > 0]
    tril = np.tril_indices(r)

    def unpack(z):
        low = np.zeros((r, r))
        low[tril] = z
        return low

    def smoothed(z, tau):
        low = unpack(z)
        p = low @ low.T
        try:
            pinv = np.linalg.inv(p)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(z)
        ca = np.einsum("ij,ik,kj->j", cols, p, cols)
        cb = np.einsum("ij,jk,ik->i", rows, pinv, rows)
        if np.any(ca <= 0) or np.any(cb <= 0):
            return np.inf, np.zeros_like(z)
        la, lb = np.log(ca), np.log(cb)
        f = tau * (logsumexp(la / tau) + logsumexp(lb / tau))
        wa, wb = softmax(la / tau), softmax(lb / tau)
        ga = (cols * (wa / ca)) @ cols.T
        y = pinv @ rows.T
        gb = -(y * (wb / cb)) @ y.T
        g = ga + gb
        return f, (2.0 * g @ low)[tril]

    def score(z):
        low = unpack(z)
        try:
            a, b = low.T @ a0, b0 @ np.linalg.inv(low.T)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        return factor_value(a, b), a, b

    rng = np.random.default_rng(seed)
    best = (factor_value(a0, b0), a0, b0)
    history = [best[0]]
    for k in range(max(restarts, 1)):
        if k == 0:
            z = np.eye(r)[tril]
        else:
            low = np.tril(rng.standard_normal((r, r))) / np.sqrt(r)
            low[np.diag_indices(r)] = np.abs(low[np.diag_indices(r)]) + 0.5
            z = low[tril]
        for tau in temperatures:
            res = scipy.optimize.minimize(smoothed, z, args=(tau,), jac=True, method="L-BFGS-B",
                                          options={"maxiter": 500})
            if np.all(np.isfinite(res.x)):
                z = res.x
            cand = score(z)
            history.append(cand[0])
            if cand[0] < best[0]:
                best = cand
    return Gamma2Estimate(best[0], best[1], best[2], lower, restarts, seed, history)
