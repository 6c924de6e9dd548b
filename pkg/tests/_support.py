import itertools

import numpy as np

from dclab.martingale import PredictableSigns, WalshPaleyMartingale


def random_martingale(rng, n, m, scale=1.0):
    return WalshPaleyMartingale.from_terminal(scale * rng.standard_normal((1 << n, m)))


def random_predictable(rng, n, signs=True):
    """A predictable table of shape (n, 2**n): node values repeated over cylinders."""
    eps = np.empty((n, 1 << n))
    for k in range(1, n + 1):
        nodes = rng.choice([-1.0, 1.0], 1 << (k - 1)) if signs else rng.standard_normal(1 << (k - 1))
        eps[k - 1] = np.repeat(nodes, 1 << (n - k + 1))
    return PredictableSigns(eps) if signs else eps


def random_symmetric(rng, m):
    a = rng.standard_normal((m, m))
    return 0.5 * (a + a.T)


def brute_martingale(f_n):
    """Levels by literal averaging over the remaining coordinates (no tree reduction)."""
    f_n = np.asarray(f_n, float)
    if f_n.ndim == 1:
        f_n = f_n[:, None]
    n = f_n.shape[0].bit_length() - 1
    levels = []
    for k in range(n + 1):
        width = 1 << (n - k)
        lev = np.empty_like(f_n)
        for start in range(0, 1 << n, width):
            lev[start:start + width] = f_n[start:start + width].sum(axis=0) / width
        levels.append(lev)
    return np.array(levels)


def sign_family():
    """Terminal tables of depth 2 with values in {-1, 0, 1}."""
    return [np.array(v, float)[:, None] for v in itertools.product((-1, 0, 1), repeat=4)]


def all_predictable(n):
    """Every predictable sign table at depth n, enumerated node by node."""
    shapes = [1 << (k - 1) for k in range(1, n + 1)]
    for flat in itertools.product((-1.0, 1.0), repeat=sum(shapes)):
        nodes, i = [], 0
        for s in shapes:
            nodes.append(flat[i:i + s])
            i += s
        yield PredictableSigns.from_nodes(nodes).eps


def family_oracle(f, mode):
    """dc or UMD ratio of one depth-2 scalar table (T = id), written out level by level."""
    levels = [f, np.repeat([[f[0, 0] + f[1, 0], f[2, 0] + f[3, 0]]], 2, axis=1).reshape(4, 1) / 2,
              np.full((4, 1), f.mean())]
    f2, f1, f0 = levels
    d = np.array([f1 - f0, f2 - f1])[:, :, 0]
    energy = np.mean(f2[:, 0] ** 2)
    if energy == 0:
        return 0.0
    if mode == "dc":
        return float(np.mean(np.abs(2 * d ** 2).sum(axis=0)) / energy)
    tables = ([np.repeat(np.array(e)[:, None], 4, axis=1) for e in itertools.product((-1.0, 1.0), repeat=2)]
              if mode == "fixed" else list(all_predictable(2)))
    return max(float(np.mean((e * d).sum(axis=0) ** 2)) / energy for e in tables)
