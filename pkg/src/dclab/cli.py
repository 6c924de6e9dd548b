"""Command-line front end: named experiments, single estimates, CSV and SVG output.

Usage: dclab <subcommand> [--config FILE] [--p LIST] [--dim LIST] [--depth N]
       [--restarts R] [--seed S] [--out DIR] [--svg] ...

Exit codes: 0 ok, 1 an expectation or invariant was violated, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dcgauge import (ControlGrid, SearchConfig, control_check, control_value_iteration, dc_lower_bound,
                      make_grid, umd_lower_bound)
from .factorize import default_objective, gamma2_l1_linf, min_dominating_form
from .quadform import (Lp, QuadraticForm, SymOperator, counterexample_form, duality_form, parse_space,
                       sylvester_hadamard)
from .serialize import Witness, dump_witness, read_matrix_csv, write_matrix_csv

HEADER = "scenario,p,dim,depth,kind,value,seed,restarts,wall_ms,witness"
MAX_DEPTH = 12


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = ""
    p: list = field(default_factory=lambda: [2.0])
    dim: list = field(default_factory=lambda: [2, 4, 8])
    depth: int = 6
    restarts: int = 8
    seed: int = 0
    out: str | None = None
    svg: bool = False
    steps: int = 400
    variant: str = "hadamard"
    slack: float = 0.02
    ceiling_tol: float = 1e-6
    min_growth: float = 0.0
    workers: int = 0

    def validate(self):
        if not self.dim:
            raise ConfigError("dim list is empty; pass at least one dimension, e.g. --dim 2,4,8")
        if not self.p:
            raise ConfigError("p list is empty; pass at least one exponent, e.g. --p 1,2")
        for p in self.p:
            if not (p >= 1):
                raise ConfigError(f"p = {p} is outside [1, inf]")
        for m in self.dim:
            if m < 1:
                raise ConfigError(f"dimension {m} must be positive")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"depth {self.depth} outside 1..{MAX_DEPTH}")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if self.variant not in ("hadamard", "fullsign"):
            raise ConfigError(f"variant must be hadamard or fullsign, got {self.variant!r}")
        if self.variant == "hadamard" and 1.0 in self.p and self.scenario == "trichotomy":
            bad = [m for m in self.dim if m & (m - 1)]
            if bad:
                raise ConfigError(f"hadamard dims must be powers of 2, got {bad}")


@dataclass
class ResultRow:
    scenario: str
    p: float
    dim: int
    depth: int
    kind: str
    value: float
    seed: int
    restarts: int
    wall_ms: float
    witness: str = ""

    def csv(self) -> str:
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        return (f"{self.scenario},{p},{self.dim},{self.depth},{self.kind},{self.value:.17g},"
                f"{self.seed},{self.restarts},{self.wall_ms:.0f},{self.witness}")


# ---------------------------------------------------------------------------
# configuration


def _parse_list(text, cast):
    text = str(text).strip()
    if not text:
        return []
    try:
        return [cast(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _as_p(v) -> float:
    return math.inf if str(v).lower() in ("inf", "infinity") else float(v)


_CASTS = {
    "p": lambda v: _parse_list(v, _as_p),
    "dim": lambda v: _parse_list(v, int),
    "svg": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
}


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} (known: {', '.join(sorted(known))})")
        out[key] = _coerce(key, value, known[key])
    return out


def _coerce(key, value, f):
    if key in _CASTS:
        return _CASTS[key](value)
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def build_config(args, scenario: str) -> ExperimentConfig:
    values = read_config(args.config) if args.config else {}
    for name in ("depth", "restarts", "seed", "out", "steps"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.p is not None:
        values["p"] = _CASTS["p"](args.p)
    if args.dim is not None:
        values["dim"] = _CASTS["dim"](args.dim)
    if args.svg:
        values["svg"] = True
    values["scenario"] = scenario
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def worker_count(cells: int, requested: int = 0) -> int:
    cap = int(os.environ.get("DCLAB_THREADS", "1") or 1)
    if requested > 0:
        cap = min(cap, requested)
    return max(1, min(cap, cells))


# ---------------------------------------------------------------------------
# experiments


def _search_cfg(cfg: ExperimentConfig) -> SearchConfig:
    return SearchConfig(restarts=cfg.restarts, seed=cfg.seed, steps=cfg.steps)


def _witness_path(cfg, p, m, kind) -> str:
    if not cfg.out:
        return ""
    ptag = "inf" if math.isinf(p) else f"{p:g}"
    d = Path(cfg.out) / "witness"
    d.mkdir(parents=True, exist_ok=True)
    return str(d / f"{cfg.scenario}_p{ptag}_m{m}_{kind}.txt")


def _dc_row(cfg, p, m, q, space) -> ResultRow:
    start = time.perf_counter()
    est = dc_lower_bound(q, space, cfg.depth, _search_cfg(cfg))
    wall = 1e3 * (time.perf_counter() - start)
    path = _witness_path(cfg, p, m, "dc")
    if path:
        dump_witness(path, Witness(est.witness, "dc", space, operator=q.matrix))
    return ResultRow(cfg.scenario, p, m, cfg.depth, "dc", est.value, cfg.seed, cfg.restarts, wall, path)


def hard_form(p: float, m: int, variant: str = "hadamard"):
    """The form used for exponent p: the l_1 counterexample for p = 1, else the duality form."""
    if p == 1:
        return counterexample_form(m, variant)
    return duality_form(Lp(m, p))


def _map_cells(cfg, cells, fn):
    workers = worker_count(len(cells), cfg.workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda c: fn(*c), cells))
    return [fn(*c) for c in cells]


def _check_increasing(rows, kind, slack, label) -> list[str]:
    vals = [(r.dim, r.value) for r in rows if r.kind == kind]
    vals.sort()
    bad = []
    for (m0, v0), (m1, v1) in zip(vals, vals[1:]):
        if not v1 > (1.0 - slack) * v0:
            bad.append(f"{label}: value at m={m1} ({v1:.6g}) is not above m={m0} ({v0:.6g}) within {slack:.0%} slack")
    return bad


def run_trichotomy(cfg: ExperimentConfig) -> tuple[list[ResultRow], list[str]]:
    """dc lower bounds and dominating-form ratios of the hard form for each (p, m)."""

    def cell(p, m):
        q, space = hard_form(p, m, cfg.variant)
        row = _dc_row(cfg, p, m, q, space)
        start = time.perf_counter()
        obj = default_objective(space)
        cert = min_dominating_form(q.matrix, obj)
        t = q.matrix
        scale = np.linalg.norm(t, 2) if obj == "spectral" else np.abs(t).max()
        ratio = cert.value / scale if scale > 0 else 0.0
        wall = 1e3 * (time.perf_counter() - start)
        dom = ResultRow(cfg.scenario, p, m, cfg.depth, f"dominate_{obj}", ratio, cfg.seed, 0, wall, "")
        return row, dom, cert.valid

    cells = [(p, m) for p in cfg.p for m in cfg.dim]
    results = _map_cells(cfg, cells, cell)
    rows = [r for res in results for r in res[:2]]
    problems = [f"dominating form for p={c[0]}, m={c[1]} has a negative margin"
                for c, res in zip(cells, results) if not res[2]]
    for p in cfg.p:
        mine = [r for r in rows if r.p == p]
        if p == 2:
            for r in mine:
                if r.kind == "dc":
                    ceiling = 2 * np.linalg.norm(hard_form(p, r.dim)[0].matrix, 2) + cfg.ceiling_tol
                    if r.value > ceiling:
                        problems.append(f"Hilbert ceiling: p=2, m={r.dim} value {r.value:.6g} > {ceiling:.6g}")
        if p == 1:
            problems += _check_increasing(mine, "dc", cfg.slack, "l1 growth")
            problems += _growth_problems(mine, cfg.min_growth)
    return rows, problems


def _growth_problems(rows, factor) -> list[str]:
    dc = sorted((r.dim, r.value) for r in rows if r.kind == "dc")
    if factor <= 0 or len(dc) < 2:
        return []
    (m0, v0), (m1, v1) = dc[0], dc[-1]
    if v1 < factor * v0:
        return [f"l1 growth factor: m={m1} value {v1:.6g} < {factor:g} x m={m0} value {v0:.6g}"]
    return []


def run_duality(cfg: ExperimentConfig) -> tuple[list[ResultRow], list[str]]:
    """dc lower bounds for <x*, x> on l_p^m (+)_1 l_p*^m."""

    def cell(p, m):
        q, space = duality_form(Lp(m, p))
        return _dc_row(cfg, p, m, q, space)

    cells = [(p, m) for p in cfg.p for m in cfg.dim]
    rows = _map_cells(cfg, cells, cell)
    problems = []
    for p in cfg.p:
        mine = [r for r in rows if r.p == p]
        if p == 2:
            for r in mine:
                if r.value > 1.0 + cfg.ceiling_tol:
                    problems.append(f"Hilbert ceiling: p=2, m={r.dim} value {r.value:.6g} > 1")
        if p == 1:
            problems += _check_increasing(mine, "dc", cfg.slack, "duality growth")
    return rows, problems


SCENARIOS = {"trichotomy": run_trichotomy, "duality": run_duality}


def write_report(cfg: ExperimentConfig, rows: list[ResultRow]) -> str:
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.scenario}.csv"
    path.write_text(HEADER + "\n" + "".join(r.csv() + "\n" for r in rows))
    if cfg.svg:
        from .plotting import growth_figure

        growth_figure(rows, out / f"{cfg.scenario}.svg", cfg.scenario)
    return str(path)


# ---------------------------------------------------------------------------
# single-shot subcommands


def _load_operator(args, default):
    if args.matrix:
        try:
            return read_matrix_csv(args.matrix)
        except (OSError, ValueError) as err:
            raise ConfigError(str(err)) from None
    return default()


def _first(args, name, cast, default):
    v = getattr(args, name)
    if v is None:
        return default
    vals = _parse_list(v, cast)
    if len(vals) != 1:
        raise ConfigError(f"--{name} takes a single value for this subcommand")
    return vals[0]


def _space(text, m):
    try:
        space = parse_space(text) if text else Lp(m, 2)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if space.dim != m:
        raise ConfigError(f"space {space} has dimension {space.dim}, operator needs {m}")
    return space


NAMED_FORMS = ("square", "swap", "counterexample", "duality")


def _named_form(name, m, p):
    if name == "square":
        return np.eye(1), None
    if name == "swap":
        return 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]]), None
    if name == "counterexample":
        if m & (m - 1):
            raise ConfigError(f"hadamard dims must be powers of 2, got {m}")
        q, space = counterexample_form(m)
        return q.matrix, space
    if name == "duality":
        q, space = duality_form(Lp(m, p))
        return q.matrix, space
    raise ConfigError(f"unknown form {name!r}; choose from {', '.join(NAMED_FORMS)}")


def _form_and_space(args):
    m = _first(args, "dim", int, 2)
    p = _first(args, "p", _as_p, 2.0)
    space = None
    if args.matrix:
        t = _load_operator(args, None)
    else:
        t, space = _named_form(args.form, m, p)
        if args.form == "counterexample":
            p = 1.0
    if t.shape[0] != t.shape[1] or not np.allclose(t, t.T, atol=1e-12):
        raise ConfigError("the form needs a square symmetric matrix")
    if args.space or space is None:
        space = _space(args.space, t.shape[0])
    # rows report m for the block forms on R^m (+) R^m, like the experiments do
    dim = m if not args.matrix and args.form in ("counterexample", "duality") else t.shape[0]
    return t, space, p, dim


def _single(args, cfg_fields) -> ExperimentConfig:
    values = read_config(args.config) if args.config else {}
    for name in ("depth", "restarts", "seed", "out", "steps"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values.update(cfg_fields)
    cfg = ExperimentConfig(**{k: v for k, v in values.items() if k not in ("p", "dim")})
    if not 1 <= cfg.depth <= MAX_DEPTH:
        raise ConfigError(f"depth {cfg.depth} outside 1..{MAX_DEPTH}")
    if cfg.restarts < 1:
        raise ConfigError("restarts must be at least 1")
    return cfg


def cmd_estimate_dc(args):
    t, space, p, dim = _form_and_space(args)
    cfg = _single(args, {"scenario": "estimate-dc"})
    row = _dc_row(cfg, p, dim, QuadraticForm(SymOperator(t)), space)
    return [row], []


def cmd_estimate_umd(args):
    cfg = _single(args, {"scenario": "estimate-umd"})
    m = _first(args, "dim", int, 1)
    p = _first(args, "p", _as_p, 2.0)
    t = _load_operator(args, lambda: np.eye(m))
    sx = _space(args.space, t.shape[1])
    sy = _space(args.space_y, t.shape[0]) if args.space_y else _space(args.space, t.shape[0])
    start = time.perf_counter()
    est = umd_lower_bound(t, sx, sy, cfg.depth, args.mode, _search_cfg(cfg))
    wall = 1e3 * (time.perf_counter() - start)
    path = _witness_path(cfg, p, t.shape[1], est.kind)
    if path:
        dump_witness(path, Witness(est.witness, est.kind, sx, sy, t, est.signs))
    return [ResultRow(cfg.scenario, p, t.shape[1], cfg.depth, est.kind, est.value, cfg.seed,
                      cfg.restarts, wall, path)], []


def cmd_gamma2(args):
    cfg = _single(args, {"scenario": "gamma2"})
    m = _first(args, "dim", int, 4)
    named = {"identity": lambda: np.eye(m), "ones": lambda: np.ones((m, m)),
             "hadamard": lambda: sylvester_hadamard(m)}
    if not args.matrix and args.form not in named:
        raise ConfigError(f"gamma2 needs --matrix or --form in {', '.join(named)}")
    if not args.matrix and args.form == "hadamard" and m & (m - 1):
        raise ConfigError(f"hadamard dims must be powers of 2, got {m}")
    mat = _load_operator(args, named.get(args.form, lambda: None))
    start = time.perf_counter()
    est = gamma2_l1_linf(mat, restarts=cfg.restarts, seed=cfg.seed)
    wall = 1e3 * (time.perf_counter() - start)
    problems = []
    if np.abs(est.B @ est.A - mat).max() > 1e-8:
        problems.append("gamma2 factor pair does not reproduce the matrix")
    if est.value < est.lower_bound - 1e-12:
        problems.append("gamma2 value below the max-entry lower bound")
    path = ""
    if cfg.out:
        d = Path(cfg.out)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(d / "gamma2_A.csv", est.A)
        write_matrix_csv(d / "gamma2_B.csv", est.B)
        path = str(d / "gamma2_A.csv")
    return [ResultRow(cfg.scenario, math.inf, mat.shape[0], 0, "gamma2", est.value, cfg.seed,
                      cfg.restarts, wall, path)], problems


def cmd_dominate(args):
    t, space, p, dim = _form_and_space(args)
    cfg = _single(args, {"scenario": "dominate"})
    objective = args.objective or default_objective(space)
    start = time.perf_counter()
    cert = min_dominating_form(t, objective)
    wall = 1e3 * (time.perf_counter() - start)
    problems = [] if cert.valid else [f"dominating form margins {cert.margin_minus:.3g}, {cert.margin_plus:.3g} < 0"]
    path = ""
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        path = str(Path(cfg.out) / "dominating_form.csv")
        write_matrix_csv(path, cert.S)
    return [ResultRow(cfg.scenario, p, dim, 0, f"dominate_{objective}", cert.value, cfg.seed, 0,
                      wall, path)], problems


PHIS = {
    "neg-square": lambda x: -np.sum(x * x, axis=1),
    "square": lambda x: np.sum(x * x, axis=1),
    "affine": lambda x: 1.0 + np.sum(x, axis=1),
}


def cmd_control_fn(args):
    cfg = _single(args, {"scenario": "control-fn"})
    if args.phi not in PHIS:
        raise ConfigError(f"unknown phi {args.phi!r}; choose from {', '.join(PHIS)}")
    d = _first(args, "dim", int, 1)
    incs = _parse_list(args.increments, float)
    if d == 1:
        vecs = [[u] for u in incs]
    elif d == 2:
        vecs = [[u, 0.0] for u in incs] + [[0.0, u] for u in incs]
    else:
        raise ConfigError("control-fn grids are 1-D or 2-D")
    vecs += [[-c for c in v] for v in vecs]
    try:
        grid = make_grid(args.radius, args.step, vecs, d)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    c = args.rho_scale
    phi = PHIS[args.phi]
    start = time.perf_counter()
    psi: ControlGrid = control_value_iteration(phi, lambda x: c * np.sum(x * x, axis=1), grid,
                                               tol=args.tol, max_sweeps=args.max_sweeps)
    problems = []
    if psi.status != "converged":
        problems.append(f"value iteration {psi.status} after {psi.sweeps} sweeps")
    elif not control_check(phi, psi, "all" if d == 1 else "increments"):
        problems.append("value-iteration limit fails the control check")
    wall = 1e3 * (time.perf_counter() - start)
    path = ""
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        path = str(Path(cfg.out) / "control_fn.csv")
        write_matrix_csv(path, np.atleast_2d(psi.values))
    return [ResultRow(cfg.scenario, 2.0, d, 0, "control", float(psi.values.max()), cfg.seed, psi.sweeps,
                      wall, path)], problems


# ---------------------------------------------------------------------------
# entry point


def _common(sp):
    sp.add_argument("--config", help="flat key = value file with ExperimentConfig fields")
    sp.add_argument("--p", help="comma-separated exponents, 'inf' allowed")
    sp.add_argument("--dim", help="comma-separated dimensions")
    sp.add_argument("--depth", type=int, help="martingale depth n (1..12)")
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int, help="L-BFGS iterations per search stage")
    sp.add_argument("--out", help="output directory for CSV, witnesses and figures")
    sp.add_argument("--svg", action="store_true", help="also write an SVG growth plot")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dclab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    s = sub.add_parser("estimate-dc", help="dc lower bound of one form")
    _common(s)
    s.add_argument("--form", default="square", help=f"named form: {', '.join(NAMED_FORMS)}")
    s.add_argument("--matrix", help="CSV file with the symmetric matrix of the form")
    s.add_argument("--space", help="space descriptor such as lp:4:1 or sum1(lp:2:1,lp:2:inf)")
    s = sub.add_parser("estimate-umd", help="UMD lower bound of one operator")
    _common(s)
    s.add_argument("--matrix", help="CSV file with the operator (default identity)")
    s.add_argument("--space")
    s.add_argument("--space-y", dest="space_y")
    s.add_argument("--mode", choices=("fixed", "predictable"), default="fixed")
    s = sub.add_parser("gamma2", help="l1 -> linf factorization constant through Hilbert space")
    _common(s)
    s.add_argument("--form", default="identity", help="identity, ones or hadamard")
    s.add_argument("--matrix")
    s = sub.add_parser("dominate", help="minimal dominating form")
    _common(s)
    s.add_argument("--form", default="swap", help=f"named form: {', '.join(NAMED_FORMS)}")
    s.add_argument("--matrix")
    s.add_argument("--space")
    s.add_argument("--objective", choices=("spectral", "maxentry"))
    s = sub.add_parser("control-fn", help="control function by value iteration")
    _common(s)
    s.add_argument("--phi", default="neg-square", help=f"one of {', '.join(PHIS)}")
    s.add_argument("--rho-scale", dest="rho_scale", type=float, default=2.0, help="rho(x) = C ||x||^2")
    s.add_argument("--radius", type=float, default=4.0)
    s.add_argument("--step", type=float, default=0.25)
    s.add_argument("--increments", default="0.25,0.5,1")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=500)
    return ap


COMMANDS = {"estimate-dc": cmd_estimate_dc, "estimate-umd": cmd_estimate_umd, "gamma2": cmd_gamma2,
            "dominate": cmd_dominate, "control-fn": cmd_control_fn}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.command in SCENARIOS:
            cfg = build_config(args, args.command)
            if cfg.out is None:
                cfg.out = "dclab-out"
            rows, problems = SCENARIOS[args.command](cfg)
            path = write_report(cfg, rows)
            print(HEADER)
            for r in rows:
                print(r.csv())
            print(f"wrote {path}", file=sys.stderr)
        else:
            rows, problems = COMMANDS[args.command](args)
            for r in rows:
                print(r.csv())
    except ConfigError as err:
        print(f"dclab: configuration error: {err}", file=sys.stderr)
        return 2
    for msg in problems:
        print(f"dclab: expectation violated: {msg}", file=sys.stderr)
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
