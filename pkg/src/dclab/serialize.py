"""Flat-file formats: matrix CSV, martingale witnesses and result records.

Matrices are row-major CSV with a one-line ``rows,cols`` header. A witness
file starts with ``n m L`` followed by L lines, each a level of the martingale
flattened to 2**n * m floats; optional keyed sections follow (kind, spaces,
operator, signs). Floats are written with 17 significant digits so that a
witness re-evaluates to the value it was saved with.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dcgauge import dc_ratio, umd_ratio
from .martingale import PredictableSigns, WalshPaleyMartingale
from .quadform import QuadraticForm, Space, SymOperator, parse_space


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values, float).ravel())


def _floats(line: str) -> np.ndarray:
    return np.array([float(v) for v in line.split()], float)


def write_matrix_csv(path, matrix) -> None:
    m = np.atleast_2d(np.asarray(matrix, float))
    np.savetxt(path, m, delimiter=",", fmt="%.17g", header=f"{m.shape[0]},{m.shape[1]}", comments="")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        try:
            rows, cols = (int(v) for v in header.strip().split(","))
        except ValueError:
            raise ValueError(f"{path}: first line must be 'rows,cols', got {header.strip()!r}") from None
        rest = [ln for ln in fh.read().splitlines() if ln.strip()]
    body = np.loadtxt(rest, delimiter=",", ndmin=2) if rest else np.empty((0, 0))
    if body.shape != (rows, cols) and not (rows * cols == 0 and body.size == 0):
        raise ValueError(f"{path}: header says {rows}x{cols}, found {body.shape[0]}x{body.shape[1]}")
    return body


@dataclass
class Witness:
    mart: WalshPaleyMartingale
    kind: str = ""
    space: Space | None = None
    space_y: Space | None = None
    operator: np.ndarray | None = None
    signs: PredictableSigns | None = None

    def evaluate(self) -> float:
        """The dc or UMD ratio this witness certifies."""
        if self.operator is None or self.space is None:
            raise ValueError("witness lacks the operator or space needed to evaluate it")
        if self.kind == "dc":
            return dc_ratio(QuadraticForm(SymOperator(self.operator)), self.space, self.mart)
        if self.kind.startswith("umd"):
            return umd_ratio(self.operator, self.space, self.space_y or self.space, self.mart, self.signs)
        raise ValueError(f"cannot evaluate a witness of kind {self.kind!r}")


def dump_witness(path, w: Witness) -> None:
    mart = w.mart
    lines = [f"{mart.depth} {mart.dim} {mart.depth + 1}"]
    lines += [_fmt(level) for level in mart.data]
    if w.kind:
        lines.append(f"kind {w.kind}")
    if w.space is not None:
        lines.append(f"space {w.space}")
    if w.space_y is not None:
        lines.append(f"space_y {w.space_y}")
    if w.operator is not None:
        op = np.atleast_2d(w.operator)
        lines.append(f"operator {op.shape[0]} {op.shape[1]}")
        lines += [_fmt(row) for row in op]
    if w.signs is not None:
        lines.append(f"signs {w.signs.depth}")
        lines += [_fmt(row) for row in w.signs.eps]
    Path(path).write_text("\n".join(lines) + "\n")


def load_witness(path) -> Witness:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty witness file")
    n, m, count = (int(v) for v in lines[0].split())
    if count != n + 1:
        raise ValueError(f"{path}: depth {n} needs {n + 1} levels, header says {count}")
    levels = [_floats(lines[1 + k]).reshape(1 << n, m) for k in range(count)]
    w = Witness(WalshPaleyMartingale(np.array(levels)))
    i = 1 + count
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        i += 1
        if key == "kind":
            w.kind = rest.strip()
        elif key == "space":
            w.space = parse_space(rest)
        elif key == "space_y":
            w.space_y = parse_space(rest)
        elif key == "operator":
            r, c = (int(v) for v in rest.split())
            w.operator = np.array([_floats(lines[i + j]) for j in range(r)]).reshape(r, c)
            i += r
        elif key == "signs":
            k = int(rest)
            w.signs = PredictableSigns(np.array([_floats(lines[i + j]) for j in range(k)]))
            i += k
        elif key:
            raise ValueError(f"{path}: unknown section {key!r}")
    return w
