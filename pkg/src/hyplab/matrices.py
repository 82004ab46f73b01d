"""Per-point recovery matrices and their determinants.

Columns always follow the unknown order (f0, f1, f_1..f_n, f2).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DeterminantError
from .geometry import Grid
from .sources import RFamily, SpatialFunction, exp_coordinate

LAYOUTS = ("U", "U~", "Uq1", "U~q1", "W", "W~", "remark1")
_ALIASES = {"Ut": "U~", "Utq1": "U~q1", "Wt": "W~", "U_q1": "Uq1", "U~_q1": "U~q1"}
COND_WARN = 1e8


@dataclass
class MatrixField:
    """values has shape (*space, n+3, n+3)."""

    values: np.ndarray
    layout: str
    grid: Grid
    kind: str = ""
    options: dict = field(default_factory=dict)
    row_members: tuple = ()

    @property
    def size(self) -> int:
        return self.values.shape[-1]

    def at(self, idx) -> np.ndarray:
        return self.values[idx]


def canonical_layout(layout: str, n: int) -> str:
    """Resolve ``plain``/``q1`` shorthands by parity and check the parity tag."""
    layout = _ALIASES.get(layout, layout)
    even = n % 2 == 0
    if layout in ("plain", "q1"):
        base = "U~" if even else "U"
        return base + ("q1" if layout == "q1" else "")
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}")
    if layout != "remark1":
        tilde = "~" in layout
        if tilde != even:
            raise ConfigError(f"layout {layout} does not match n = {n} ({'even' if even else 'odd'})")
    return layout


def _odd_row(s) -> list:
    return [s.R, s.R_t, *s.grad, s.lap]


def _even_row(s, q1) -> list:
    row = [s.R_t, s.R_tt, *s.grad_t, s.lap_t]
    if q1 is None:
        return row
    odd = _odd_row(s)
    return [a - q1 * b for a, b in zip(row, odd)]


def assemble_matrix(family: RFamily, layout: str = "plain", q1=None) -> MatrixField:
    """Stack the t = 0 rows of every member into a per-point matrix field."""
    grid = family.grid
    n = grid.n
    if family.mode == "remark1" or layout == "remark1":
        if family.mode != "remark1":
            raise ConfigError("remark1 layout needs a remark1 family")
        rows = [_odd_row(mem.snapshot(0.0)) for mem in family]
        return _pack(rows, "remark1", family, tuple(range(len(rows))))
    lay = canonical_layout(layout, n)
    shifted = lay.endswith("q1")
    if shifted and q1 is None:
        raise ConfigError(f"layout {lay} needs q1")
    if not shifted and q1 is not None:
        raise ConfigError(f"layout {lay} takes no q1")
    q1a = None if q1 is None else np.broadcast_to(np.asarray(q1, dtype=float), grid.shape)
    rows, owners = [], []
    last = len(family) - 1
    for i, mem in enumerate(family):
        s = mem.snapshot(0.0)
        rows.append(_odd_row(s))
        owners.append(i)
        if n % 2 == 1 or i < last:
            rows.append(_even_row(s, q1a))
            owners.append(i)
    return _pack(rows, lay, family, tuple(owners))


def _pack(rows, layout, family, owners) -> MatrixField:
    grid = family.grid
    n = grid.n
    if len(rows) != n + 3:
        raise ConfigError(f"{len(rows)} rows assembled, need {n + 3}")
    vals = np.empty(grid.shape + (n + 3, n + 3))
    for r, row in enumerate(rows):
        for c, entry in enumerate(row):
            vals[..., r, c] = entry
    return MatrixField(vals, layout, grid, family.kind, dict(family.options), owners)


def assemble_remark1(positions: Sequence, velocity, grid: Grid) -> MatrixField:
    """Rows (w0_i, w1, grad w0_i, Lap w0_i); positions are SpatialFunctions or arrays."""
    n = grid.n
    if len(positions) != n + 3:
        raise ConfigError(f"remark1 needs {n + 3} initial positions, got {len(positions)}")
    w1 = _sample_value(velocity, grid)
    rows = []
    for p in positions:
        val, grad, lap = _sample_all(p, grid)
        rows.append([val, w1, *grad, lap])
    vals = np.empty(grid.shape + (n + 3, n + 3))
    for r, row in enumerate(rows):
        for c, entry in enumerate(row):
            vals[..., r, c] = entry
    return MatrixField(vals, "remark1", grid, "remark1", {}, tuple(range(n + 3)))


def _sample_value(f, grid):
    if isinstance(f, SpatialFunction):
        return f.sample(grid)[0]
    return np.broadcast_to(np.asarray(f, dtype=float), grid.shape)


def _sample_all(f, grid):
    if isinstance(f, SpatialFunction):
        return f.sample(grid)
    from . import stencils
    a = np.broadcast_to(np.asarray(f, dtype=float), grid.shape).copy()
    return a, stencils.gradient(a, grid.h, grid.n), stencils.laplacian(a, grid.h, grid.n)


@dataclass
class DeterminantReport:
    det: np.ndarray
    matrices: np.ndarray = field(repr=False)
    r0: float
    min_abs: float
    passed: bool

    @functools.cached_property
    def cond(self) -> np.ndarray:
        """2-norm condition number per point; an SVD per point, so computed on first use."""
        return np.linalg.cond(self.matrices)

    @property
    def max_cond(self) -> float:
        return float(np.max(self.cond))

    def summary_rows(self, grid: Grid):
        """(x_1..x_n, det, cond, pass) per grid point, row-major."""
        X = [x.ravel() for x in np.broadcast_arrays(*grid.mesh)]
        det = self.det.ravel()
        cond = self.cond.ravel()
        for k in range(det.size):
            yield (*[x[k] for x in X], det[k], cond[k], int(abs(det[k]) >= self.r0))


def default_r0(mf: MatrixField) -> float | None:
    """Half the smallest closed-form |det| when an oracle exists for the family."""
    kind = mf.kind
    if not kind.startswith("example"):
        return None
    k = int(kind[-1])
    ref = closed_form_det(k, mf.grid.mesh, mf.options, n=mf.grid.n)
    return 0.5 * float(np.min(np.abs(ref)))


def determinant_field(mf: MatrixField, r0: float | None = None) -> DeterminantReport:
    """LU-based determinant at every point; condition numbers follow lazily."""
    det = np.linalg.det(mf.values)
    if r0 is None:
        r0 = default_r0(mf)
        if r0 is None:
            r0 = 0.0
    min_abs = float(np.min(np.abs(det)))
    passed = min_abs >= r0 and min_abs > 0.0
    return DeterminantReport(det, mf.values, float(r0), min_abs, passed)


def require_determinant(report: DeterminantReport) -> None:
    if not report.passed:
        raise DeterminantError(f"min |det| = {report.min_abs:.3e} below r0 = {report.r0:.3e}")


def closed_form_det(kind: int, x, params: dict | None = None, n: int | None = None):
    """Determinant formulas of the three worked families.

    ``x`` is a coordinate tuple (arrays or scalars). For kind 3, ``params``
    carries ``f`` (list of SpatialFunction) and ``a``.
    """
    params = params or {}
    x = tuple(np.asarray(xk, dtype=float) for xk in x)
    n = n or len(x)
    shape = np.broadcast(*x).shape
    if kind == 1:
        return np.full(shape, -1.0)
    if kind == 2:
        return -2.0 * np.exp(sum(x[1:n])) * np.ones(shape)
    if kind == 3:
        f = params.get("f") or [exp_coordinate(j, n) for j in range(1, n + 1)]
        a = float(params.get("a", -1.0))
        ax = tuple(a * xk for xk in x)
        d1_ax = f[0].grad(ax)[0]
        d11_ax = f[0].lap(ax)
        d1_x = f[0].grad(x)[0]
        d11_x = f[0].lap(x)
        out = a * d1_ax * d11_x - a * a * d11_ax * d1_x
        for j in range(2, n + 1):
            out = out * f[j - 1].grad(x)[j - 1]
        return np.broadcast_to(out, shape).astype(float)
    raise ConfigError(f"no closed form for kind {kind}")


__all__ = [
    "MatrixField", "assemble_matrix", "assemble_remark1", "determinant_field", "closed_form_det",
    "DeterminantReport", "canonical_layout", "require_determinant", "default_r0",
]
