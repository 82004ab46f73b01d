"""Explicit leapfrog solver for

    w_tt - c^2 Lap w + q1 w_t + q0 w + q . grad w = S    in Omega x [-T, T]

with Dirichlet data on the boundary, marched forward and backward from t = 0.

Arrays carry space on their trailing ``n`` axes. Any leading axes are batch
axes and are advanced together, which is how ensembles are solved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import stencils
from .errors import CompatibilityError, GridMismatchError, SamplingError
from .geometry import GAMMA1, Grid, normal_derivative_on_face, parse_face

COMPAT_TOL = 1e-12


@dataclass
class CoefficientSet:
    """Wave speed ``c``, damping ``q1``, potential ``q0`` and gradient field ``q``."""

    c: np.ndarray
    q1: np.ndarray
    q0: np.ndarray
    q: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.q1 = np.broadcast_to(np.asarray(self.q1, dtype=float), self.c.shape).copy()
        self.q0 = np.broadcast_to(np.asarray(self.q0, dtype=float), self.c.shape).copy()
        if len(self.q) != self.c.ndim:
            raise GridMismatchError(f"q needs {self.c.ndim} components, got {len(self.q)}")
        self.q = tuple(np.broadcast_to(np.asarray(qk, dtype=float), self.c.shape).copy() for qk in self.q)
        if not np.all(np.isfinite(self.c)) or np.any(self.c <= 0):
            raise ValueError("wave speed must be positive and finite everywhere")

    @classmethod
    def constant(cls, grid: Grid, c: float = 1.0, q1: float = 0.0, q0: float = 0.0, q=None) -> "CoefficientSet":
        q = (0.0,) * grid.n if q is None else tuple(q)
        return cls(np.full(grid.shape, float(c)), q1, q0, q)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape

    @property
    def c_max(self) -> float:
        return float(np.max(self.c))

    @property
    def c0(self) -> float:
        return float(max(np.max(self.c), 1.0 / np.min(self.c)))

    def copy(self) -> "CoefficientSet":
        return CoefficientSet(self.c.copy(), self.q1.copy(), self.q0.copy(), tuple(x.copy() for x in self.q))


@dataclass
class WaveField:
    """Snapshots ``values[k]`` at ``times[k]`` (ascending), shape (nt, *batch, *space)."""

    values: np.ndarray
    times: np.ndarray
    grid: Grid

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.times)))

    @property
    def dt(self) -> float:
        return self.grid.dt

    def at(self, t: float) -> np.ndarray:
        k = int(round((t - self.times[0]) / self.grid.dt))
        if not 0 <= k < len(self.times) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise SamplingError(f"time {t:g} is not a stored sample")
        return self.values[k]

    def __sub__(self, other: "WaveField") -> "WaveField":
        if self.values.shape != other.values.shape or not np.array_equal(self.times, other.times):
            raise GridMismatchError("fields live on different samples")
        return WaveField(self.values - other.values, self.times.copy(), self.grid)


@dataclass
class TraceSeries:
    """Boundary samples over time: ``values`` has shape (nt, *batch, nsamples).

    ``order`` is the number of time derivatives applied on top of the normal
    derivative (0 for the raw Neumann trace).
    """

    values: np.ndarray
    times: np.ndarray
    faces: list[str]
    sample_face: np.ndarray
    coords: np.ndarray
    weights: np.ndarray
    order: int = 0
    dt: float = field(default=0.0)

    def l2_squared(self) -> np.ndarray:
        """Trapezoid L2(Gamma x time)^2, reduced over time and samples."""
        wt = stencils.trapezoid_weights_nonuniform(self.times)
        v2 = self.values ** 2
        over_space = np.sum(v2 * self.weights, axis=-1)
        return np.tensordot(wt, over_space, axes=(0, 0))


def _as_source(source, grid: Grid) -> Callable[[float], np.ndarray] | None:
    if source is None:
        return None
    if callable(source):
        return source
    if hasattr(source, "at"):
        return source.at
    arr = np.asarray(source, dtype=float)
    if arr.shape[0] != grid.nt:
        raise GridMismatchError("sampled source must have one slice per grid time sample")

    def at(t):
        return arr[grid.time_index(t)]

    return at


def _is_zero(a) -> bool:
    return not np.any(a)


class _Operator:
    """Spatial part c^2 Lap w - q0 w - q . grad w on interior nodes."""

    def __init__(self, coeffs: CoefficientSet, grid: Grid):
        if coeffs.shape != grid.shape:
            raise GridMismatchError(f"coefficients {coeffs.shape} vs grid {grid.shape}")
        I = stencils.interior(grid.n)
        self.n = grid.n
        self.h = grid.h
        self.I = I
        self.c2 = (coeffs.c ** 2)[I]
        self.q0 = None if _is_zero(coeffs.q0) else coeffs.q0[I]
        self.q = None if all(_is_zero(qk) for qk in coeffs.q) else [qk[I] for qk in coeffs.q]
        self.q1 = None if _is_zero(coeffs.q1) else coeffs.q1[I]

    def __call__(self, w: np.ndarray) -> np.ndarray:
        out = self.c2 * stencils.interior_laplacian(w, self.h, self.n)
        if self.q0 is not None:
            out -= self.q0 * w[self.I]
        if self.q is not None:
            for qk, gk in zip(self.q, stencils.interior_gradient(w, self.h, self.n)):
                out -= qk * gk
        return out

    def damp(self, v: np.ndarray) -> np.ndarray | float:
        return 0.0 if self.q1 is None else self.q1 * v[self.I]


def initial_acceleration(coeffs: CoefficientSet, w0, w1, grid: Grid) -> np.ndarray:
    """w_tt(., 0) = c^2 Lap w0 - q1 w1 - q0 w0 - q . grad w0 on the full grid.

    Interior nodes use centered stencils; boundary nodes one-sided ones.
    """
    w0 = np.asarray(w0, dtype=float)
    w1 = np.broadcast_to(np.asarray(w1, dtype=float), w0.shape)
    out = coeffs.c ** 2 * stencils.laplacian(w0, grid.h, grid.n) - coeffs.q1 * w1 - coeffs.q0 * w0
    for qk, gk in zip(coeffs.q, stencils.gradient(w0, grid.h, grid.n)):
        out = out - qk * gk
    return out


def march(coeffs: CoefficientSet, grid: Grid, w0=None, w1=None, dirichlet=None, source=None,
          steps: int | None = None, batch_shape: Sequence[int] = ()) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(k, w^k)`` for k = 0, 1, ..., K and then k = -1, ..., -K.

    ``dirichlet`` and ``source`` are callables of t returning arrays that
    broadcast to (*batch, *space); ``None`` means zero. The first step on
    either side is seeded by w(+-dt) = w0 +- dt w1 + dt^2/2 w_tt(0), with
    w_tt(0) taken from the equation itself.
    """
    grid.check_cfl(coeffs.c_max)
    K = grid.nsteps if steps is None else min(int(steps), grid.nsteps)
    if K < 1:
        raise SamplingError("need at least one time step")
    shape = tuple(batch_shape) + grid.shape
    w0 = np.zeros(shape) if w0 is None else np.broadcast_to(np.asarray(w0, dtype=float), shape).copy()
    w1 = np.zeros(shape) if w1 is None else np.broadcast_to(np.asarray(w1, dtype=float), shape).copy()
    src = _as_source(source, grid)
    mask = grid.boundary_mask
    dt = grid.dt
    op = _Operator(coeffs, grid)
    I = op.I

    def S(t):
        return 0.0 if src is None else np.broadcast_to(src(t), shape)

    def B(t):
        return None if dirichlet is None else np.broadcast_to(np.asarray(dirichlet(t), dtype=float), shape)

    b0 = B(0.0)
    b_ref = np.zeros(shape) if b0 is None else b0
    mismatch = np.max(np.abs(w0[..., mask] - b_ref[..., mask]), initial=0.0)
    if mismatch > COMPAT_TOL:
        raise CompatibilityError(f"w0 differs from Dirichlet data at t=0 by {mismatch:.3e}")

    def with_boundary(w, t):
        b = B(t)
        if b is not None:
            w[..., mask] = b[..., mask]
        return w

    def interior_of(x):
        return x[I] if isinstance(x, np.ndarray) else x

    a0 = np.zeros(shape)
    a0[I] = op(w0) - op.damp(w1) + interior_of(S(0.0))

    yield 0, w0
    for sgn in (1.0, -1.0):
        tau = sgn * dt
        prev = w0
        cur = w0 + tau * w1 + tau**2 / 2.0 * a0
        cur = with_boundary(cur, tau)
        if dirichlet is None:
            cur[..., mask] = 0.0
        yield int(sgn), cur
        if op.q1 is None:
            ap = am = 1.0
        else:
            ap = 1.0 + sgn * op.q1 * dt / 2.0
            am = 1.0 - sgn * op.q1 * dt / 2.0
        for k in range(1, K):
            t = sgn * k * dt
            nxt = np.zeros(shape)
            nxt[I] = (2.0 * cur[I] - am * prev[I] + dt**2 * (op(cur) + interior_of(S(t)))) / ap
            nxt = with_boundary(nxt, t + tau)
            prev, cur = cur, nxt
            yield int(sgn) * (k + 1), cur


def _collect(gen, grid: Grid, steps, shape) -> WaveField:
    K = grid.nsteps if steps is None else min(int(steps), grid.nsteps)
    values = np.empty((2 * K + 1,) + tuple(shape))
    for k, w in gen:
        values[k + K] = w
    times = grid.dt * np.arange(-K, K + 1, dtype=float)
    return WaveField(values, times, grid)


def solve(coeffs: CoefficientSet, w0, w1, dirichlet_data, grid: Grid, steps: int | None = None) -> WaveField:
    """Solve the homogeneous equation with initial pair (w0, w1) and Dirichlet data.

    ``dirichlet_data`` is ``None`` (zero) or a callable ``t -> array``.
    ``steps`` limits the march to ``steps`` samples on each side of t = 0.
    """
    w0 = np.asarray(w0, dtype=float)
    batch = w0.shape[: w0.ndim - grid.n]
    gen = march(coeffs, grid, w0, w1, dirichlet_data, None, steps, batch)
    return _collect(gen, grid, steps, batch + grid.shape)


def solve_with_source(coeffs: CoefficientSet, source, grid: Grid, steps: int | None = None,
                      batch_shape: Sequence[int] = ()) -> WaveField:
    """Zero initial and boundary data, right-hand side ``source``."""
    gen = march(coeffs, grid, None, None, None, source, steps, batch_shape)
    return _collect(gen, grid, steps, tuple(batch_shape) + grid.shape)


def _trace_layout(grid: Grid, faces: Sequence[str]):
    coords, sample_face, weights = [], [], []
    mesh = grid.mesh
    for i, face in enumerate(faces):
        axis, side = parse_face(face)
        idx = [slice(None)] * grid.n
        idx[axis] = -1 if side > 0 else 0
        idx = tuple(idx)
        pts = np.stack([m[idx].ravel() for m in mesh], axis=-1)
        tang = [k for k in range(grid.n) if k != axis]
        w = stencils.tensor_weights([grid.shape[k] for k in tang], [grid.h[k] for k in tang]).ravel()
        coords.append(pts)
        weights.append(w)
        sample_face.append(np.full(len(w), i))
    return np.concatenate(coords), np.concatenate(sample_face), np.concatenate(weights)


def _resolve_faces(grid: Grid, faces) -> list[str]:
    faces = grid.faces(GAMMA1) if faces is None else [f for f in faces]
    return faces


def snapshot_trace(w: np.ndarray, grid: Grid, faces: Sequence[str]) -> np.ndarray:
    """Outward normal derivatives of one snapshot on ``faces``, shape (*batch, ns)."""
    parts = []
    for face in faces:
        dn = normal_derivative_on_face(w, grid, face)
        parts.append(dn.reshape(dn.shape[: dn.ndim - (grid.n - 1)] + (-1,)))
    return np.concatenate(parts, axis=-1)


def neumann_trace(field: WaveField, faces: Sequence[str] | None = None) -> TraceSeries:
    """Normal derivative on the observed faces at every stored time."""
    grid = field.grid
    faces = _resolve_faces(grid, faces)
    if not faces:
        raise ValueError("observed boundary is empty")
    coords, sample_face, weights = _trace_layout(grid, faces)
    values = snapshot_trace(field.values, grid, faces)
    return TraceSeries(values, field.times.copy(), list(faces), sample_face, coords, weights, 0, grid.dt)


def solve_traces(coeffs: CoefficientSet, grid: Grid, faces: Sequence[str] | None = None, w0=None, w1=None,
                 dirichlet=None, source=None, batch_shape: Sequence[int] = ()) -> TraceSeries:
    """March the full horizon keeping only the Neumann traces on ``faces``."""
    faces = _resolve_faces(grid, faces)
    if not faces:
        raise ValueError("observed boundary is empty")
    coords, sample_face, weights = _trace_layout(grid, faces)
    K = grid.nsteps
    values = np.empty((2 * K + 1,) + tuple(batch_shape) + (len(weights),))
    for k, w in march(coeffs, grid, w0, w1, dirichlet, source, None, batch_shape):
        values[k + K] = snapshot_trace(w, grid, faces)
    return TraceSeries(values, grid.times, list(faces), sample_face, coords, weights, 0, grid.dt)


def time_derivative(values: np.ndarray, dt: float, k: int) -> np.ndarray:
    """Centered, second-order k-th derivative along axis 0 (k in 1..3)."""
    v = values
    if k == 1:
        return (v[2:] - v[:-2]) / (2.0 * dt)
    if k == 2:
        return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    if k == 3:
        return (v[4:] - 2.0 * v[3:-1] + 2.0 * v[1:-3] - v[:-4]) / (2.0 * dt**3)
    raise ValueError("derivative order must be 1, 2 or 3")


def _half_width(k: int) -> int:
    return {1: 1, 2: 1, 3: 2}[k]


def trace_time_derivative(trace: TraceSeries, k: int) -> TraceSeries:
    """k-th time derivative of a trace; the series loses the stencil half-width at each end."""
    if k not in (1, 2, 3):
        raise ValueError("derivative order must be 1, 2 or 3")
    hw = _half_width(k)
    if len(trace.times) < 2 * hw + 1:
        raise SamplingError(f"need at least {2 * hw + 1} samples for order {k}")
    dt = trace.dt or float(trace.times[1] - trace.times[0])
    vals = time_derivative(trace.values, dt, k)
    return TraceSeries(vals, trace.times[hw:-hw].copy(), trace.faces, trace.sample_face, trace.coords,
                       trace.weights, trace.order + k, dt)


def initial_energy(coeffs: CoefficientSet, w0, w1, grid: Grid) -> np.ndarray:
    """E_w(0) = int w0^2 + w1^2 + c^2 |grad w0|^2 using the exact initial velocity."""
    w0 = np.asarray(w0, dtype=float)
    w1 = np.broadcast_to(np.asarray(w1, dtype=float), w0.shape)
    g2 = sum(g * g for g in stencils.gradient(w0, grid.h, grid.n))
    return stencils.integrate(w0**2 + w1**2 + coeffs.c**2 * g2, grid.weights)


def energy(field: WaveField, coeffs: CoefficientSet) -> tuple[np.ndarray, np.ndarray]:
    """Return (E_w(t), physical energy) series.

    E_w = int w^2 + w_t^2 + c^2 |grad w|^2 and the conserved quantity
    int (w_t^2 / c^2 + |grad w|^2) / 2 of the undamped equation.
    """
    grid = field.grid
    w = field.values
    wt = np.gradient(w, grid.dt, axis=0, edge_order=2)
    g2 = sum(g * g for g in stencils.gradient(w, grid.h, grid.n))
    c2 = coeffs.c ** 2
    e_w = stencils.integrate(w**2 + wt**2 + c2 * g2, grid.weights)
    phys = stencils.integrate(0.5 * (wt**2 / c2 + g2), grid.weights)
    return e_w, phys


def residual(field: WaveField, coeffs: CoefficientSet, S=None) -> float:
    """Discrete L2(Q) norm of the equation residual at interior space-time nodes."""
    grid = field.grid
    w = field.values
    dt = grid.dt
    if len(field.times) < 3:
        raise SamplingError("need at least three time samples")
    op = _Operator(coeffs, grid)
    src = _as_source(S, grid)
    total = 0.0
    cell = dt * float(np.prod(grid.h))
    for j in range(1, len(field.times) - 1):
        r = (w[j + 1][op.I] - 2.0 * w[j][op.I] + w[j - 1][op.I]) / dt**2
        r = r + op.damp((w[j + 1] - w[j - 1]) / (2.0 * dt)) - op(w[j])
        if src is not None:
            r = r - np.broadcast_to(src(field.times[j]), w[j].shape)[op.I]
        total += float(np.sum(r * r))
    return float(np.sqrt(total * cell))
