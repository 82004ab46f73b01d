"""Box grids, the convex weight ``d``, the pseudo-convex weight and geometry checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import stencils
from .errors import CFLError, ConfigError, GeometryError, HorizonError

GAMMA0 = "gamma0"
GAMMA1 = "gamma1"

FACE_ALIASES = {
    "left": "x1-",
    "right": "x1+",
    "bottom": "x2-",
    "top": "x2+",
    "front": "x3-",
    "back": "x3+",
}

CFL_SAFETY = 0.5


def face_names(n: int) -> list[str]:
    return [f"x{k + 1}{side}" for k in range(n) for side in ("-", "+")]


def canonical_face(name: str) -> str:
    return FACE_ALIASES.get(name, name)


def parse_face(name: str) -> tuple[int, int]:
    """``'x2+'`` -> (axis 1, side +1)."""
    name = canonical_face(name)
    if len(name) < 3 or name[0] != "x" or name[-1] not in "+-":
        raise ConfigError(f"unknown face {name!r}")
    return int(name[1:-1]) - 1, (1 if name[-1] == "+" else -1)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on an axis-aligned box, with time axis [-T, T].

    ``face_labels`` maps every face name (``x1-``, ``x1+``, ...) to
    ``gamma0`` (unobserved) or ``gamma1`` (observed).
    """

    extents: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]
    dt: float
    T: float
    face_labels: Mapping[str, str]
    nsteps: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "nsteps", int(round(self.T / self.dt)))

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m - 1) for (lo, hi), m in zip(self.extents, self.shape))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.extents)

    @property
    def nt(self) -> int:
        return 2 * self.nsteps + 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(-self.nsteps, self.nsteps + 1, dtype=float)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.extents, self.shape)]

    @property
    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def weights(self) -> np.ndarray:
        return stencils.tensor_weights(self.shape, self.h)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.n):
            idx = [slice(None)] * self.n
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def faces(self, label: str | None = None) -> list[str]:
        names = face_names(self.n)
        if label is None:
            return names
        return [f for f in names if self.face_labels[f] == label]

    def time_index(self, t: float) -> int:
        return int(round(t / self.dt)) + self.nsteps

    def cfl_bound(self, c_max: float) -> float:
        return CFL_SAFETY * self.h_min / (c_max * math.sqrt(self.n))

    def check_cfl(self, c_max: float) -> None:
        bound = self.cfl_bound(c_max)
        if self.dt > bound * (1 + 1e-12):
            raise CFLError(
                f"dt={self.dt:g} exceeds CFL bound {bound:.6g} "
                f"(h_min={self.h_min:g}, c_max={c_max:g}, n={self.n})"
            )

    def with_time(self, dt: float | None = None, T: float | None = None) -> "Grid":
        return Grid(self.extents, self.shape, dt or self.dt, T or self.T, self.face_labels)


def default_face_labels(n: int) -> dict[str, str]:
    """Upper faces observed, lower faces unobserved."""
    return {f: (GAMMA1 if f.endswith("+") else GAMMA0) for f in face_names(n)}


def normalize_face_labels(n: int, face_labels) -> dict[str, str]:
    """Accept ``{face: label}`` or ``{'gamma0': [...], 'gamma1': [...]}``; None gives the default split."""
    names = face_names(n)
    if face_labels is None:
        return default_face_labels(n)
    labels: dict[str, str] = {}
    if set(face_labels) <= {GAMMA0, GAMMA1}:
        for lab in (GAMMA0, GAMMA1):
            for f in face_labels.get(lab, []) or []:
                f = canonical_face(f)
                if f in labels:
                    raise ConfigError(f"face {f} labeled twice")
                labels[f] = lab
    else:
        for f, lab in face_labels.items():
            f = canonical_face(f)
            lab = {"0": GAMMA0, "1": GAMMA1}.get(str(lab), str(lab))
            if lab not in (GAMMA0, GAMMA1):
                raise ConfigError(f"face {f}: label must be gamma0 or gamma1, got {lab!r}")
            if f in labels:
                raise ConfigError(f"face {f} labeled twice")
            labels[f] = lab
    unknown = set(labels) - set(names)
    if unknown:
        raise ConfigError(f"unknown faces for n={n}: {sorted(unknown)}")
    missing = [f for f in names if f not in labels]
    if missing:
        raise ConfigError(f"faces without a label: {missing}")
    return {f: labels[f] for f in names}


def build_grid(extents, resolution, face_labels, dt: float, T: float, c_max: float = 1.0) -> Grid:
    """Uniform grid over ``extents`` with ``resolution`` points per axis.

    ``resolution`` may be a single int (same on every axis). The time axis is
    ``dt * k`` for ``k = -N..N`` with ``N = T / dt``, so t = 0 is a sample.
    """
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    n = len(extents)
    if n < 2:
        raise ConfigError("dimension must be at least 2")
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * n
    shape = tuple(int(m) for m in resolution)
    if len(shape) != n:
        raise ConfigError("resolution must give one count per axis")
    if min(shape) < 3:
        raise ConfigError("need at least 3 points per axis")
    if any(hi <= lo for lo, hi in extents):
        raise ConfigError("each extent must satisfy lo < hi")
    if dt <= 0 or T <= 0:
        raise ConfigError("dt and T must be positive")
    steps = T / dt
    if abs(steps - round(steps)) > 1e-8 * max(1.0, steps):
        raise ConfigError(f"T={T:g} is not an integer multiple of dt={dt:g}")
    grid = Grid(extents, shape, float(dt), float(T), normalize_face_labels(n, face_labels))
    grid.check_cfl(c_max)
    return grid


def _outside_box(x0, grid: Grid) -> bool:
    return any(x < lo or x > hi for x, (lo, hi) in zip(x0, grid.extents))


def convexity_weight(x0: Sequence[float], grid: Grid) -> np.ndarray:
    """d(x) = |x - x0|^2 on the grid; ``x0`` must lie outside the closed box."""
    x0 = tuple(float(v) for v in x0)
    if len(x0) != grid.n:
        raise GeometryError("anchor dimension does not match grid")
    if not _outside_box(x0, grid):
        raise GeometryError(f"anchor {x0} lies inside or on the closed box")
    return sum((xk - ak) ** 2 for xk, ak in zip(grid.mesh, x0))


def observation_time(d: np.ndarray) -> float:
    return 2.0 * math.sqrt(float(np.max(d)))


def select_alpha_delta(T: float, d: np.ndarray) -> tuple[float, float]:
    """Pick (alpha, delta) with alpha*T^2 > 4 max d + 4 delta and alpha in (0, 1).

    delta = (T^2 - 4 max d) / 8 and alpha is the midpoint of the admissible
    interval ((4 max d + 4 delta) / T^2, 1).
    """
    dmax = float(np.max(d))
    T0 = 2.0 * math.sqrt(dmax)
    if T <= T0:
        raise HorizonError(f"horizon T={T:g} below observation time T0={T0:.6g}")
    delta = (T * T - 4.0 * dmax) / 8.0
    lower = (4.0 * dmax + 4.0 * delta) / (T * T)
    alpha = 0.5 * (lower + 1.0)
    assert 0.0 < alpha < 1.0 and alpha * T * T > 4.0 * dmax + 4.0 * delta
    return alpha, delta


@dataclass(frozen=True)
class CarlemanParams:
    x0: tuple[float, ...]
    d: np.ndarray
    alpha: float
    delta: float
    sigma: float
    m0: float
    T: float
    T0: float
    t0: float
    t1: float
    tau: float = 1.0

    def phi(self, t) -> np.ndarray:
        """Weight at time(s) ``t``; a time array gives shape (nt, *space)."""
        t = np.asarray(t, dtype=float)
        return self.d - self.alpha * t.reshape(t.shape + (1,) * self.d.ndim) ** 2


def slab_half_width(m0: float, sigma: float, alpha: float) -> float:
    return math.sqrt((m0 - sigma) / alpha)


def carleman_params(grid: Grid, x0, sigma: float | None = None, tau: float = 1.0) -> CarlemanParams:
    d = convexity_weight(x0, grid)
    alpha, delta = select_alpha_delta(grid.T, d)
    m0 = float(np.min(d))
    if sigma is None:
        sigma = 0.5 * m0
    if not 0.0 < sigma < m0:
        raise GeometryError(f"sigma={sigma:g} outside (0, m0={m0:g})")
    t1 = slab_half_width(m0, sigma, alpha)
    # shrink t1 until the slab is inside Q(sigma) in floating point too
    while m0 - alpha * t1 * t1 < sigma:
        t1 = math.nextafter(t1, 0.0)
    return CarlemanParams(
        x0=tuple(float(v) for v in x0), d=d, alpha=alpha, delta=delta, sigma=float(sigma),
        m0=m0, T=grid.T, T0=observation_time(d), t0=-t1, t1=t1, tau=float(tau),
    )


def weight_phi(params: CarlemanParams, t) -> np.ndarray:
    """phi(x, t) = d(x) - alpha t^2; scalar ``t`` gives a spatial field."""
    return params.phi(t)


def q_sigma(params: CarlemanParams, grid: Grid) -> tuple[np.ndarray, tuple[float, float]]:
    """Space-time mask of Q(sigma) = {phi >= sigma} and the slab (t0, t1).

    Raises if a sampled time in [t0, t1] is not entirely inside the mask.
    """
    if not 0.0 < params.sigma < params.m0:
        raise GeometryError("sigma must lie in (0, m0)")
    t = grid.times
    mask = params.phi(t) >= params.sigma
    slab = (t >= params.t0) & (t <= params.t1)
    if not np.all(mask[slab]):
        raise GeometryError("time slab [t0, t1] not contained in Q(sigma)")
    return mask, (params.t0, params.t1)


def _face_index(grid: Grid, face: str) -> tuple:
    axis, side = parse_face(face)
    idx = [slice(None)] * grid.n
    idx[axis] = -1 if side > 0 else 0
    return tuple(idx)


def normal_derivative_on_face(f: np.ndarray, grid: Grid, face: str) -> np.ndarray:
    """Outward normal derivative on one face, 3-point one-sided stencil.

    Works on the trailing ``grid.n`` axes of ``f``.
    """
    axis, side = parse_face(face)
    ax = f.ndim - grid.n + axis
    h = grid.h[axis]

    def take(i):
        return np.take(f, i, axis=ax)

    if side > 0:
        return (3.0 * take(-1) - 4.0 * take(-2) + take(-3)) / (2.0 * h)
    return (3.0 * take(0) - 4.0 * take(1) + take(2)) / (2.0 * h)


@dataclass
class GeometryReport:
    min_d: float
    max_d: float
    T0: float
    T: float
    min_grad_d: float
    min_ratio_A2: float
    max_remark1_ratio: float
    max_dnu_gamma0: float
    face_dnu_max: dict
    r_c: float
    a1i_pass: bool
    a1ii_pass: bool
    a2_pass: bool
    a2_status: str
    hessian_min_eig: float | None
    horizon_pass: bool

    FIELDS = ("min_d", "max_d", "T0", "min_grad_d", "min_ratio_A2", "max_remark1_ratio",
              "a1i_pass", "a1ii_pass", "a2_pass")

    @property
    def all_pass(self) -> bool:
        return self.a1i_pass and self.a1ii_pass and self.a2_pass and self.horizon_pass

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.FIELDS}
        out.update(
            T=self.T,
            horizon_pass=self.horizon_pass,
            max_dnu_gamma0=self.max_dnu_gamma0,
            a2_status=self.a2_status,
            A2_threshold=4.0,
            r_c=self.r_c,
            hessian_min_eig=self.hessian_min_eig,
            face_dnu_max=dict(self.face_dnu_max),
        )
        return out


A1I_TOL = 1e-10


def check_assumptions(d: np.ndarray, c: np.ndarray, grid: Grid, x0, r_c: float = 0.9) -> GeometryReport:
    """Evaluate the geometric hypotheses on the sampled ``d`` and ``c``.

    Failures are reported as flags, never raised.
    """
    c = np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
    x0 = tuple(float(v) for v in x0)
    grad_d = stencils.gradient(d, grid.h, grid.n)
    grad_norm2 = sum(g * g for g in grad_d)
    min_grad = float(np.sqrt(np.min(grad_norm2)))
    ratio_a2 = float(np.min(c * c * grad_norm2 / d))

    face_dnu = {}
    for face in grid.faces():
        face_dnu[face] = float(np.max(normal_derivative_on_face(d, grid, face)))
    g0 = grid.faces(GAMMA0)
    max_dnu0 = max((face_dnu[f] for f in g0), default=-math.inf)
    a1i = max_dnu0 <= A1I_TOL

    grad_c = stencils.gradient(c, grid.h, grid.n)
    proj = sum(gc * (xk - ak) for gc, xk, ak in zip(grad_c, grid.mesh, x0))
    remark1 = float(np.max(np.abs(proj / (2.0 * c))))

    if ratio_a2 > 4.0 + 1e-9:
        status = "strict"
    elif ratio_a2 >= 4.0 - 1e-9:
        status = "boundary case"
    else:
        status = "below threshold"

    hess_eig = None
    if np.ptp(c) == 0.0:
        H = np.empty(grid.shape + (grid.n, grid.n))
        for i, gi in enumerate(grad_d):
            for j, gij in enumerate(stencils.gradient(gi, grid.h, grid.n)):
                H[..., i, j] = gij
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        # Hessian condition in g = c^-2 dx^2 reads lambda_min >= 2 c^-2
        hess_eig = float(np.min(np.linalg.eigvalsh(H)) * float(c.flat[0]) ** 2)

    T0 = observation_time(d)
    return GeometryReport(
        min_d=float(np.min(d)), max_d=float(np.max(d)), T0=T0, T=grid.T,
        min_grad_d=min_grad, min_ratio_A2=ratio_a2, max_remark1_ratio=remark1,
        max_dnu_gamma0=max_dnu0, face_dnu_max=face_dnu, r_c=float(r_c),
        a1i_pass=bool(a1i), a1ii_pass=bool(remark1 <= r_c), a2_pass=bool(min_grad > 0.0),
        a2_status=status, hessian_min_eig=hess_eig, horizon_pass=bool(grid.T > T0),
    )
