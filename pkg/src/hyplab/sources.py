"""Reference families R^(i), source profiles and the source S(x, t).

Closed-form families are sums of separable terms F(x) G(t), which keeps all
space and time derivatives analytic. Families produced by the solver carry
finite-difference derivatives instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import stencils
from .errors import ConfigError, GridMismatchError, SamplingError
from .geometry import Grid
from .solver import CoefficientSet, WaveField, initial_acceleration, solve

Coords = tuple  # tuple of coordinate arrays (x1, ..., xn)


@dataclass(frozen=True)
class SpatialFunction:
    """A function of x with its gradient and Laplacian, all vectorized over coordinate arrays."""

    value: Callable[[Coords], np.ndarray]
    grad: Callable[[Coords], tuple]
    lap: Callable[[Coords], np.ndarray]
    label: str = ""

    def scaled(self, a: float) -> "SpatialFunction":
        """x -> f(a x)."""
        def sx(X):
            return tuple(a * xk for xk in X)
        return SpatialFunction(
            value=lambda X: self.value(sx(X)),
            grad=lambda X: tuple(a * g for g in self.grad(sx(X))),
            lap=lambda X: a * a * self.lap(sx(X)),
            label=f"{self.label}({a:g}x)",
        )

    def sample(self, grid: Grid):
        X = grid.mesh
        shape = grid.shape
        val = np.broadcast_to(self.value(X), shape).astype(float)
        grad = tuple(np.broadcast_to(g, shape).astype(float) for g in self.grad(X))
        lap = np.broadcast_to(self.lap(X), shape).astype(float)
        return val, grad, lap


def _zeros_like_coords(X):
    return np.zeros_like(np.asarray(X[0], dtype=float))


def constant(v: float, n: int) -> SpatialFunction:
    return SpatialFunction(
        value=lambda X: v + _zeros_like_coords(X),
        grad=lambda X: tuple(_zeros_like_coords(X) for _ in range(n)),
        lap=lambda X: _zeros_like_coords(X),
        label=f"{v:g}",
    )


def coordinate(j: int, n: int) -> SpatialFunction:
    """x_j (1-based)."""
    def grad(X):
        z = _zeros_like_coords(X)
        return tuple(z + (1.0 if k == j - 1 else 0.0) for k in range(n))
    return SpatialFunction(lambda X: np.asarray(X[j - 1], dtype=float) + 0.0, grad,
                           lambda X: _zeros_like_coords(X), f"x{j}")


def half_square(j: int, n: int) -> SpatialFunction:
    """x_j^2 / 2."""
    def grad(X):
        z = _zeros_like_coords(X)
        return tuple(np.asarray(X[j - 1], dtype=float) if k == j - 1 else z for k in range(n))
    return SpatialFunction(lambda X: 0.5 * np.asarray(X[j - 1], dtype=float) ** 2, grad,
                           lambda X: 1.0 + _zeros_like_coords(X), f"x{j}^2/2")


def exp_coordinate(j: int, n: int, sign: float = 1.0) -> SpatialFunction:
    """exp(sign * x_j)."""
    def val(X):
        return np.exp(sign * np.asarray(X[j - 1], dtype=float))

    def grad(X):
        z = _zeros_like_coords(X)
        return tuple(sign * val(X) if k == j - 1 else z for k in range(n))
    return SpatialFunction(val, grad, lambda X: sign * sign * val(X), f"exp({'-' if sign < 0 else ''}x{j})")


def sine_mode(modes: Sequence[int], grid: Grid) -> SpatialFunction:
    """prod_k sin(m_k pi (x_k - lo_k) / L_k); vanishes on the box boundary."""
    lo = [e[0] for e in grid.extents]
    L = grid.lengths
    kk = [m * math.pi / Lk for m, Lk in zip(modes, L)]
    n = grid.n

    def factors(X):
        s = [np.sin(kk[i] * (X[i] - lo[i])) for i in range(n)]
        c = [kk[i] * np.cos(kk[i] * (X[i] - lo[i])) for i in range(n)]
        return s, c

    def val(X):
        s, _ = factors(X)
        return np.prod(np.stack(np.broadcast_arrays(*s)), axis=0)

    def grad(X):
        s, c = factors(X)
        out = []
        for i in range(n):
            parts = [c[j] if j == i else s[j] for j in range(n)]
            out.append(np.prod(np.stack(np.broadcast_arrays(*parts)), axis=0))
        return tuple(out)

    def lap(X):
        return -sum(k * k for k in kk) * val(X)

    return SpatialFunction(val, grad, lap, f"sin{tuple(modes)}")


@dataclass(frozen=True)
class TimeFunction:
    """g(t) with derivatives: ``derivs(t, k)`` returns the k-th derivative, k = 0..3."""

    derivs: Callable[[float, int], float]
    label: str = ""

    def __call__(self, t, k: int = 0):
        return self.derivs(t, k)


def _poly(coeffs: Sequence[float], label: str) -> TimeFunction:
    p = np.polynomial.Polynomial(coeffs)

    def d(t, k):
        return float(p.deriv(k)(t)) if k else float(p(t))
    return TimeFunction(d, label)


ONE = _poly([1.0], "1")
T_LINEAR = _poly([0.0, 1.0], "t")
T_HALF = _poly([0.0, 0.5], "t/2")
T_HALF_SQUARE = _poly([0.0, 0.0, 0.5], "t^2/2")
SIN = TimeFunction(lambda t, k: (math.sin, math.cos, lambda s: -math.sin(s), lambda s: -math.cos(s))[k](t), "sin t")
COS = TimeFunction(lambda t, k: (math.cos, lambda s: -math.sin(s), lambda s: -math.cos(s), math.sin)[k](t), "cos t")
COSH = TimeFunction(lambda t, k: (math.cosh, math.sinh)[k % 2](t), "cosh t")
SINH = TimeFunction(lambda t, k: (math.sinh, math.cosh)[k % 2](t), "sinh t")


def polynomial_in_t(coeffs: Sequence[float]) -> TimeFunction:
    return _poly(coeffs, "poly")


@dataclass
class MemberSnapshot:
    """R and the derivatives a member must supply at one time level."""

    R: np.ndarray
    R_t: np.ndarray
    R_tt: np.ndarray
    R_ttt: np.ndarray | None
    grad: tuple
    lap: np.ndarray
    grad_t: tuple
    lap_t: np.ndarray


@dataclass
class SourceProfile:
    """The unknown quadruple (f0, f1, f, f2) on the grid."""

    f0: np.ndarray
    f1: np.ndarray
    f: tuple
    f2: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid) -> "SourceProfile":
        z = np.zeros(grid.shape)
        return cls(z.copy(), z.copy(), tuple(z.copy() for _ in range(grid.n)), z.copy())

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "SourceProfile":
        """Inverse of :meth:`as_vector`; ``v`` has the unknowns on axis 0."""
        n = v.shape[0] - 3
        return cls(v[0].copy(), v[1].copy(), tuple(v[2 + k].copy() for k in range(n)), v[-1].copy())

    def as_vector(self) -> np.ndarray:
        """Stack in the canonical unknown order (f0, f1, f_1..f_n, f2)."""
        return np.stack([self.f0, self.f1, *self.f, self.f2])

    def __add__(self, other: "SourceProfile") -> "SourceProfile":
        return SourceProfile.from_vector(self.as_vector() + other.as_vector())

    def __mul__(self, a: float) -> "SourceProfile":
        return SourceProfile.from_vector(a * self.as_vector())

    __rmul__ = __mul__

    def squared_norm(self, grid: Grid) -> float:
        """||f0||^2 + ||f1||^2 + ||f2||^2 + ||f||^2 with trapezoid weights."""
        return float(np.sum(stencils.integrate(self.as_vector() ** 2, grid.weights)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_vector())))

    @property
    def shape(self):
        return self.f0.shape


class AnalyticMember:
    """R(x, t) = sum_k F_k(x) G_k(t), sampled on ``grid`` once."""

    def __init__(self, terms: Sequence[tuple[SpatialFunction, TimeFunction]], grid: Grid, label: str = ""):
        self.terms = list(terms)
        self.grid = grid
        self.label = label or " + ".join(f"{F.label}*{G.label}" for F, G in self.terms)
        self._samples = [F.sample(grid) for F, _ in self.terms]

    def _combine(self, t: float, k: int):
        val = np.zeros(self.grid.shape)
        grad = [np.zeros(self.grid.shape) for _ in range(self.grid.n)]
        lap = np.zeros(self.grid.shape)
        for (F, G), (v, g, lp) in zip(self.terms, self._samples):
            gk = G(t, k)
            if gk == 0.0:
                continue
            val += gk * v
            for i in range(self.grid.n):
                grad[i] += gk * g[i]
            lap += gk * lp
        return val, tuple(grad), lap

    def snapshot(self, t: float) -> MemberSnapshot:
        R, gR, lR = self._combine(t, 0)
        Rt, gRt, lRt = self._combine(t, 1)
        Rtt, _, _ = self._combine(t, 2)
        Rttt, _, _ = self._combine(t, 3)
        return MemberSnapshot(R, Rt, Rtt, Rttt, gR, lR, gRt, lRt)

    def initial_pair(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.snapshot(0.0)
        return s.R, s.R_t

    def values(self, t: float) -> np.ndarray:
        return self._combine(t, 0)[0]

    def dirichlet(self) -> Callable[[float], np.ndarray]:
        """Boundary data equal to the closed form itself."""
        return self.values

    def source(self, profile: SourceProfile) -> Callable[[float], np.ndarray]:
        """S(., t) = f0 R + f1 R_t + f . grad R + f2 Lap R, precomputed per term."""
        parts = []
        for (F, G), (v, g, lp) in zip(self.terms, self._samples):
            A = profile.f0 * v + profile.f2 * lp + sum(fk * gk for fk, gk in zip(profile.f, g))
            B = profile.f1 * v
            parts.append((G, A, B))

        def S(t):
            out = np.zeros(self.grid.shape)
            for G, A, B in parts:
                g0, g1 = G(t, 0), G(t, 1)
                if g0:
                    out += g0 * A
                if g1:
                    out += g1 * B
            return out
        return S


class SolvedMember:
    """R given by a solver field; derivatives come from finite differences.

    At t = 0 the initial pair is used as-is and R_tt(., 0) comes from the
    equation, so the t = 0 rows are exact in the discrete sense.
    """

    def __init__(self, field: WaveField, coeffs: CoefficientSet, w0, w1):
        self.field = field
        self.grid = field.grid
        self.coeffs = coeffs
        self.w0 = np.asarray(w0, dtype=float)
        self.w1 = np.broadcast_to(np.asarray(w1, dtype=float), self.w0.shape).copy()
        self.label = "solved"

    def _k(self, t: float) -> int:
        k = int(round((t - self.field.times[0]) / self.grid.dt))
        if not 0 <= k < len(self.field.times):
            raise SamplingError(f"time {t:g} outside stored window")
        return k

    def snapshot(self, t: float) -> MemberSnapshot:
        v = self.field.values
        k = self._k(t)
        dt = self.grid.dt
        nt = len(self.field.times)
        h, n = self.grid.h, self.grid.n
        if abs(t) < 0.5 * dt:
            R, Rt = self.w0, self.w1
            Rtt = initial_acceleration(self.coeffs, self.w0, self.w1, self.grid)
        else:
            if not 1 <= k < nt - 1:
                raise SamplingError("need one neighbour on each side for time derivatives")
            R = v[k]
            Rt = (v[k + 1] - v[k - 1]) / (2 * dt)
            Rtt = (v[k + 1] - 2 * v[k] + v[k - 1]) / dt**2
        Rttt = None
        if 2 <= k < nt - 2:
            Rttt = (v[k + 2] - 2 * v[k + 1] + 2 * v[k - 1] - v[k - 2]) / (2 * dt**3)
        return MemberSnapshot(R, Rt, Rtt, Rttt, tuple(stencils.gradient(R, h, n)), stencils.laplacian(R, h, n),
                              tuple(stencils.gradient(Rt, h, n)), stencils.laplacian(Rt, h, n))

    def initial_pair(self):
        return self.w0, self.w1

    def values(self, t: float) -> np.ndarray:
        return self.field.values[self._k(t)]

    def source(self, profile: SourceProfile) -> Callable[[float], np.ndarray]:
        def S(t):
            s = self.snapshot(t)
            return profile.f0 * s.R + profile.f1 * s.R_t + profile.f2 * s.lap + sum(
                fk * gk for fk, gk in zip(profile.f, s.grad))
        return S


@dataclass
class RFamily:
    """Reference functions R^(1..M) on one grid.

    ``mode`` is ``standard`` (M = floor((n+4)/2), paired rows) or ``remark1``
    (M = n + 3, one row each).
    """

    members: list
    grid: Grid
    kind: str
    mode: str = "standard"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = member_count(self.grid.n) if self.mode == "standard" else self.grid.n + 3
        if len(self.members) != expected:
            raise ConfigError(f"{self.mode} family for n={self.grid.n} needs {expected} members, "
                              f"got {len(self.members)}")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> int:
        return self.grid.n // 2

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]


def member_count(n: int) -> int:
    """floor((n + 4) / 2) = m + 2 for n = 2m or n = 2m + 1."""
    return (n + 4) // 2


def _check_example3(n, f, g, h, a, grid, r, r1_tilde):
    if len(f) != n:
        raise ConfigError(f"example 3 needs {n} spatial functions, got {len(f)}")
    if not a < 0:
        raise ConfigError("example 3 needs a < 0")
    tol = 1e-12
    if abs(g(0.0) - 1) > tol or abs(h(0.0, 1) - 1) > tol or abs(g(0.0, 1)) > tol or abs(h(0.0)) > tol:
        raise ConfigError("example 3 needs g(0) = h'(0) = 1 and g'(0) = h(0) = 0")
    X = grid.mesh
    for j, fj in enumerate(f, start=1):
        grads = fj.grad(X)
        for k in range(j, n):
            if np.max(np.abs(grads[k])) > 1e-12:
                raise ConfigError(f"f^({j}) must depend on x1..x{j} only")
        dj = np.abs(np.broadcast_to(grads[j - 1], grid.shape))
        rj = r[j - 1] if r is not None else 0.0
        if np.min(dj) <= 0.0 or np.min(dj) < rj:
            raise ConfigError(f"|d f^({j}) / d x{j}| violates its lower bound {rj:g} "
                              f"(min {np.min(dj):.3e})")
    d11 = np.abs(np.broadcast_to(f[0].lap(X), grid.shape))
    if np.min(d11) <= 0.0 or (r1_tilde is not None and np.min(d11) < r1_tilde):
        raise ConfigError("|d^2 f^(1) / d x1^2| violates its lower bound")


def example_terms(kind: int, n: int, options: dict | None = None) -> list[list[tuple]]:
    """Separable terms of the closed-form families; members are 1-based in the usual notation."""
    options = options or {}
    m = n // 2
    odd = n % 2 == 1
    members = []
    if kind == 1:
        members.append([(constant(1.0, n), T_LINEAR)])
        for i in range(2, m + 2):
            members.append([(coordinate(2 * i - 3, n), ONE), (coordinate(2 * i - 2, n), T_LINEAR)])
        if odd:
            members.append([(coordinate(2 * m + 1, n), ONE), (half_square(1, n), T_LINEAR)])
        else:
            members.append([(half_square(1, n), ONE)])
    elif kind == 2:
        members.append([(constant(1.0, n), SIN)])
        for i in range(2, m + 2):
            members.append([(exp_coordinate(2 * i - 3, n), COS), (exp_coordinate(2 * i - 2, n), SIN)])
        if odd:
            members.append([(exp_coordinate(n, n), COS), (exp_coordinate(1, n, -1.0), SIN)])
        else:
            members.append([(exp_coordinate(1, n, -1.0), COS)])
    elif kind == 3:
        f = options["f"]
        g = options.get("g", COS)
        h = options.get("h", SIN)
        a = float(options.get("a", -1.0))
        fa = f[0].scaled(a)
        members.append([(constant(1.0, n), h)])
        for i in range(2, m + 2):
            members.append([(f[2 * i - 4], g), (f[2 * i - 3], h)])
        if odd:
            members.append([(f[n - 1], g), (fa, h)])
        else:
            members.append([(fa, g)])
    else:
        raise ConfigError(f"unknown example family {kind}")
    return members


def example_family(kind: int, grid: Grid, options: dict | None = None) -> RFamily:
    """The closed-form families of the three worked examples.

    Kind 3 takes ``options = {'f': [f1..fn], 'g': ..., 'h': ..., 'a': a}`` and
    optionally lower bounds ``r`` (per j) and ``r1_tilde``.
    """
    options = dict(options or {})
    n = grid.n
    if kind == 3:
        if "f" not in options:
            options["f"] = [exp_coordinate(j, n) for j in range(1, n + 1)]
        _check_example3(n, options["f"], options.get("g", COS), options.get("h", SIN),
                        float(options.get("a", -1.0)), grid, options.get("r"), options.get("r1_tilde"))
    members = [AnalyticMember(terms, grid) for terms in example_terms(kind, n, options)]
    return RFamily(members, grid, kind=f"example{kind}", options=options)


def remark1_family(positions: Sequence[SpatialFunction], velocity: SpatialFunction, grid: Grid) -> RFamily:
    """n + 3 members R^(i) = w0^(i)(x) + t w1(x) sharing one velocity."""
    members = [AnalyticMember([(p, ONE), (velocity, T_LINEAR)], grid) for p in positions]
    return RFamily(members, grid, kind="remark1", mode="remark1")


def family_from_solutions(coeffs_guess: CoefficientSet, initial_pairs, dirichlet_data, grid: Grid,
                          steps: int | None = None, mode: str = "standard") -> RFamily:
    """Solve the guess equation once per initial pair; derivatives by finite differences.

    ``dirichlet_data`` is ``None``, one callable shared by all members, or a
    list with one entry per member.
    """
    pairs = list(initial_pairs)
    if dirichlet_data is None or callable(dirichlet_data):
        bcs = [dirichlet_data] * len(pairs)
    else:
        bcs = list(dirichlet_data)
        if len(bcs) != len(pairs):
            raise ConfigError("one Dirichlet entry per initial pair is required")
    members = []
    for (w0, w1), bc in zip(pairs, bcs):
        w0 = np.broadcast_to(np.asarray(w0, dtype=float), grid.shape).copy()
        w1 = np.broadcast_to(np.asarray(w1, dtype=float), grid.shape).copy()
        fld = solve(coeffs_guess, w0, w1, bc, grid, steps=steps)
        members.append(SolvedMember(fld, coeffs_guess, w0, w1))
    return RFamily(members, grid, kind="solved", mode=mode)


def evaluate_source(member, profile: SourceProfile) -> Callable[[float], np.ndarray]:
    """S(x, t) = f0 R + f1 R_t + f . grad R + f2 Lap R as a callable of t."""
    if profile.shape != member.grid.shape:
        raise GridMismatchError("profile and family live on different grids")
    return member.source(profile)


def stacked_source(sources: Sequence[Callable[[float], np.ndarray]]) -> Callable[[float], np.ndarray]:
    """Batch several sources along a new leading axis."""
    def S(t):
        return np.stack([s(t) for s in sources])
    return S


def sine_series_profile(grid: Grid, rng: np.random.Generator, modes: int = 4, amplitude: float = 1.0) -> SourceProfile:
    """Random profile whose components are truncated sine series (zero on the boundary).

    Coefficients are standard normal, then scaled so that sum |a_k| equals
    ``amplitude``; the profile therefore does not depend on the resolution.
    """
    comps = []
    idx = np.stack(np.meshgrid(*[np.arange(1, modes + 1)] * grid.n, indexing="ij"), axis=-1).reshape(-1, grid.n)
    basis = [sine_mode(tuple(int(m) for m in k), grid).value(grid.mesh) for k in idx]
    for _ in range(grid.n + 3):
        a = rng.standard_normal(len(idx))
        a *= amplitude / np.sum(np.abs(a))
        comps.append(sum(ak * b for ak, b in zip(a, basis)))
    return SourceProfile.from_vector(np.stack(comps))


def sine_initial_data(grid: Grid, rng: np.random.Generator, members: int, modes: int = 3,
                      amplitude: float = 1.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random (w0, w1) from a truncated sine basis; zero on the boundary."""
    idx = np.stack(np.meshgrid(*[np.arange(1, modes + 1)] * grid.n, indexing="ij"), axis=-1).reshape(-1, grid.n)
    basis = [sine_mode(tuple(int(m) for m in kk), grid).value(grid.mesh) for kk in idx]
    out = []
    for _ in range(members):
        pair = []
        for _ in range(2):
            a = rng.standard_normal(len(idx))
            a *= amplitude / np.sum(np.abs(a))
            pair.append(sum(ak * b for ak, b in zip(a, basis)))
        out.append(tuple(pair))
    return out
