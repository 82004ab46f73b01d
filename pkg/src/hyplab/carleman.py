"""Weighted-energy terms, boundary terms and the observability probe.

Metric convention (printed in every report): the Riemannian metric is
g = c^-2 dx^2, so for the g-gradient D and the g-unit outward normal nu

    |Dw|^2 = c^2 |grad w|^2,     <Dd, Dw> = c^2 grad d . grad w,
    <Dw, nu> = c dw/dn,          <Dd, nu> = c dd/dn,
    Lap_g d = c^2 Lap d + c^n grad(c^(2-n)) . grad d,

with dw/dn the Euclidean outward normal derivative.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import stencils
from .errors import ConfigError, EmptyEnsembleError, GeometryError, TauOrderError
from .geometry import (GAMMA1, CarlemanParams, Grid, check_assumptions, convexity_weight,
                       normal_derivative_on_face, parse_face)
from .solver import CoefficientSet, WaveField, initial_energy, solve_traces
from .sources import sine_initial_data  # noqa: F401  (re-exported)

METRIC_CONVENTION = ("g = c^-2 dx^2; |Dw|^2 = c^2|grad w|^2; <Dd,Dw> = c^2 grad d.grad w; "
                     "<Dw,nu> = c dw/dn; <Dd,nu> = c dd/dn; Lap_g d = c^2 Lap d + c^n grad(c^(2-n)).grad d")


@dataclass
class CarlemanConstants:
    epsilon: float = 1.0
    beta: float = 1.0
    C_T: float = 1.0
    c_T: float = 1.0
    C_1T: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"constant {k} must be positive, got {v!r}")


def _face_slice(a: np.ndarray, grid: Grid, face: str) -> np.ndarray:
    axis, side = parse_face(face)
    return np.take(a, -1 if side > 0 else 0, axis=a.ndim - grid.n + axis)


def _face_weights(grid: Grid, face: str) -> np.ndarray:
    axis, _ = parse_face(face)
    shape = [m for k, m in enumerate(grid.shape) if k != axis]
    h = [hk for k, hk in enumerate(grid.h) if k != axis]
    return stencils.tensor_weights(shape, h)


def _face_gradient(w: np.ndarray, grid: Grid, face: str) -> list[np.ndarray]:
    """Euclidean gradient of w restricted to a face, shape (nt, *face)."""
    axis, side = parse_face(face)
    wf = _face_slice(w, grid, face)
    dn = normal_derivative_on_face(w, grid, face)
    out = []
    j = 0
    for k in range(grid.n):
        if k == axis:
            out.append(side * dn)
        else:
            ax = wf.ndim - (grid.n - 1) + j
            out.append(np.gradient(wf, grid.h[k], axis=ax, edge_order=2))
            j += 1
    return out


def _geometry_fields(params: CarlemanParams, grid: Grid, c: np.ndarray):
    """grad d (analytic), Lap_g d and c on the full grid."""
    grad_d = [2.0 * (xk - ak) + np.zeros(grid.shape) for xk, ak in zip(grid.mesh, params.x0)]
    n = grid.n
    lap_d = 2.0 * n
    lap_g = c * c * lap_d
    if n != 2 and np.ptp(c) > 0:
        p = c ** (2 - n)
        lap_g = lap_g + c**n * sum(gp * gd for gp, gd in zip(stencils.gradient(p, grid.h, n), grad_d))
    return grad_d, np.broadcast_to(lap_g, grid.shape)


@dataclass
class BoundaryTerms:
    tau: float
    terms: tuple
    per_face: dict

    @property
    def total(self) -> float:
        return float(sum(self.terms))


def bt_terms(field: WaveField, params: CarlemanParams, tau: float, c=1.0) -> BoundaryTerms:
    """The five boundary integrals over Sigma = Gamma x [-T, T] and their sum."""
    grid = field.grid
    w = field.values
    if w.ndim != grid.n + 1:
        raise ValueError("bt_terms expects an unbatched field")
    c = np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
    t = field.times
    wt_time = stencils.trapezoid_weights_nonuniform(t)
    alpha = params.alpha
    grad_d, lap_g = _geometry_fields(params, grid, c)
    w_t = np.gradient(w, grid.dt, axis=0, edge_order=2)
    phi = params.phi(t)
    totals = np.zeros(5)
    per_face = {}
    for face in grid.faces():
        axis, side = parse_face(face)
        fw = _face_weights(grid, face)
        cf = _face_slice(c, grid, face)
        gd = [_face_slice(g, grid, face) for g in grad_d]
        lgd = _face_slice(lap_g, grid, face)
        e = np.exp(2.0 * tau * _face_slice(phi, grid, face))
        wf = _face_slice(w, grid, face)
        wtf = _face_slice(w_t, grid, face)
        gw = _face_gradient(w, grid, face)
        dn_w = side * gw[axis]
        dn_d = side * gd[axis]
        Dw2 = cf**2 * sum(g * g for g in gw)
        Dd2 = cf**2 * sum(g * g for g in gd)
        Dd_Dw = cf**2 * sum(a * b for a, b in zip(gd, gw))
        Dw_nu = cf * dn_w
        Dd_nu = cf * dn_d
        tt = t.reshape((-1,) + (1,) * (grid.n - 1))
        core = Dd2 - 4.0 * alpha**2 * tt**2
        integrands = (
            2.0 * tau * e * (wtf**2 - Dw2) * Dd_nu,
            4.0 * tau * e * Dd_Dw * Dw_nu,
            8.0 * alpha * tau * e * tt * wtf * Dw_nu,
            e * (4.0 * tau**2 * core + 2.0 * tau * (lgd - alpha - 1.0)) * wf * Dw_nu,
            2.0 * tau * e * (2.0 * tau**2 * core + tau * (3.0 * alpha + 1.0)) * wf**2 * Dd_nu,
        )
        vals = np.array([float(wt_time @ stencils.integrate(f, fw)) for f in integrands])
        per_face[face] = tuple(vals)
        totals += vals
    return BoundaryTerms(float(tau), tuple(float(v) for v in totals), per_face)


@dataclass
class CarlemanTerms:
    tau: float
    bt: tuple
    bt_total: float
    weighted_G: float
    sigma_mass: float
    endpoint_energy: float
    weighted_energy: float
    weighted_mass_Qsigma: float
    C1_tau: float
    C2_tau: float
    lhs_candidate: float
    rhs_candidate: float

    COLUMNS = ("tau", "bt_1", "bt_2", "bt_3", "bt_4", "bt_5", "bt_total", "weighted_G", "sigma_mass",
               "endpoint_energy", "weighted_energy", "weighted_mass_Qsigma", "C1_tau", "C2_tau",
               "lhs_candidate", "rhs_candidate")

    def row(self) -> tuple:
        return (self.tau, *self.bt, self.bt_total, self.weighted_G, self.sigma_mass, self.endpoint_energy,
                self.weighted_energy, self.weighted_mass_Qsigma, self.C1_tau, self.C2_tau,
                self.lhs_candidate, self.rhs_candidate)


def multipliers(tau: float, params: CarlemanParams, k: CarlemanConstants) -> tuple[float, float]:
    """C_1 = tau eps (1 - alpha) - 2 C_T and C_2 = 2 tau^3 beta - 2 C_T.

    The unspecified O(tau^2) part of C_2 is taken as zero.
    """
    return tau * k.epsilon * (1.0 - params.alpha) - 2.0 * k.C_T, 2.0 * tau**3 * k.beta - 2.0 * k.C_T


def _energy_at(w, w_t, c2, grid, idx) -> float:
    g2 = sum(g * g for g in stencils.gradient(w[idx], grid.h, grid.n))
    return float(stencils.integrate(w[idx] ** 2 + w_t[idx] ** 2 + c2 * g2, grid.weights))


def carleman_terms(field: WaveField, G, params: CarlemanParams, tau: float, c=1.0,
                   constants: CarlemanConstants | None = None) -> CarlemanTerms:
    """Tabulate every integral of the weighted estimate; nothing is asserted.

    ``G`` is None (zero), an array shaped like the field, or a callable of t.
    """
    k = constants or CarlemanConstants()
    grid = field.grid
    w = field.values
    t = field.times
    c = np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
    c2 = c * c
    wt_time = stencils.trapezoid_weights_nonuniform(t)

    def Qint(f):
        return float(wt_time @ stencils.integrate(f, grid.weights))

    phi = params.phi(t)
    e = np.exp(2.0 * tau * phi)
    w_t = np.gradient(w, grid.dt, axis=0, edge_order=2)
    g2 = sum(g * g for g in stencils.gradient(w, grid.h, grid.n))
    if G is None:
        G2 = 0.0
    else:
        Ga = np.stack([np.asarray(G(float(s)), dtype=float) for s in t]) if callable(G) else np.asarray(G)
        G2 = Qint(e * Ga**2)
    bt = bt_terms(field, params, tau, c)
    sigma_mass = math.exp(2.0 * tau * params.sigma) * Qint(w**2)
    endpoint = tau**3 * math.exp(-2.0 * tau * params.delta) * (
        _energy_at(w, w_t, c2, grid, 0) + _energy_at(w, w_t, c2, grid, -1))
    energy_w = Qint(e * (w_t**2 + c2 * g2))
    mask = phi >= params.sigma
    mass_q = Qint(np.where(mask, e * w**2, 0.0))
    C1, C2 = multipliers(tau, params, k)
    lhs = bt.total + 2.0 * G2 + k.C_1T * sigma_mass + k.c_T * endpoint
    rhs = C1 * energy_w + C2 * mass_q
    return CarlemanTerms(float(tau), bt.terms, bt.total, G2, sigma_mass, endpoint, energy_w, mass_q,
                         C1, C2, lhs, rhs)


def tau_sweep(field: WaveField, G, params: CarlemanParams, taus, c=1.0,
              constants: CarlemanConstants | None = None) -> list[CarlemanTerms]:
    taus = [float(x) for x in taus]
    if not taus:
        raise ConfigError("tau list is empty")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise TauOrderError("tau list must increase")
    return [carleman_terms(field, G, params, tau, c, constants) for tau in taus]


@dataclass
class ObservabilityReport:
    E0: np.ndarray
    trace_sq: np.ndarray
    G_sq: np.ndarray
    constant: np.ndarray
    faces: list
    failure: bool
    meta: dict = field(default_factory=dict)

    @property
    def max_constant(self) -> float:
        finite = self.constant[~np.isnan(self.constant)]
        return float(np.max(finite)) if finite.size else math.nan

    def table(self):
        for k in range(len(self.E0)):
            yield k, float(self.E0[k]), float(self.trace_sq[k]), float(self.G_sq[k]), float(self.constant[k])


def observability_probe(coeffs: CoefficientSet, grid: Grid, initial_data, x0=None, G=None,
                        enforce_geometry: bool = True, r_c: float = 0.9) -> ObservabilityReport:
    """E_w(0) / (||dw/dn||^2 on Sigma_1 + ||G||^2) for each member of the ensemble.

    With homogeneous Dirichlet data. Unless ``enforce_geometry`` is False the
    geometric hypotheses and T > T0 must hold for ``x0``.
    """
    data = list(initial_data)
    if not data:
        raise EmptyEnsembleError("empty ensemble")
    meta = {"shape": list(grid.shape), "dt": grid.dt, "T": grid.T, "members": len(data)}
    if enforce_geometry:
        if x0 is None:
            raise ConfigError("x0 is required to check the geometry")
        rep = check_assumptions(convexity_weight(x0, grid), coeffs.c, grid, x0, r_c)
        if not rep.all_pass:
            raise GeometryError(f"geometry check failed: a1i={rep.a1i_pass} a1ii={rep.a1ii_pass} "
                                f"a2={rep.a2_pass} horizon={rep.horizon_pass}")
        meta["T0"] = rep.T0
    w0 = np.stack([p[0] for p in data])
    w1 = np.stack([p[1] for p in data])
    E0 = np.array([float(initial_energy(coeffs, a, b, grid)) for a, b in data])
    faces = grid.faces(GAMMA1)
    B = len(data)
    src = None
    G_sq = np.zeros(B)
    if G is not None:
        src = G
        wt_time = stencils.trapezoid_weights_nonuniform(grid.times)
        G_sq = np.array(sum(wt * stencils.integrate(np.broadcast_to(G(float(s)), (B,) + grid.shape) ** 2,
                                                    grid.weights) for wt, s in zip(wt_time, grid.times)))
    if faces:
        tr = solve_traces(coeffs, grid, faces, w0=w0, w1=w1, source=src, batch_shape=(B,))
        trace_sq = np.asarray(tr.l2_squared(), dtype=float)
    else:
        trace_sq = np.zeros(B)
    denom = trace_sq + G_sq
    const = np.full(B, math.nan)
    pos = denom > 0
    const[pos] = E0[pos] / denom[pos]
    const[(~pos) & (E0 > 0)] = math.inf
    failure = bool(np.any(np.isinf(const)) or np.any(np.isnan(const)))
    return ObservabilityReport(E0, trace_sq, G_sq, const, list(faces), failure, meta)
