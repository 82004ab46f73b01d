"""Linearization, t = 0 snapshots, per-point recovery and stability ratios."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DeterminantError, GridMismatchError, SamplingError
from .geometry import Grid
from .matrices import COND_WARN, MatrixField, assemble_matrix, determinant_field
from .solver import CoefficientSet, WaveField, solve, solve_traces, trace_time_derivative
from .sources import RFamily, SourceProfile, evaluate_source, sine_series_profile, stacked_source


def linearize(coeffs_true: CoefficientSet, coeffs_guess: CoefficientSet) -> SourceProfile:
    """Source profile of the difference between a true and a guessed coefficient set.

    f2 = c^2 - c~^2, f1 = p1 - q1, f0 = p0 - q0, f = p - q, where the
    guess supplies (c~, p1, p0, p) and the true set (c, q1, q0, q).
    """
    if coeffs_true.shape != coeffs_guess.shape:
        raise GridMismatchError("coefficient sets live on different grids")
    return SourceProfile(
        f0=coeffs_guess.q0 - coeffs_true.q0,
        f1=coeffs_guess.q1 - coeffs_true.q1,
        f=tuple(p - q for p, q in zip(coeffs_guess.q, coeffs_true.q)),
        f2=coeffs_true.c ** 2 - coeffs_guess.c ** 2,
    )


def apply_recovery(coeffs_guess: CoefficientSet, profile: SourceProfile) -> CoefficientSet:
    """Invert :func:`linearize` given the guess."""
    c2 = coeffs_guess.c ** 2 + profile.f2
    if np.any(c2 <= 0):
        raise ValueError(f"recovered squared speed is nonpositive (min {np.min(c2):.3e})")
    return CoefficientSet(
        np.sqrt(c2),
        coeffs_guess.q1 - profile.f1,
        coeffs_guess.q0 - profile.f0,
        tuple(p - f for p, f in zip(coeffs_guess.q, profile.f)),
    )


def difference_field(coeffs_true: CoefficientSet, coeffs_guess: CoefficientSet, initial_pair, dirichlet_data,
                     grid: Grid, steps: int | None = None, reference=None) -> WaveField:
    """u = w(true) - w(guess) with a shared initial pair and boundary data.

    ``reference`` optionally replaces the guess solve by a member whose
    closed form solves the guess equation exactly.
    """
    w0, w1 = initial_pair
    wt = solve(coeffs_true, w0, w1, dirichlet_data, grid, steps=steps)
    if reference is None:
        wg = solve(coeffs_guess, w0, w1, dirichlet_data, grid, steps=steps)
        return wt - wg
    ref = np.stack([reference.values(float(t)) for t in wt.times])
    return WaveField(wt.values - ref, wt.times.copy(), grid)


@dataclass
class SnapshotRHS:
    """u_tt(., 0) and u_ttt(., 0) per member; u_ttt is None in remark1 mode."""

    u_tt: np.ndarray
    u_ttt: np.ndarray | None
    mode: str = "standard"

    @property
    def members(self) -> int:
        return self.u_tt.shape[0]


def snapshot_rhs(fields, mode: str = "standard") -> SnapshotRHS:
    """Centered time differences at t = 0; the third derivative uses 5 points.

    ``fields`` is a WaveField with the member index as its first batch axis,
    or a list of unbatched WaveFields.
    """
    if isinstance(fields, WaveField):
        vals, times, dt = np.moveaxis(fields.values, 0, 1), fields.times, fields.dt
    else:
        fields = list(fields)
        if not fields:
            raise SamplingError("no fields given")
        vals = np.stack([f.values for f in fields], axis=0)
        times, dt = fields[0].times, fields[0].dt
    k0 = int(np.argmin(np.abs(times)))
    need = 1 if mode == "remark1" else 2
    if abs(times[k0]) > 1e-12 * max(1.0, dt) or k0 < need or k0 + need >= len(times):
        raise SamplingError(f"need {need} samples on each side of t = 0")
    v = vals
    u_tt = (v[:, k0 + 1] - 2.0 * v[:, k0] + v[:, k0 - 1]) / dt**2
    u_ttt = None
    if mode != "remark1":
        u_ttt = (v[:, k0 + 2] - 2.0 * v[:, k0 + 1] + 2.0 * v[:, k0 - 1] - v[:, k0 - 2]) / (2.0 * dt**3)
    return SnapshotRHS(u_tt, u_ttt, mode)


def exact_snapshots(family: RFamily, profile: SourceProfile, q1) -> SnapshotRHS:
    """u_tt(0) = S(0) and u_ttt(0) = S_t(0) - q1 S(0) straight from the family."""
    q1 = np.broadcast_to(np.asarray(q1, dtype=float), family.grid.shape)
    tt, ttt = [], []
    for mem in family:
        s = mem.snapshot(0.0)
        S0 = profile.f0 * s.R + profile.f1 * s.R_t + profile.f2 * s.lap + sum(
            fk * gk for fk, gk in zip(profile.f, s.grad))
        St = profile.f0 * s.R_t + profile.f1 * s.R_tt + profile.f2 * s.lap_t + sum(
            fk * gk for fk, gk in zip(profile.f, s.grad_t))
        tt.append(S0)
        ttt.append(St - q1 * S0)
    if family.mode == "remark1":
        return SnapshotRHS(np.stack(tt), None, "remark1")
    return SnapshotRHS(np.stack(tt), np.stack(ttt), "standard")


@dataclass
class RecoveryResult:
    profile: SourceProfile
    cond: np.ndarray
    det: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def max_cond(self) -> float:
        return float(np.max(self.cond))


def _rhs(snap: SnapshotRHS, mf: MatrixField, q1) -> np.ndarray:
    rows = []
    seen = set()
    for i in mf.row_members:
        if i >= snap.members:
            raise ConfigError("snapshot count does not match the matrix rows")
        if i not in seen:
            rows.append(snap.u_tt[i])
            seen.add(i)
        else:
            if snap.u_ttt is None:
                raise ConfigError("paired rows need third-derivative snapshots")
            r = snap.u_ttt[i]
            if not mf.layout.endswith("q1") and q1 is not None:
                r = r + q1 * snap.u_tt[i]
            rows.append(r)
    return np.stack(rows, axis=-1)


def recover_profile(snap: SnapshotRHS, mf: MatrixField, r0: float | None = None, q1=None) -> RecoveryResult:
    """Solve the (n+3) x (n+3) system at every grid point.

    With a plain (unshifted) layout, ``q1`` converts u_ttt back to S_t.
    """
    if (snap.mode == "remark1") != (mf.layout == "remark1"):
        raise ConfigError(f"snapshot mode {snap.mode} does not match layout {mf.layout}")
    rep = determinant_field(mf, r0)
    if not rep.passed:
        raise DeterminantError(f"min |det| = {rep.min_abs:.3e} below r0 = {rep.r0:.3e}")
    b = _rhs(snap, mf, q1)
    try:
        x = np.linalg.solve(mf.values, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DeterminantError(f"singular pivot: {exc}") from exc
    notes = []
    if rep.max_cond > COND_WARN:
        msg = f"condition number up to {rep.max_cond:.3e}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return RecoveryResult(SourceProfile.from_vector(np.moveaxis(x, -1, 0)), rep.cond, rep.det, notes)


def recover_unknown_damping(snap: SnapshotRHS, family: RFamily, p1, r0: float | None = None,
                            tol: float = 1e-13, max_iter: int = 50):
    """Recover when the true damping q1 = p1 - f1 is itself unknown.

    Fixed point on q1: start from the guess damping, rebuild the shifted
    matrix, recover, update q1 = p1 - f1. Returns (result, iterations).
    """
    p1 = np.broadcast_to(np.asarray(p1, dtype=float), family.grid.shape)
    q1 = p1.copy()
    res = None
    for it in range(1, max_iter + 1):
        res = recover_profile(snap, assemble_matrix(family, "q1", q1), r0)
        new = p1 - res.profile.f1
        change = float(np.max(np.abs(new - q1)))
        q1 = new
        if change <= tol * max(1.0, float(np.max(np.abs(q1)))):
            return res, it
    warnings.warn(f"damping fixed point stopped after {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return res, max_iter


@dataclass
class StabilityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    failures: dict
    min_det: float
    meta: dict

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.ratio)

    def stats(self) -> dict:
        r = self.ratio[self.finite]
        if r.size == 0:
            return {"min": math.nan, "max": math.nan, "mean": math.nan}
        return {"min": float(np.min(r)), "max": float(np.max(r)), "mean": float(np.mean(r))}

    def table(self):
        for k in range(len(self.lhs)):
            yield k, float(self.lhs[k]), float(self.rhs[k]), float(self.ratio[k])


def _ratios(lhs, rhs):
    ratio = np.full(len(lhs), math.nan)
    ok = rhs > 0
    ratio[ok] = lhs[ok] / rhs[ok]
    return ratio


def boundary_response(coeffs: CoefficientSet, family: RFamily, profiles, faces=None) -> np.ndarray:
    """sum_i ||d_nu d_t^2 u^(i)||^2 over Gamma_1 x time, one value per profile.

    All (profile, member) systems are marched together as one batch.
    """
    grid = family.grid
    P, M = len(profiles), len(family)
    srcs = [evaluate_source(mem, p) for p in profiles for mem in family]
    S = stacked_source(srcs)

    def src(t):
        return S(t).reshape((P, M) + grid.shape)

    tr = solve_traces(coeffs, grid, faces, source=src, batch_shape=(P, M))
    d2 = trace_time_derivative(tr, 2)
    per = d2.l2_squared()
    if not np.all(np.isfinite(per)):
        raise FloatingPointError("non-finite boundary response")
    return per.sum(axis=1)


def stability_probe(coeffs: CoefficientSet, family: RFamily, members: int = 10, seed: int = 0,
                    modes: int = 4, amplitude: float = 1.0, profiles=None, faces=None) -> StabilityReport:
    """Ratios ||profile||^2 / sum_i ||d_nu d_t^2 u^(i)||^2 over a seeded sine-series ensemble."""
    grid = family.grid
    if profiles is None:
        if members < 1:
            raise ConfigError("ensemble must not be empty")
        rng = np.random.default_rng(seed)
        profiles = [sine_series_profile(grid, rng, modes, amplitude) for _ in range(members)]
    profiles = list(profiles)
    lhs = np.array([p.squared_norm(grid) for p in profiles])
    failures = {}
    try:
        rhs = boundary_response(coeffs, family, profiles, faces)
    except (FloatingPointError, ValueError, ArithmeticError):
        rhs = np.full(len(profiles), math.nan)
        for k, p in enumerate(profiles):
            try:
                rhs[k] = boundary_response(coeffs, family, [p], faces)[0]
            except (FloatingPointError, ValueError, ArithmeticError) as exc:
                failures[k] = str(exc)
    det = determinant_field(assemble_matrix(family, "q1", coeffs.q1) if family.mode == "standard"
                            else assemble_matrix(family, "remark1"))
    meta = {
        "n": grid.n, "shape": list(grid.shape), "h": list(grid.h), "dt": grid.dt, "T": grid.T,
        "members": len(profiles), "seed": seed, "modes": modes, "amplitude": amplitude,
        "family": family.kind,
    }
    return StabilityReport(lhs, rhs, _ratios(lhs, rhs), failures, det.min_abs, meta)


__all__ = [
    "linearize", "apply_recovery", "difference_field", "SnapshotRHS", "snapshot_rhs", "exact_snapshots",
    "recover_profile", "recover_unknown_damping", "RecoveryResult", "StabilityReport", "stability_probe",
    "boundary_response",
]
