"""Named coefficient, initial-data and family presets used by the config layer."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import sources as S
from .errors import ConfigError
from .geometry import Grid
from .solver import CoefficientSet


def _unit_coords(grid: Grid):
    return [(x - lo) / (hi - lo) for x, (lo, hi) in zip(grid.mesh, grid.extents)]


def scalar_field(entry, grid: Grid, base_dir: Path | None = None) -> np.ndarray:
    """Sample one coefficient from a number, a preset mapping or an ``.npy`` file."""
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return np.full(grid.shape, float(entry))
    if not isinstance(entry, dict):
        raise ConfigError(f"cannot interpret coefficient entry {entry!r}")
    if "file" in entry:
        p = Path(entry["file"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.exists():
            raise ConfigError(f"coefficient file {p} does not exist")
        arr = np.load(p)
        if arr.shape != grid.shape:
            raise ConfigError(f"{p}: shape {arr.shape} does not match grid {grid.shape}")
        return np.asarray(arr, dtype=float)
    kind = entry.get("preset", "constant")
    base = float(entry.get("base", entry.get("value", 0.0)))
    amp = float(entry.get("amplitude", 0.0))
    if kind == "constant":
        return np.full(grid.shape, base)
    if kind == "smooth-bump":
        center = entry.get("center", [0.5 * (lo + hi) for lo, hi in grid.extents])
        width = float(entry.get("width", 0.2))
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh, center))
        return base + amp * np.exp(-r2 / width**2)
    if kind == "sine-perturbed":
        modes = entry.get("modes", [1] * grid.n)
        if len(modes) != grid.n:
            raise ConfigError("sine-perturbed needs one mode number per axis")
        u = _unit_coords(grid)
        prod = np.ones(grid.shape)
        for uk, m in zip(u, modes):
            prod = prod * np.sin(math.pi * int(m) * uk)
        return base + amp * prod
    raise ConfigError(f"unknown coefficient preset {kind!r}")


def coefficient_set(entry: dict | None, grid: Grid, base_dir: Path | None = None) -> CoefficientSet:
    entry = dict(entry or {})
    unknown = set(entry) - {"c", "q1", "q0", "q"}
    if unknown:
        raise ConfigError(f"unknown coefficient keys {sorted(unknown)}")
    c = scalar_field(entry.get("c", 1.0), grid, base_dir)
    q1 = scalar_field(entry.get("q1", 0.0), grid, base_dir)
    q0 = scalar_field(entry.get("q0", 0.0), grid, base_dir)
    q = entry.get("q", [0.0] * grid.n)
    if not isinstance(q, (list, tuple)) or len(q) != grid.n:
        raise ConfigError(f"q needs {grid.n} components")
    qs = tuple(scalar_field(qk, grid, base_dir) for qk in q)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise ConfigError("wave speed must be positive")
    return CoefficientSet(c, q1, q0, qs)


def standing_wave(grid: Grid, modes, c: float = 1.0):
    """(w0, w1, exact) for the eigenmode prod sin(m_k pi x_k / L_k) with constant speed."""
    F = S.sine_mode(tuple(int(m) for m in modes), grid)
    w0 = F.value(grid.mesh)
    omega = c * math.pi * math.sqrt(sum((m / L) ** 2 for m, L in zip(modes, grid.lengths)))

    def exact(t):
        return math.cos(omega * t) * w0

    return w0, np.zeros(grid.shape), exact, omega


def initial_data(entry: dict | None, grid: Grid, rng: np.random.Generator | None = None):
    """Return (w0, w1, exact or None) for a simulation."""
    entry = dict(entry or {"preset": "zero"})
    kind = entry.get("preset", "zero")
    if kind == "zero":
        z = np.zeros(grid.shape)
        return z, z.copy(), (lambda t: np.zeros(grid.shape))
    if kind == "standing-wave":
        w0, w1, exact, _ = standing_wave(grid, entry.get("modes", [1] * grid.n), float(entry.get("c", 1.0)))
        return float(entry.get("amplitude", 1.0)) * w0, w1, (
            lambda t: float(entry.get("amplitude", 1.0)) * exact(t))
    if kind == "sine-series":
        if rng is None:
            raise ConfigError("sine-series initial data needs a seed")
        (w0, w1), = S.sine_initial_data(grid, rng, 1, int(entry.get("modes", 3)), float(entry.get("amplitude", 1.0)))
        return w0, w1, None
    if kind == "gaussian":
        center = entry.get("center", [0.5 * (lo + hi) for lo, hi in grid.extents])
        width = float(entry.get("width", 0.1))
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh, center))
        w0 = float(entry.get("amplitude", 1.0)) * np.exp(-r2 / width**2)
        w0[grid.boundary_mask] = 0.0
        return w0, np.zeros(grid.shape), None
    raise ConfigError(f"unknown initial-data preset {kind!r}")


_SPATIAL = {
    "exp": lambda j, n: S.exp_coordinate(j, n),
    "linear": lambda j, n: S.coordinate(j, n),
}
_TIME = {"cos": S.COS, "sin": S.SIN, "cosh": S.COSH, "sinh": S.SINH}


def family_options(entry: dict, n: int) -> dict:
    """Options for the kind-3 family: ``f`` names per axis, ``g``, ``h``, ``a``, bounds."""
    names = entry.get("f", ["exp"] * n)
    if len(names) != n:
        raise ConfigError(f"example3 needs {n} spatial function names")
    try:
        f = [_SPATIAL[nm](j, n) for j, nm in enumerate(names, start=1)]
        g = _TIME[entry.get("g", "cos")]
        h = _TIME[entry.get("h", "sin")]
    except KeyError as exc:
        raise ConfigError(f"unknown function name {exc.args[0]!r}") from None
    out = {"f": f, "g": g, "h": h, "a": float(entry.get("a", -1.0))}
    if "r" in entry:
        out["r"] = [float(v) for v in entry["r"]]
    if "r1_tilde" in entry:
        out["r1_tilde"] = float(entry["r1_tilde"])
    return out


def remark1_positions(n: int) -> list:
    """0, 1, x_1..x_n, x_1^2/2: a set whose matrix has determinant -1 everywhere."""
    return [S.constant(0.0, n), S.constant(1.0, n), *[S.coordinate(j, n) for j in range(1, n + 1)],
            S.half_square(1, n)]


def synthetic_boundary_field(grid: Grid, omega: float = 2.0):
    """w = b(x_1)...b(x_n) cos(omega t) with b(s) = s (s_c - s)_+^3 on the unit-scaled box.

    b vanishes to first order on the lower faces and identically within two
    cells of the upper faces, so on the grid w = 0 on every face and the
    one-sided normal derivative is exactly zero on the upper faces.
    """
    u = _unit_coords(grid)
    chi = np.ones(grid.shape)
    for uk, m in zip(u, grid.shape):
        sc = 1.0 - 2.0 / (m - 1)
        chi = chi * uk * np.maximum(sc - uk, 0.0) ** 3
    t = grid.times
    return np.cos(omega * t).reshape((-1,) + (1,) * grid.n) * chi
