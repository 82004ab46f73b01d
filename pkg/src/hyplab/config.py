"""Experiment configuration: one YAML file, validated before any computation."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import presets
from .errors import ConfigError, EmptyEnsembleError, TauOrderError
from .geometry import Grid, build_grid, convexity_weight, normalize_face_labels, select_alpha_delta

SECTIONS = ("grid", "geometry", "coefficients", "guess", "family", "inverse", "carleman",
            "simulate", "observability", "output", "seed")
FAMILY_KINDS = ("example1", "example2", "example3", "solved")


@dataclass
class ExperimentConfig:
    grid: dict
    geometry: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)
    guess: dict = field(default_factory=dict)
    family: dict = field(default_factory=lambda: {"kind": "example1"})
    inverse: dict = field(default_factory=dict)
    carleman: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    observability: dict = field(default_factory=dict)
    output: str = "run"
    seed: int | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def build_grid(self, c_max: float = 1.0) -> Grid:
        g = self.grid
        for key in ("extents", "resolution", "dt", "T"):
            if key not in g:
                raise ConfigError(f"grid.{key} is required")
        return build_grid(g["extents"], g["resolution"], g.get("faces"), float(g["dt"]), float(g["T"]), c_max)

    @property
    def x0(self):
        x0 = self.geometry.get("x0")
        if x0 is None:
            raise ConfigError("geometry.x0 is required")
        return tuple(float(v) for v in x0)

    def rng(self) -> np.random.Generator:
        if self.seed is None:
            raise ConfigError("a seed is required for randomized runs")
        return np.random.default_rng(int(self.seed))


def load_config(path, output: str | None = None, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    cfg = config_from_dict(raw or {}, base_dir=path.parent)
    if output is not None:
        cfg.output = output
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    if "grid" not in raw:
        raise ConfigError("grid section is required")
    raw = copy.deepcopy(raw)
    for sec in SECTIONS[:-2]:
        if sec in raw and not isinstance(raw[sec], dict):
            raise ConfigError(f"section {sec} must be a mapping")
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    kw = {k: raw[k] for k in SECTIONS if k in raw}
    return ExperimentConfig(base_dir=base_dir or Path.cwd(), **kw)


def _c_max(cfg: ExperimentConfig, grid_probe: Grid) -> float:
    cs = [presets.coefficient_set(cfg.coefficients, grid_probe, cfg.base_dir).c_max]
    if cfg.guess:
        cs.append(presets.coefficient_set(cfg.guess, grid_probe, cfg.base_dir).c_max)
    return max(cs)


def prepare(cfg: ExperimentConfig, command: str):
    """Validate everything the command will touch; return (grid, true, guess).

    Raises the typed errors whose exit codes the CLI reports.
    """
    g = cfg.grid
    probe = Grid(tuple((float(a), float(b)) for a, b in g.get("extents", [])),
                 _resolution(g), 1.0, 1.0, _faces(cfg)) if _shape_ok(g) else None
    if probe is None:
        raise ConfigError("grid.extents and grid.resolution are required and must agree")
    true = presets.coefficient_set(cfg.coefficients, probe, cfg.base_dir)
    guess = presets.coefficient_set(cfg.guess, probe, cfg.base_dir) if cfg.guess else None
    needs_x0 = command in ("check-geometry", "carleman", "observability")
    if needs_x0 or "x0" in cfg.geometry:
        convexity_weight(cfg.x0, probe)
    grid = cfg.build_grid(_c_max(cfg, probe))
    if needs_x0:
        d = convexity_weight(cfg.x0, grid)
        if command != "check-geometry":
            select_alpha_delta(grid.T, d)
    if command in ("stability-probe",):
        _ensemble_size(cfg.inverse.get("members", 10))
        cfg.rng()
    if command == "observability":
        _ensemble_size(cfg.observability.get("members", 10))
        cfg.rng()
    if command == "carleman":
        taus = cfg.carleman.get("taus", [1.0, 5.0, 10.0])
        if not isinstance(taus, list) or not taus:
            raise ConfigError("carleman.taus must be a non-empty list")
        if any(float(b) <= float(a) for a, b in zip(taus, taus[1:])):
            raise TauOrderError("tau list must increase")
    if command in ("recover", "stability-probe"):
        kind = cfg.family.get("kind", "example1")
        if kind not in FAMILY_KINDS:
            raise ConfigError(f"family.kind must be one of {FAMILY_KINDS}")
        mode = cfg.inverse.get("mode", "standard")
        if mode not in ("standard", "remark1"):
            raise ConfigError("inverse.mode must be standard or remark1")
        if command == "recover" and guess is None:
            raise ConfigError("recover needs a guess section")
    if command == "simulate":
        pre = (cfg.simulate.get("initial") or {}).get("preset", "zero")
        if pre == "sine-series":
            cfg.rng()
    return grid, true, guess


def _ensemble_size(m):
    if isinstance(m, bool) or not isinstance(m, int) or m < 0:
        raise ConfigError("ensemble size must be a non-negative integer")
    if m == 0:
        raise EmptyEnsembleError("empty ensemble")


def _resolution(g):
    res = g["resolution"]
    n = len(g["extents"])
    return (int(res),) * n if isinstance(res, int) else tuple(int(r) for r in res)


def _shape_ok(g) -> bool:
    try:
        ext = g["extents"]
        res = _resolution(g)
        return len(res) == len(ext) >= 2 and min(res) >= 3
    except (KeyError, TypeError, ValueError):
        return False


def _faces(cfg):
    return normalize_face_labels(len(cfg.grid["extents"]), cfg.grid.get("faces"))
