"""Command-line entry point: ``hyplab <subcommand> CONFIG [--output DIR] [--seed N]``.

Exit codes: 0 success, 1 config/usage error, 2 geometry failure, 3 horizon
below the observation time, 4 CFL violation, 5 determinant condition failed,
6 empty ensemble, 7 tau list not increasing.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import carleman as K
from . import inverse as I
from . import matrices as M
from . import presets, stencils
from . import sources as S
from . import storage
from .config import ExperimentConfig, load_config, prepare
from .errors import GeometryError, HorizonError, LabError
from .geometry import GAMMA1, carleman_params, check_assumptions, convexity_weight
from .solver import CoefficientSet, WaveField, energy, neumann_trace, solve

COMMANDS = ("check-geometry", "simulate", "recover", "stability-probe", "carleman", "observability")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid_meta(grid) -> dict:
    return {"extents": [list(e) for e in grid.extents], "shape": list(grid.shape), "h": list(grid.h),
            "dt": grid.dt, "T": grid.T, "faces": dict(grid.face_labels)}


def cmd_check_geometry(cfg: ExperimentConfig) -> int:
    grid, true, _ = prepare(cfg, "check-geometry")
    x0 = cfg.x0
    rep = check_assumptions(convexity_weight(x0, grid), true.c, grid, x0, float(cfg.geometry.get("r_c", 0.9)))
    out = _outdir(cfg)
    storage.write_report(out / "report.txt", {"command": "check-geometry", "x0": list(x0),
                                              "grid": _grid_meta(grid), **rep.as_dict(),
                                              "all_pass": rep.all_pass})
    if not rep.horizon_pass:
        raise HorizonError(f"horizon below observation time: T = {grid.T:g} <= T0 = {rep.T0:.6g}")
    if not rep.all_pass:
        raise GeometryError(f"geometry check failed: a1i={rep.a1i_pass} a1ii={rep.a1ii_pass} a2={rep.a2_pass}")
    return 0


def cmd_simulate(cfg: ExperimentConfig) -> int:
    grid, true, _ = prepare(cfg, "simulate")
    sim = cfg.simulate
    rng = cfg.rng() if cfg.seed is not None else None
    w0, w1, exact = presets.initial_data(sim.get("initial"), grid, rng)
    fld = solve(true, w0, w1, None, grid)
    out = _outdir(cfg)
    report = {"command": "simulate", "grid": _grid_meta(grid), "initial": sim.get("initial", {"preset": "zero"})}
    if sim.get("save_field", True):
        storage.write_field(out / "field.field", fld.values, fld.times, grid)
    faces = grid.faces(GAMMA1)
    if faces:
        tr = neumann_trace(fld, faces)
        storage.write_trace_csv(out / "trace.csv", tr)
        if exact is not None:
            ex = np.stack([exact(float(t)) for t in fld.times])
            tr_ex = neumann_trace(WaveField(ex, fld.times, grid), faces)
            report["trace_max_error"] = float(np.max(np.abs(tr.values - tr_ex.values)))
    if exact is not None:
        report["max_error"] = float(max(np.max(np.abs(fld.values[k] - exact(float(t))))
                                        for k, t in enumerate(fld.times)))
    e_w, phys = energy(fld, true)
    storage.write_csv(out / "energy.csv", ["t", "E_w", "physical"], zip(fld.times, e_w, phys))
    storage.write_report(out / "report.txt", report)
    return 0


def _analytic_family(cfg, grid):
    kind = cfg.family.get("kind", "example1")
    base = cfg.family.get("pairs", "example1") if kind == "solved" else kind
    if base not in ("example1", "example2", "example3"):
        raise LabError(f"family.pairs must name an example family, got {base!r}")
    opts = presets.family_options(cfg.family, grid.n) if base == "example3" else None
    return S.example_family(int(base[-1]), grid, opts)


def cmd_recover(cfg: ExperimentConfig) -> int:
    grid, true, guess = prepare(cfg, "recover")
    inv = cfg.inverse
    mode = inv.get("mode", "standard")
    r0 = inv.get("r0")
    r0 = None if r0 is None else float(r0)
    steps = 2
    if mode == "remark1":
        positions = presets.remark1_positions(grid.n)
        ana = S.remark1_family(positions, S.constant(1.0, grid.n), grid)
    else:
        ana = _analytic_family(cfg, grid)
    pairs = [m.initial_pair() for m in ana]
    bcs = [m.dirichlet() for m in ana]
    fam = S.family_from_solutions(guess, pairs, bcs, grid, steps=steps, mode=ana.mode)
    us = [I.difference_field(true, guess, p, bc, grid, steps=steps) for p, bc in zip(pairs, bcs)]
    snap = I.snapshot_rhs(us, mode=ana.mode)
    truth = I.linearize(true, guess)
    damping = inv.get("damping", "fixed-point")
    iterations = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if mode == "remark1":
            mf = M.assemble_matrix(fam, "remark1")
            res = I.recover_profile(snap, mf, r0)
        elif damping == "known":
            mf = M.assemble_matrix(fam, "q1", true.q1)
            res = I.recover_profile(snap, mf, r0)
        elif damping == "fixed-point":
            res, iterations = I.recover_unknown_damping(snap, fam, guess.q1, r0)
        else:
            raise LabError("inverse.damping must be known or fixed-point")
    rec = I.apply_recovery(guess, res.profile)
    # calibration: exact snapshots through the same matrices must be algebraically exact
    q1_cal = true.q1
    cal_snap = I.exact_snapshots(fam, truth, q1_cal)
    cal_mf = M.assemble_matrix(fam, "remark1") if mode == "remark1" else M.assemble_matrix(fam, "q1", q1_cal)
    cal = I.recover_profile(cal_snap, cal_mf, r0)
    out = _outdir(cfg)
    names = ["f0", "f1", *[f"f_{k + 1}" for k in range(grid.n)], "f2"]
    err = res.profile.as_vector() - truth.as_vector()
    w = grid.weights
    rows = [(nm, float(np.max(np.abs(e))), float(np.sqrt(np.sum(e * e * w)))) for nm, e in zip(names, err)]
    storage.write_csv(out / "errors.csv", ["component", "max_error", "l2_error"], rows)
    storage.write_field(out / "profile.field", res.profile.as_vector()[None], np.zeros(1), grid)
    coeff = np.stack([rec.c, rec.q1, rec.q0, *rec.q])
    storage.write_field(out / "coefficients.field", coeff[None], np.zeros(1), grid)
    storage.write_report(out / "report.txt", {
        "command": "recover", "grid": _grid_meta(grid), "mode": mode, "family": ana.kind,
        "damping": damping, "fixed_point_iterations": iterations,
        "max_error": float(np.max(np.abs(err))),
        "max_error_c": float(np.max(np.abs(rec.c - true.c))),
        "calibration_exact_path_error": float(np.max(np.abs(cal.profile.as_vector() - truth.as_vector()))),
        "c2_difference_norm": float(np.sqrt(np.sum(truth.f2**2 * w))),
        "min_abs_det": float(np.min(np.abs(res.det))), "max_cond": res.max_cond,
        "warnings": [str(c.message) for c in caught],
    })
    return 0


def cmd_stability_probe(cfg: ExperimentConfig) -> int:
    grid, true, guess = prepare(cfg, "stability-probe")
    inv = cfg.inverse
    kind = cfg.family.get("kind", "example1")
    if inv.get("mode", "standard") == "remark1":
        fam = S.remark1_family(presets.remark1_positions(grid.n), S.constant(1.0, grid.n), grid)
    elif kind == "solved":
        ana = _analytic_family(cfg, grid)
        fam = S.family_from_solutions(guess or true, [m.initial_pair() for m in ana],
                                      [m.dirichlet() for m in ana], grid)
    else:
        fam = _analytic_family(cfg, grid)
    rep = I.stability_probe(true, fam, members=int(inv.get("members", 10)), seed=int(cfg.seed),
                            modes=int(inv.get("modes", 4)), amplitude=float(inv.get("amplitude", 1.0)))
    out = _outdir(cfg)
    storage.write_csv(out / "stability.csv", ["member", "LHS", "RHS", "ratio"], rep.table())
    storage.write_report(out / "report.txt", {"command": "stability-probe", "grid": _grid_meta(grid),
                                              **rep.meta, "ratio_stats": rep.stats(), "min_abs_det": rep.min_det,
                                              "all_finite": bool(np.all(rep.finite)),
                                              "failures": {str(k): v for k, v in rep.failures.items()}})
    return 0


def _equation_residual(w, grid, coeffs: CoefficientSet):
    w_t = np.gradient(w, grid.dt, axis=0, edge_order=2)
    w_tt = np.gradient(w_t, grid.dt, axis=0, edge_order=2)
    G = w_tt - coeffs.c**2 * stencils.laplacian(w, grid.h, grid.n) + coeffs.q1 * w_t + coeffs.q0 * w
    for qk, gk in zip(coeffs.q, stencils.gradient(w, grid.h, grid.n)):
        G = G + qk * gk
    return G


def cmd_carleman(cfg: ExperimentConfig) -> int:
    grid, true, _ = prepare(cfg, "carleman")
    car = cfg.carleman
    params = carleman_params(grid, cfg.x0, cfg.geometry.get("sigma"))
    consts = K.CarlemanConstants(**{k: float(v) for k, v in (car.get("constants") or {}).items()})
    source = car.get("field", "synthetic")
    if source == "synthetic":
        w = presets.synthetic_boundary_field(grid, float(car.get("omega", 2.0)))
        G = _equation_residual(w, grid, true)
    elif source == "solved":
        rng = cfg.rng() if cfg.seed is not None else None
        w0, w1, _ = presets.initial_data(car.get("initial", {"preset": "standing-wave"}), grid, rng)
        w = solve(true, w0, w1, None, grid).values
        G = None
    else:
        raise LabError("carleman.field must be synthetic or solved")
    fld = WaveField(w, grid.times, grid)
    rows = K.tau_sweep(fld, G, params, car.get("taus", [1.0, 5.0, 10.0]), true.c, consts)
    out = _outdir(cfg)
    storage.write_csv(out / "tau_sweep.csv", K.CarlemanTerms.COLUMNS, (r.row() for r in rows))
    storage.write_report(out / "report.txt", {
        "command": "carleman", "grid": _grid_meta(grid), "field": source,
        "metric_convention": K.METRIC_CONVENTION,
        "alpha": params.alpha, "delta": params.delta, "sigma": params.sigma, "T0": params.T0,
        "t0": params.t0, "t1": params.t1, "constants": consts.__dict__,
        "C2_tau_note": "O(tau^2) part taken as zero",
        "field_scale": float(np.max(np.abs(w))),
        "bt_total_max": max(r.bt_total for r in rows),
    })
    return 0


def cmd_observability(cfg: ExperimentConfig) -> int:
    grid, true, _ = prepare(cfg, "observability")
    ob = cfg.observability
    data = K.sine_initial_data(grid, cfg.rng(), int(ob.get("members", 10)), int(ob.get("modes", 3)),
                               float(ob.get("amplitude", 1.0)))
    rep = K.observability_probe(true, grid, data, x0=cfg.x0,
                                enforce_geometry=bool(ob.get("enforce_geometry", True)),
                                r_c=float(cfg.geometry.get("r_c", 0.9)))
    out = _outdir(cfg)
    storage.write_csv(out / "observability.csv", ["member", "E0", "trace_sq", "G_sq", "empirical_constant"],
                      rep.table())
    mx = rep.max_constant
    storage.write_report(out / "report.txt", {"command": "observability", "grid": _grid_meta(grid),
                                              **rep.meta, "observed_faces": rep.faces,
                                              "max_empirical_constant": "inf" if math.isinf(mx) else mx,
                                              "failure": rep.failure})
    return 0


HANDLERS = {
    "check-geometry": cmd_check_geometry,
    "simulate": cmd_simulate,
    "recover": cmd_recover,
    "stability-probe": cmd_stability_probe,
    "carleman": cmd_carleman,
    "observability": cmd_observability,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="YAML experiment file")
        sp.add_argument("--output", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, output=args.output, seed=args.seed)
        return HANDLERS[args.command](cfg)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
