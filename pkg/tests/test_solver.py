import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyplab import presets
from hyplab.errors import CFLError, CompatibilityError, SamplingError
from hyplab.geometry import build_grid
from hyplab.solver import (CoefficientSet, WaveField, energy, initial_acceleration, initial_energy, march,
                           neumann_trace, residual, solve, solve_traces, solve_with_source,
                           trace_time_derivative)

from conftest import standing_error, unit_grid


def _smooth_coeffs(g, amp=0.1):
    x, y = g.mesh
    b = np.sin(np.pi * x) * np.sin(np.pi * y)
    return CoefficientSet(np.sqrt(1 + amp * b), amp * b * x, amp * b, (amp * b, -amp * b * y))


def test_coefficient_set_rejects_nonpositive_speed(grid21):
    with pytest.raises(ValueError):
        CoefficientSet(np.zeros(grid21.shape), 0, 0, (0, 0))


def test_coefficient_c0(grid21):
    c = np.full(grid21.shape, 2.0)
    c[0, 0] = 0.25
    assert CoefficientSet(c, 0, 0, (0, 0)).c0 == 4.0


class TestInitialAcceleration:
    def test_zero_position_no_damping(self, grid21):
        co = CoefficientSet.constant(grid21)
        assert np.all(initial_acceleration(co, np.zeros(grid21.shape), np.ones(grid21.shape), grid21) == 0)

    def test_sine_mode(self):
        errs = []
        for res in (21, 41):
            g = unit_grid(res)
            w0 = presets.standing_wave(g, (1, 1))[0]
            a = initial_acceleration(CoefficientSet.constant(g), w0, 0.0, g)
            errs.append(np.max(np.abs(a - (-2 * np.pi**2 * w0))[1:-1, 1:-1]))
        # second order: pi^4 h^2 / 6 bounds the leading truncation term
        assert errs[1] < np.pi**4 * 0.025**2 / 6 and 3 < errs[0] / errs[1] < 5

    def test_damping_only(self, grid21):
        co = CoefficientSet.constant(grid21, q1=1.0)
        a = initial_acceleration(co, np.zeros(grid21.shape), np.ones(grid21.shape), grid21)
        assert np.all(a == -1.0)


class TestSolve:
    def test_standing_wave_error_is_small(self):
        assert standing_error(41) < 2e-3

    def test_zero_data_is_exactly_zero(self, grid21):
        f = solve(_smooth_coeffs(grid21), np.zeros(grid21.shape), 0.0, None, grid21)
        assert not np.any(f.values)
        assert f.values.shape == (grid21.nt,) + grid21.shape

    def test_time_reversal_symmetry(self):
        g = unit_grid(21, T=2.0)
        x, y = g.mesh
        co = CoefficientSet(1 + 0.2 * x * y, 0.0, 0.3 * y, (0.0, 0.0))
        w0 = np.sin(np.pi * x) * np.sin(2 * np.pi * y)
        f = solve(co, w0, 0.0, None, g)
        assert np.max(np.abs(f.values - f.values[::-1])) < 1e-13

    def test_cfl_checked(self):
        g = unit_grid(21)
        fast = CoefficientSet.constant(g, c=3.0)
        with pytest.raises(CFLError):
            solve(fast, np.zeros(g.shape), 0.0, None, g)

    def test_incompatible_boundary_data(self, grid21):
        co = CoefficientSet.constant(grid21)
        with pytest.raises(CompatibilityError):
            solve(co, np.ones(grid21.shape), 0.0, None, grid21)

    def test_dirichlet_enforced(self, grid21):
        g = grid21
        x, y = g.mesh
        co = _smooth_coeffs(g)

        def bc(t):
            return np.cos(t) * (x + y**2)

        f = solve(co, x + y**2, 0.0, bc, g)
        m = g.boundary_mask
        for k, t in enumerate(f.times):
            assert np.max(np.abs(f.values[k][m] - bc(t)[m])) <= 1e-14

    def test_batched_solve_matches_single(self, grid21):
        g = grid21
        w = presets.standing_wave(g, (1, 2))[0]
        co = _smooth_coeffs(g)
        both = solve(co, np.stack([w, 2 * w]), 0.0, None, g)
        one = solve(co, w, 0.0, None, g)
        assert np.allclose(both.values[:, 0], one.values, rtol=0, atol=1e-15)
        assert np.allclose(both.values[:, 1], 2 * one.values, rtol=0, atol=1e-14)

    def test_marching_order(self, grid21):
        ks = [k for k, _ in march(CoefficientSet.constant(grid21), grid21, steps=3)]
        assert ks == [0, 1, 2, 3, -1, -2, -3]


class TestSolveWithSource:
    def test_zero_source(self, grid21):
        f = solve_with_source(CoefficientSet.constant(grid21), lambda t: np.zeros(grid21.shape), grid21)
        assert not np.any(f.values)

    def test_superposition(self, grid21):
        g = grid21
        x, y = g.mesh
        co = _smooth_coeffs(g)
        s1 = lambda t: np.sin(3 * t) * x * (1 - x) * y  # noqa: E731
        s2 = lambda t: np.exp(-t * t) * np.cos(2 * y)  # noqa: E731
        a = solve_with_source(co, s1, g).values
        b = solve_with_source(co, s2, g).values
        ab = solve_with_source(co, lambda t: s1(t) + s2(t), g).values
        assert np.max(np.abs(ab - (a + b))) <= 1e-12 * np.max(np.abs(ab))

    def test_constant_source_gives_t_squared_before_boundary_signal(self):
        g = unit_grid(41, T=0.2)
        f = solve_with_source(CoefficientSet.constant(g), lambda t: np.full(g.shape, 2.0), g)
        centre = (20, 20)
        # numerical signal travels one cell per step; 20 cells to the boundary
        for k, t in enumerate(f.times):
            if abs(t) / g.dt < 19:
                assert f.values[k][centre] == pytest.approx(t * t, abs=1e-14)

    def test_sampled_source_array(self, grid21):
        g = grid21
        x = g.mesh[0]
        arr = np.stack([np.cos(t) * x * (1 - x) for t in g.times])
        a = solve_with_source(CoefficientSet.constant(g), arr, g).values
        b = solve_with_source(CoefficientSet.constant(g), lambda t: np.cos(t) * x * (1 - x), g).values
        assert np.array_equal(a, b)


class TestNeumannTrace:
    def _field(self, g, fn):
        vals = np.stack([fn(*g.mesh, t) for t in g.times])
        return WaveField(vals, g.times, g)

    def test_linear_field(self, grid21):
        f = self._field(grid21, lambda x, y, t: x + 0 * t)
        tr = neumann_trace(f, ["right"])
        assert np.allclose(tr.values, 1.0, atol=1e-12)
        assert tr.order == 0 and tr.values.shape == (grid21.nt, 21)

    def test_constant_field(self, grid21):
        tr = neumann_trace(self._field(grid21, lambda x, y, t: 3.0 + 0 * x))
        assert np.all(np.abs(tr.values) < 1e-12)

    def test_standing_wave_trace_second_order(self):
        errs = []
        for res in (21, 41):
            g = unit_grid(res, T=0.5)
            om = math.sqrt(2) * math.pi
            f = self._field(g, lambda x, y, t: np.sin(np.pi * x) * np.sin(np.pi * y) * np.cos(om * t))
            tr = neumann_trace(f, ["right"])
            y = tr.coords[:, 1]
            ex = -np.pi * np.sin(np.pi * y)[None] * np.cos(om * g.times)[:, None]
            errs.append(np.max(np.abs(tr.values - ex)))
        assert 3 < errs[0] / errs[1] < 5

    def test_empty_observed_boundary(self):
        g = unit_grid(11, faces={"gamma0": ["left", "right", "top", "bottom"], "gamma1": []})
        f = self._field(g, lambda x, y, t: x + 0 * t)
        with pytest.raises(ValueError):
            neumann_trace(f)

    def test_solve_traces_matches_full_field(self, grid21):
        g = grid21
        co = _smooth_coeffs(g)
        w0 = presets.standing_wave(g, (2, 1))[0]
        full = neumann_trace(solve(co, w0, 0.0, None, g))
        fast = solve_traces(co, g, w0=w0)
        assert np.array_equal(full.values, fast.values)
        assert full.faces == ["x1+", "x2+"]


class TestTraceTimeDerivative:
    def _trace(self, g, fn):
        vals = np.stack([fn(g.mesh[0], g.mesh[1], t) for t in g.times])
        return neumann_trace(WaveField(vals, g.times, g), ["right"])

    def test_constant_in_time(self, grid21):
        d = trace_time_derivative(self._trace(grid21, lambda x, y, t: x * y + 0 * t), 1)
        assert np.max(np.abs(d.values)) < 1e-10
        assert len(d.times) == grid21.nt - 2 and d.order == 1

    def test_quadratic_exact(self, grid21):
        # trace of x * (1 + y) t^2 on the right face is (1 + y) t^2
        d = trace_time_derivative(self._trace(grid21, lambda x, y, t: x * (1 + y) * t * t), 2)
        y = d.coords[:, 1]
        assert np.allclose(d.values, 2 * (1 + y)[None], rtol=0, atol=1e-8)

    def test_cosine_second_order(self):
        errs = []
        for res in (21, 41):
            g = unit_grid(res, T=1.0)
            om = 3.0
            d = trace_time_derivative(self._trace(g, lambda x, y, t: x * np.cos(om * t) + 0 * y), 2)
            errs.append(np.max(np.abs(d.values + om**2 * np.cos(om * d.times)[:, None])))
        assert errs[1] < 1e-3 and 3 < errs[0] / errs[1] < 5

    def test_third_order_shortens_by_two(self, grid21):
        d = trace_time_derivative(self._trace(grid21, lambda x, y, t: x * t**3), 3)
        assert len(d.times) == grid21.nt - 4
        assert np.allclose(d.values, 6.0, atol=1e-6)

    def test_insufficient_samples(self, grid21):
        tr = self._trace(grid21, lambda x, y, t: x * t)
        tr.values, tr.times = tr.values[:3], tr.times[:3]
        with pytest.raises(SamplingError):
            trace_time_derivative(tr, 3)


class TestEnergy:
    def test_zero_field(self, grid21):
        f = WaveField(np.zeros((grid21.nt,) + grid21.shape), grid21.times, grid21)
        e_w, phys = energy(f, CoefficientSet.constant(grid21))
        assert not np.any(e_w) and not np.any(phys)

    def test_initial_energy_of_sine_mode(self):
        errs = []
        for res in (41, 81):
            g = unit_grid(res)
            w0 = presets.standing_wave(g, (1, 1))[0]
            errs.append(abs(float(initial_energy(CoefficientSet.constant(g), w0, 0.0, g)) - (0.25 + np.pi**2 / 2)))
        assert errs[1] < 2 * np.pi**4 * 0.0125**2 and 3 < errs[0] / errs[1] < 5

    def test_physical_energy_conserved_over_six_units(self):
        g = build_grid([(0, 1), (0, 1)], 101, None, 0.0025, 6.0)
        co = CoefficientSet.constant(g)
        w0 = presets.standing_wave(g, (1, 1))[0]
        K = g.nsteps
        vals = np.empty((K + 1,) + g.shape)
        for k, w in march(co, g, w0, 0.0):
            if k < 0:
                break
            vals[k] = w
        fwd = WaveField(vals, g.dt * np.arange(K + 1), g)
        _, phys = energy(fwd, co)
        drift = np.max(np.abs(phys - phys[0])) / phys[0]
        assert drift <= 1e-3


class TestResidual:
    def test_zero(self, grid21):
        f = WaveField(np.zeros((grid21.nt,) + grid21.shape), grid21.times, grid21)
        assert residual(f, CoefficientSet.constant(grid21), lambda t: np.zeros(grid21.shape)) == 0.0

    def test_t_squared(self, grid21):
        g = grid21
        vals = np.stack([np.full(g.shape, t * t) for t in g.times])
        r = residual(WaveField(vals, g.times, g), CoefficientSet.constant(g), lambda t: np.full(g.shape, 2.0))
        assert r < 1e-10

    def test_solver_output_satisfies_its_own_scheme(self, grid21):
        g = grid21
        x, y = g.mesh
        co = _smooth_coeffs(g)
        S = lambda t: np.sin(2 * t) * x * (1 - x) * y * (1 - y)  # noqa: E731
        f = solve_with_source(co, S, g)
        scale = np.sqrt(np.sum(f.values**2) * g.dt * np.prod(g.h)) / g.dt**2
        assert residual(f, co, S) <= 1e-10 * scale

    def test_exact_field_residual_second_order(self):
        r = []
        for res in (21, 41):
            g = unit_grid(res, T=1.0)
            om = math.sqrt(2) * math.pi
            w0 = presets.standing_wave(g, (1, 1))[0]
            vals = np.stack([w0 * math.cos(om * t) for t in g.times])
            r.append(residual(WaveField(vals, g.times, g), CoefficientSet.constant(g)))
        assert 3 < r[0] / r[1] < 5


def _bump(g, centre, rho):
    r = np.sqrt(sum((xk - ck) ** 2 for xk, ck in zip(g.mesh, centre)))
    return np.where(r < rho, (1 - (r / rho) ** 2) ** 4, 0.0), r


@settings(max_examples=15, deadline=None)
@given(cx=st.floats(0.35, 0.65), cy=st.floats(0.35, 0.65), rho=st.floats(0.05, 0.15),
       speed=st.floats(0.5, 1.0), steps=st.integers(1, 30))
def test_finite_propagation_numerical_cone(cx, cy, rho, speed, steps):
    """Outside the stencil's domain of dependence the solution is exactly zero."""
    g = unit_grid(41, T=0.5)
    w0, r = _bump(g, (cx, cy), rho)
    co = CoefficientSet.constant(g, c=speed)
    f = solve(co, w0, 0.0, None, g, steps=steps)
    for k, t in enumerate(f.times):
        reach = rho + abs(t) / g.dt * g.h[0] + 2 * g.h[0]
        outside = r > reach
        assert np.max(np.abs(f.values[k][outside]), initial=0.0) <= 1e-12


def test_finite_propagation_leak_shrinks_with_refinement():
    """Dispersive leakage past the physical cone vanishes under refinement."""
    leaks = []
    for res in (51, 101, 201):
        g = unit_grid(res, T=0.2)
        w0, r = _bump(g, (0.5, 0.5), 0.1)
        f = solve(CoefficientSet.constant(g), w0, 0.0, None, g)
        leaks.append(np.max(np.abs(f.at(0.2)[r > 0.1 + 0.2 + 2 * g.h[0]])))
    assert leaks[0] > leaks[1] > leaks[2]


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), m1=st.integers(1, 3), m2=st.integers(1, 3))
def test_source_linearity_property(a, b, m1, m2):
    g = unit_grid(13, T=0.5)
    x, y = g.mesh
    co = _smooth_coeffs(g, 0.2)
    s1 = lambda t: np.cos(m1 * t) * np.sin(m1 * np.pi * x) * y  # noqa: E731
    s2 = lambda t: t * np.sin(m2 * np.pi * y) * x * x  # noqa: E731
    u1 = solve_with_source(co, s1, g).values
    u2 = solve_with_source(co, s2, g).values
    u = solve_with_source(co, lambda t: a * s1(t) + b * s2(t), g).values
    ref = a * u1 + b * u2
    assert np.max(np.abs(u - ref)) <= 1e-12 * max(np.max(np.abs(ref)), 1e-300) + 1e-300


@settings(max_examples=10, deadline=None)
@given(amp=st.floats(0.0, 0.3), w=st.floats(0.5, 3.0))
def test_dirichlet_property(amp, w):
    g = unit_grid(13, T=0.5)
    x, y = g.mesh
    co = _smooth_coeffs(g, amp)

    def bc(t):
        return np.sin(w * t + x) * (1 + y)

    f = solve(co, bc(0.0), 0.0, bc, g)
    m = g.boundary_mask
    err = max(np.max(np.abs(f.values[k][m] - bc(t)[m])) for k, t in enumerate(f.times))
    assert err <= 1e-14
