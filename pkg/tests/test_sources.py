import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyplab import sources as S
from hyplab.errors import ConfigError
from hyplab.matrices import assemble_matrix, determinant_field
from hyplab.solver import CoefficientSet, residual

from conftest import unit_grid


def _vals(member, t):
    return member.values(t)


@pytest.fixture
def g2():
    return unit_grid(11, T=0.5)


@pytest.fixture
def g3():
    return unit_grid(7, T=0.5, n=3)


def test_example1_even_members(g2):
    fam = S.example_family(1, g2)
    x, y = g2.mesh
    assert len(fam) == 3 and fam.mode == "standard"
    for t in (0.0, 0.3, -0.45):
        assert np.allclose(_vals(fam[0], t), t)
        assert np.allclose(_vals(fam[1], t), x + t * y)
        assert np.allclose(_vals(fam[2], t), x**2 / 2)


def test_example2_even_members(g2):
    fam = S.example_family(2, g2)
    x, y = g2.mesh
    for t in (0.0, 0.3, -0.45):
        assert np.allclose(_vals(fam[0], t), math.sin(t))
        assert np.allclose(_vals(fam[1], t), math.cos(t) * np.exp(x) + math.sin(t) * np.exp(y))
        assert np.allclose(_vals(fam[2], t), math.cos(t) * np.exp(-x))


def test_example1_odd_members(g3):
    fam = S.example_family(1, g3)
    x1, x2, x3 = g3.mesh
    assert len(fam) == 3
    t = 0.4
    assert np.allclose(_vals(fam[0], t), t)
    assert np.allclose(_vals(fam[1], t), x1 + t * x2)
    assert np.allclose(_vals(fam[2], t), x3 + t / 2 * x1**2)


@pytest.mark.parametrize("kind", [1, 2, 3])
def test_analytic_derivatives_match_finite_differences(kind, g2):
    fam = S.example_family(kind, g2)
    eps = 1e-4
    for mem in fam:
        for t in (0.0, 0.2):
            s = mem.snapshot(t)
            v = [mem.values(t + k * eps) for k in (-2, -1, 0, 1, 2)]
            assert np.allclose(s.R_t, (v[3] - v[1]) / (2 * eps), atol=1e-7)
            assert np.allclose(s.R_tt, (v[3] - 2 * v[2] + v[1]) / eps**2, atol=1e-5)
            assert np.allclose(s.R_ttt, (v[4] - 2 * v[3] + 2 * v[1] - v[0]) / (2 * eps**3), atol=1e-2)


def test_spatial_derivatives_of_members(g2):
    from hyplab import stencils
    fine = unit_grid(81, T=0.1)
    for mem in S.example_family(2, fine):
        s = mem.snapshot(0.0)
        gr = stencils.gradient(s.R, fine.h, 2)
        assert np.allclose(gr[0], s.grad[0], atol=1e-3) and np.allclose(gr[1], s.grad[1], atol=1e-3)
        assert np.allclose(stencils.laplacian(s.R, fine.h, 2)[1:-1, 1:-1], s.lap[1:-1, 1:-1], atol=1e-3)


def test_member_count_and_parity():
    for n, m in [(2, 3), (3, 3), (4, 4), (5, 4), (6, 5)]:
        assert S.member_count(n) == m
    g = unit_grid(5, n=4, T=0.1)
    fam = S.example_family(1, g)
    assert len(fam) == 4
    with pytest.raises(ConfigError):
        S.RFamily(fam.members[:3], g, "broken")


class TestEvaluateSource:
    def _profile(self, g, seed=1):
        rng = np.random.default_rng(seed)
        return S.SourceProfile.from_vector(rng.standard_normal((g.n + 3,) + g.shape))

    def test_zero_profile(self, g2):
        for mem in S.example_family(2, g2):
            assert not np.any(S.evaluate_source(mem, S.SourceProfile.zeros(g2))(0.3))

    def test_member_t(self, g2):
        P = self._profile(g2)
        src = S.evaluate_source(S.example_family(1, g2)[0], P)
        for t in (0.0, 0.25, -0.5):
            assert np.allclose(src(t), P.f1 + t * P.f0, rtol=0, atol=1e-14)

    def test_member_x1_plus_t_x2(self, g2):
        P = self._profile(g2, 2)
        x, y = g2.mesh
        src = S.evaluate_source(S.example_family(1, g2)[1], P)
        for t in (0.0, 0.25, -0.5):
            ref = P.f0 * (x + t * y) + P.f1 * y + P.f[0] + t * P.f[1]
            assert np.allclose(src(t), ref, rtol=0, atol=1e-14)

    def test_solved_member_source_matches_snapshot_form(self, g2):
        P = self._profile(g2, 3)
        ana = S.example_family(1, g2)
        fam = S.family_from_solutions(CoefficientSet.constant(g2), [m.initial_pair() for m in ana],
                                      [m.dirichlet() for m in ana[:2]] + [lambda t: ana[2].values(t) * 0 +
                                                                          g2.mesh[0] ** 2 / 2 + t * t / 2],
                                      g2, steps=3)
        s0 = S.evaluate_source(fam[1], P)(0.0)
        ref = S.evaluate_source(ana[1], P)(0.0)
        assert np.allclose(s0, ref, atol=1e-12)

    def test_grid_mismatch(self, g2):
        with pytest.raises(ValueError):
            S.evaluate_source(S.example_family(1, g2)[0], S.SourceProfile.zeros(unit_grid(9)))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), t=st.floats(-0.5, 0.5), kind=st.sampled_from([1, 2]),
       seed=st.integers(0, 2**16))
def test_evaluate_source_linear(a, b, t, kind, seed):
    g = unit_grid(7, T=0.5)
    rng = np.random.default_rng(seed)
    P1 = S.SourceProfile.from_vector(rng.standard_normal((5,) + g.shape))
    P2 = S.SourceProfile.from_vector(rng.standard_normal((5,) + g.shape))
    for mem in S.example_family(kind, g):
        lhs = S.evaluate_source(mem, a * P1 + b * P2)(t)
        rhs = a * S.evaluate_source(mem, P1)(t) + b * S.evaluate_source(mem, P2)(t)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (abs(a) + abs(b) + 1))


class TestExample3:
    def test_default_matches_example2_functions(self, g2):
        e2 = S.example_family(2, g2)
        e3 = S.example_family(3, g2)
        for m2, m3 in zip(e2, e3):
            for t in (0.0, 0.3):
                assert np.allclose(m2.values(t), m3.values(t))

    def test_rejects_nonnegative_a(self, g2):
        with pytest.raises(ConfigError):
            S.example_family(3, g2, {"a": 0.5})

    def test_rejects_flat_first_function(self, g2):
        f = [S.coordinate(1, 2), S.exp_coordinate(2, 2)]
        with pytest.raises(ConfigError):
            S.example_family(3, g2, {"f": f})

    def test_rejects_violated_lower_bound(self, g2):
        with pytest.raises(ConfigError):
            S.example_family(3, g2, {"r": [10.0, 1.0]})

    def test_rejects_bad_time_functions(self, g2):
        with pytest.raises(ConfigError):
            S.example_family(3, g2, {"g": S.SIN, "h": S.COS})

    def test_rejects_f_depending_on_later_coordinates(self, g2):
        f = [S.exp_coordinate(2, 2), S.exp_coordinate(2, 2)]
        with pytest.raises(ConfigError):
            S.example_family(3, g2, {"f": f})


def _example1_exact_solutions(g):
    """Example-1 pairs with boundary data of exact solutions of w_tt = Lap w."""
    x, y = g.mesh
    return [lambda t: np.full(g.shape, t), lambda t: x + t * y, lambda t: x**2 / 2 + t * t / 2]


class TestFamilyFromSolutions:
    def test_agrees_with_closed_forms(self):
        g = unit_grid(21, T=0.5)
        ana = S.example_family(1, g)
        exact = _example1_exact_solutions(g)
        co = CoefficientSet.constant(g)
        fam = S.family_from_solutions(co, [m.initial_pair() for m in ana], exact, g)
        for mem, ex in zip(fam, exact):
            err = max(np.max(np.abs(mem.values(t) - ex(t))) for t in g.times)
            assert err < 1e-12
            assert residual(mem.field, co) < 1e-9
        mf = assemble_matrix(fam, "plain")
        assert np.allclose(mf.values, assemble_matrix(ana, "plain").values, atol=1e-9)
        assert np.allclose(determinant_field(mf).det, -1.0, atol=1e-9)

    def test_zero_pair_zero_boundary(self, g2):
        z = np.zeros(g2.shape)
        fam = S.family_from_solutions(CoefficientSet.constant(g2), [(z, z)] * 3, None, g2)
        assert all(not np.any(m.field.values) for m in fam)

    def test_arbitrary_guess_residual(self, g2):
        x, y = g2.mesh
        co = CoefficientSet(1 + 0.1 * x, 0.2 * y, 0.1, (0.05, -0.05))
        ana = S.example_family(2, g2)
        fam = S.family_from_solutions(co, [m.initial_pair() for m in ana], [m.dirichlet() for m in ana], g2)
        for m in fam:
            assert residual(m.field, co) < 1e-8

    def test_exact_rows_at_t0(self, g2):
        ana = S.example_family(2, g2)
        co = CoefficientSet.constant(g2)
        fam = S.family_from_solutions(co, [m.initial_pair() for m in ana], [m.dirichlet() for m in ana], g2,
                                      steps=2)
        for a, m in zip(ana, fam):
            sa, sm = a.snapshot(0.0), m.snapshot(0.0)
            assert np.array_equal(sa.R, sm.R) and np.array_equal(sa.R_t, sm.R_t)
            assert sm.R_ttt is not None

    def test_pair_count_mismatch(self, g2):
        z = np.zeros(g2.shape)
        with pytest.raises(ConfigError):
            S.family_from_solutions(CoefficientSet.constant(g2), [(z, z)] * 3, [None, None], g2)


def test_sine_series_profile_properties():
    g = unit_grid(21)
    P = S.sine_series_profile(g, np.random.default_rng(5), modes=4, amplitude=1.0)
    Q = S.sine_series_profile(g, np.random.default_rng(5), modes=4, amplitude=1.0)
    assert np.array_equal(P.as_vector(), Q.as_vector())
    v = P.as_vector()
    assert v.shape == (5,) + g.shape
    assert np.max(np.abs(v[:, g.boundary_mask])) < 1e-15
    assert P.max_abs() <= 1.0 + 1e-12


def test_profile_vector_roundtrip():
    g = unit_grid(9)
    v = np.random.default_rng(0).standard_normal((5,) + g.shape)
    P = S.SourceProfile.from_vector(v)
    assert np.array_equal(P.as_vector(), v)
    assert np.allclose((2 * P).as_vector(), 2 * v)
    assert P.squared_norm(g) >= 0
