import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from czlab import jacobian as jc
from czlab.errors import (EnumerationTooLarge, InvalidGrid, NotMeanZero, OutOfGrid, OutsideBall,
                          SupportExceedsQ)
from czlab.grid import Cube, Grid, GridFunction

G = Grid(2, (0.0, 0.0), 1.0, 64)
T = Grid(2, (0.0, 0.0), 1.0, 64, periodic=True)


def _affine(A, grid=G, Q=Cube((0.375, 0.375), 0.25)):
    X, Y = grid.coords()
    phi = jc.bump_function(grid, Q).values
    return jc.VectorField(grid, [(A[0][0] * X + A[0][1] * Y) * phi, (A[1][0] * X + A[1][1] * Y) * phi])


def test_affine_det_exact_on_plateau():
    A = [[0.75, 0.125], [-0.5, 1.5]]
    J = jc.jacobian_det(_affine(A)).values[26:38, 26:38]
    assert np.all(J == np.linalg.det(np.array(A)))


def test_identity_map_has_unit_jacobian():
    J = jc.jacobian_det(_affine([[1.0, 0.0], [0.0, 1.0]])).values[26:38, 26:38]
    assert np.all(J == 1.0)


def _random_field(seed, grid=G):
    rng = np.random.default_rng(seed)
    phi = jc.bump_function(grid, Cube((0.375,) * grid.d, 0.25)).values
    return jc.VectorField(grid, [rng.normal(size=grid.shape) * phi for _ in range(grid.d)])


@given(st.integers(0, 10_000))
def test_swap_negates_exactly(seed):
    u = _random_field(seed)
    assert np.array_equal(jc.jacobian_det(u.swapped(0, 1)).values, -jc.jacobian_det(u).values)


@given(st.integers(0, 10_000))
def test_scaling_by_two_is_exact(seed):
    u = _random_field(seed)
    assert np.array_equal(jc.jacobian_det(u.scaled(2.0)).values, 4 * jc.jacobian_det(u).values)


def test_three_dimensional_alternation():
    g = Grid(3, (0.0,) * 3, 1.0, 16)
    u = _random_field(1, g)
    J = jc.jacobian_det(u).values
    assert np.array_equal(jc.jacobian_det(u.swapped(0, 2)).values, -J)


@given(st.integers(0, 10_000))
def test_integral_vanishes(seed):
    res = jc.integral_check(_random_field(seed))
    assert abs(res["integral"]) <= 1e-12 * max(res["scale"], 1.0)


def test_integral_of_smooth_field_shrinks():
    vals = []
    for n in (32, 64, 128):
        g = Grid(2, (0.0, 0.0), 1.0, n)
        X, Y = g.coords()
        phi = jc.bump_function(g, Cube((0.375, 0.375), 0.25)).values
        u = jc.VectorField(g, [np.sin(3 * X) * phi, np.cos(2 * Y + X) * phi])
        vals.append(jc.integral_check(u))
    for v in vals:
        assert abs(v["integral"]) <= v["scale"]


def test_bump_gradient_and_support():
    Q = Cube((0.375, 0.375), 0.25)
    phi = jc.bump_function(G, Q)
    assert np.all(phi.at(G.cells(Q)) == 1.0)
    assert np.all(phi.values[~G.mask(Q.dilate(2))] == 0.0)
    assert jc.grad_norm(phi.values, G, np.inf) <= 3 / Q.side * (1 + 1e-12)


def test_bump_translation_exact():
    a = jc.bump_function(G, Cube((0.375, 0.375), 0.25)).values
    b = jc.bump_function(G, Cube((0.375 + 3 / 64, 0.375), 0.25)).values
    assert np.array_equal(np.roll(a, 3, axis=0), b)


def test_bump_needs_room():
    with pytest.raises(OutOfGrid):
        jc.bump_function(G, Cube((0.0, 0.0), 0.25))


def test_lift_of_zero():
    g = Grid(2, (-0.5, -0.5), 2.0, 128)
    lift = jc.lift_derivative_to_jacobian(g.zeros(), 0, Cube((0.25, 0.25), 0.5))
    assert not np.any(jc.jacobian_det(lift.u).values)


def test_lift_rejects_support_near_boundary():
    with pytest.raises(SupportExceedsQ):
        jc.lift_derivative_to_jacobian(G.ones(Cube((0.25, 0.25), 0.5)), 0, Cube((0.25, 0.25), 0.5))


def _cos4(g):
    X, Y = g.coords()
    inside = (np.abs(X - 0.5) < 0.2) & (np.abs(Y - 0.5) < 0.2)
    cx, cy = np.cos(np.pi * (X - 0.5) / 0.4), np.cos(np.pi * (Y - 0.5) / 0.4)
    sx = np.sin(np.pi * (X - 0.5) / 0.4)
    w = np.where(inside, cx ** 4 * cy ** 4, 0.0)
    dw = np.where(inside, -4 * cx ** 3 * sx * (np.pi / 0.4) * cy ** 4, 0.0)
    return GridFunction(g, w), dw


def test_lift_converges_first_order():
    errs = []
    for n in (64, 128, 256):
        g = Grid(2, (-0.5, -0.5), 2.0, n)
        w, dw = _cos4(g)
        lift = jc.lift_derivative_to_jacobian(w, 0, Cube((0.25, 0.25), 0.5), exponents=(2,))
        errs.append(np.max(np.abs(jc.jacobian_det(lift.u).values - dw)))
        assert len(lift.grad_norms[2.0]) == 2
    assert errs[1] <= 0.6 * errs[0] and errs[2] <= 0.6 * errs[1]


def test_div_solve_single_mode():
    t = Grid(1, (0.0,), 1.0, 256, periodic=True)
    x = t.coords()[0]
    sol = jc.div_solve(GridFunction(t, np.sin(2 * np.pi * x)))
    assert sol.residual <= 1e-12
    # spectral inverse of d/dx on one mode
    assert np.max(np.abs(sol.v.comps[0] + np.cos(2 * np.pi * x) / (2 * np.pi))) <= 1e-12


@given(st.integers(0, 10_000))
def test_div_solve_random(seed):
    g = np.random.default_rng(seed).normal(size=T.shape)
    sol = jc.div_solve(GridFunction(T, g - g.mean()))
    assert sol.residual <= 1e-8


def test_div_solve_requires_mean_zero():
    with pytest.raises(NotMeanZero):
        jc.div_solve(T.ones())


def test_vector_field_round_trip(tmp_path):
    u = _random_field(4)
    u.save(tmp_path / "u")
    back = jc.VectorField.load(tmp_path / "u")
    assert np.array_equal(back.comps, u.comps)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_roots_of_unity(d):
    tuples = list(itertools.product(range(1, 6), repeat=d))
    for m in jc.roots_of_unity_moments(d, tuples, N=5):
        assert m.matches, (d, m.tuple, m.coeffs)


def test_roots_examples():
    a, b = jc.roots_of_unity_moments(2, [(1, 1), (1, 2)])
    assert a.value == 1 and b.value == 0


def test_roots_tuple_length():
    with pytest.raises(InvalidGrid):
        jc.roots_of_unity_moments(3, [(1, 2)])


def test_roots_constant_tuple_moment():
    (m,) = jc.roots_of_unity_moments(3, [(2, 2, 2)])
    assert m.is_rational and m.value == 1


def test_roots_enumeration_cap():
    with pytest.raises(EnumerationTooLarge):
        jc.roots_of_unity_moments(4, [(1, 2, 3, 4)], N=6, cap=1000)


def test_gamma_constant_symbol_is_zero():
    g = Grid(2, (-1.0, -1.0), 2.0, 64)
    est = jc.gamma_lower_bound(GridFunction(g, 3.0), (2, 2), jc.GammaSampler((16, 32), count=20))
    assert est.value <= 1e-12


def test_gamma_monotone_in_sampler():
    g = Grid(2, (-1.0, -1.0), 2.0, 64)
    X, Y = g.coords()
    b = GridFunction(g, np.log(np.hypot(X, Y)))
    small = jc.gamma_lower_bound(b, (2, 2), jc.GammaSampler((8, 16, 32), count=20)).value
    large = jc.gamma_lower_bound(b, (2, 2), jc.GammaSampler((8, 16, 32), count=80)).value
    assert large >= small > 0


def _square():
    return jc.SConvexProblem(np.vstack([np.eye(2), -np.eye(2)]))


def test_inscribed_radius_square():
    assert _square().beta == pytest.approx(1 / np.sqrt(2), abs=1e-6)


def test_sconvex_zero_and_small():
    P = _square()
    assert jc.sconvex_represent(P, np.zeros(2)).residuals == [0.0]
    rep = jc.sconvex_represent(P, [0.3, 0.3])
    assert rep.bound_holds
    assert rep.residuals[10] <= 2.0 ** -10 * P.beta


def test_sconvex_outside():
    with pytest.raises(OutsideBall):
        jc.sconvex_represent(_square(), [0.8, 0.0])


def test_span_single_round_for_derivative():
    rel = []
    for n in (64, 128):
        t = Grid(2, (0.0, 0.0), 1.0, n, periodic=True)
        _, dw = _cos4(t)
        sp = jc.jacobian_span_represent(GridFunction(t, dw - dw.mean()), rounds=1)
        rel.append(sp.residuals[1] / sp.residuals[0])
        assert rel[-1] <= 2 * t.h
    assert rel[1] <= 0.5 * rel[0]


def test_span_requires_mean_zero():
    with pytest.raises(NotMeanZero):
        jc.jacobian_span_represent(T.ones())
