import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from czlab import commutator as cm
from czlab import kernels
from czlab.errors import (EmptySampler, InvalidExponents, RealRequired, SupportsOverlap,
                          SupportsTouching)
from czlab.grid import Cube, Grid, GridFunction, indicator
from czlab.spaces import bmo_norm

G4 = Grid.centered(1, 4, 4096)
H = kernels.hilbert()


def _unit_pair(grid=G4):
    return indicator(grid, Cube((0.0,), 1.0)), indicator(grid, Cube((2.0,), 1.0))


def test_constant_symbol_gives_zero():
    f, g = _unit_pair()
    b = G4.sample(lambda x: 0 * x[..., 0] + 3.0)
    assert cm.pairing(b, H, 1, f, g) == 0.0


def test_linear_symbol_integrand_is_constant():
    # (x - y) / (pi (x - y)) = 1/pi on the unit square
    f, g = _unit_pair()
    b = G4.sample(lambda x: x[..., 0])
    assert cm.pairing(b, H, 1, f, g) * np.pi == pytest.approx(1.0, abs=1e-12)


def test_order_zero_matches_double_integral():
    f, g = _unit_pair()
    b = G4.sample(lambda x: x[..., 0])
    exact = (3 * np.log(3) - 4 * np.log(2)) / np.pi
    assert abs(cm.pairing(b, H, 0, f, g) - exact) <= 1e-3
    # midpoint rule in both variables: error O(h^2)
    assert abs(cm.pairing(b, H, 0, f, g) - exact) <= 1e-6 * exact


def test_apply_off_support_log2():
    f = indicator(G4, Cube((0.0,), 1.0))
    val = cm.apply_at(H, f, [[2.0]])[0]
    assert abs(val - np.log(2) / np.pi) <= 1e-4
    zero = cm.apply_off_support(H, f * 0.0, Cube((2.0,), 1.0))
    assert not np.any(zero.values)


def test_apply_is_linear():
    rng = np.random.default_rng(3)
    m = G4.mask(Cube((0.0,), 1.0))
    f1 = GridFunction(G4, rng.normal(size=G4.shape), m)
    f2 = GridFunction(G4, rng.normal(size=G4.shape), m)
    T = Cube((2.0,), 1.0)
    lhs = cm.apply_off_support(H, f1 + f2, T).values
    rhs = cm.apply_off_support(H, f1, T).values + cm.apply_off_support(H, f2, T).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * np.max(np.abs(lhs))


def test_support_errors():
    f, g = _unit_pair()
    b = G4.sample(lambda x: x[..., 0])
    with pytest.raises(SupportsOverlap):
        cm.pairing(b, H, 1, f, f)
    near = indicator(G4, Cube((1.0,), 1.0))
    with pytest.raises(SupportsTouching):
        cm.pairing(b, H, 1, f, near)
    with pytest.raises(RealRequired):
        cm.pairing(GridFunction(G4, 1j * b.values), H, 2, f, g)


GS = Grid.centered(1, 4, 256)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_bilinear_and_adjoint_symmetry(seed, k):
    rng = np.random.default_rng(seed)
    mf = GS.mask(Cube((-2.0,), 1.0))
    mg = GS.mask(Cube((0.5,), 1.5))
    b = GridFunction(GS, rng.normal(size=GS.shape))
    f1, f2 = (GridFunction(GS, rng.normal(size=GS.shape), mf) for _ in range(2))
    g = GridFunction(GS, rng.normal(size=GS.shape), mg)
    a = rng.normal()
    lhs = cm.pairing(b, H, k, f1 * a + f2, g)
    rhs = a * cm.pairing(b, H, k, f1, g) + cm.pairing(b, H, k, f2, g)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)
    adj = cm.pairing(b, H.adjoint(), k, g, f1)
    assert cm.pairing(b, H, k, f1, g) == pytest.approx((-1) ** k * adj, rel=1e-12, abs=1e-14)


def test_adjoint_symmetry_complex_kernel():
    g2 = Grid(2, (0.0, 0.0), 8.0, 32)
    K = kernels.ahlfors_beurling()
    rng = np.random.default_rng(0)
    b = GridFunction(g2, rng.normal(size=g2.shape))
    f = GridFunction(g2, rng.normal(size=g2.shape), g2.mask(Cube((0.0, 0.0), 2.0)))
    g = GridFunction(g2, rng.normal(size=g2.shape), g2.mask(Cube((4.0, 4.0), 2.0)))
    lhs = cm.pairing(b, K, 1, f, g)
    assert lhs == pytest.approx(-cm.pairing(b, K.adjoint(), 1, g, f), rel=1e-12)


def test_translation_covariance_homogeneous():
    # dyadic midpoints make every coordinate difference exact
    K = kernels.rough_homogeneous(1, {"minus": -0.5, "plus": 1.0}, (1.0,))
    g = Grid(1, (0.0,), 16.0, 256)
    rng = np.random.default_rng(1)
    b = GridFunction(g, rng.normal(size=g.shape))
    f = GridFunction(g, rng.normal(size=g.shape), g.mask(Cube((2.0,), 2.0)))
    gg = GridFunction(g, rng.normal(size=g.shape), g.mask(Cube((6.0,), 2.0)))
    base = cm.pairing(b, K, 2, f, gg)

    def shift(F):
        return GridFunction(g, np.roll(F.values, 1), np.roll(F.support, 1))

    assert cm.pairing(shift(b), K, 2, shift(f), shift(gg)) == base


def test_dilation_scaling_homogeneous():
    # b linear: pairing of the twice dilated configuration is 2^(d + k) larger
    K = kernels.rough_homogeneous(1, {"minus": 1.0, "plus": 2.0}, (1.0,))
    g = Grid(1, (0.0,), 16.0, 1024)
    b = g.sample(lambda x: x[..., 0])
    for k in (1, 2):
        small = cm.pairing(b, K, k, indicator(g, Cube((1.0,), 1.0)), indicator(g, Cube((3.0,), 1.0)))
        big = cm.pairing(b, K, k, indicator(g, Cube((2.0,), 2.0)), indicator(g, Cube((6.0,), 2.0)))
        assert big / small == pytest.approx(2.0 ** (1 + k), rel=1e-2)


def test_exponent_config():
    c = cm.ExponentConfig(2, 4, 1, 1)
    assert c.alpha == pytest.approx(0.25) and c.regime == "holder"
    c = cm.ExponentConfig(3, 2, 1, 1)
    assert c.r == pytest.approx(6.0) and c.regime == "lebesgue"
    assert cm.ExponentConfig(2, 2).regime == "bmo"
    assert cm.ExponentConfig(2, 2, 1, 3).p_star == pytest.approx(6 / 5)
    with pytest.raises(InvalidExponents):
        cm.ExponentConfig(1.0, 2)
    with pytest.raises(InvalidExponents):
        cm.ExponentConfig(2, 2, 0)


LOGGRID = Grid.centered(1, 16, 1024)
SAMPLER = cm.BallPairSampler(radii=(0.125, 0.25, 0.5, 1.0, 2.0), count=60, window=((-4.0,), 8.0), gap=0.5)


def test_theta_constant_is_zero():
    b = LOGGRID.sample(lambda x: 0 * x[..., 0] + 1.0)
    est = cm.theta_lower_bound(b, H, cm.ExponentConfig(2, 2), "single", SAMPLER)
    assert est.value == 0.0


def test_theta_monotone_in_sampler():
    b = LOGGRID.sample(lambda x: np.log(np.abs(x[..., 0])))
    cfg = cm.ExponentConfig(2, 2)
    vals = []
    for count in (10, 30, 60):
        s = cm.BallPairSampler(radii=SAMPLER.radii, count=count, window=SAMPLER.window, gap=0.5)
        vals.append(cm.theta_lower_bound(b, H, cfg, "single", s).value)
    assert vals == sorted(vals)


def test_theta_log_bracket():
    cfg = cm.ExponentConfig(2, 2)
    ratios = []
    for n in (1024, 2048):
        g = Grid.centered(1, 16, n)
        b = g.sample(lambda x: np.log(np.abs(x[..., 0])))
        est = cm.theta_lower_bound(b, H, cfg, "single", SAMPLER)
        ratios.append(bmo_norm(b).value / est.value)
        for row in est.rows:
            assert row["ratio"] >= 0
    assert all(0.1 <= r <= 10 for r in ratios)
    assert max(ratios) / min(ratios) <= 2


def test_theta_csv(tmp_path):
    b = LOGGRID.sample(lambda x: x[..., 0])
    cfg = cm.ExponentConfig(2, 2)
    est = cm.theta_lower_bound(b, H, cfg, "single", SAMPLER)
    est.write_csv(tmp_path / "t.csv", cfg)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["mode", "p", "q", "k", "scale", "position", "pairing", "normalizer", "ratio"]
    assert len(rows) == len(est.rows) + 1


def test_multi_requires_p_above_q_and_sampler_nonempty():
    b = LOGGRID.sample(lambda x: x[..., 0])
    s = cm.CubeFamilySampler(sides=(0.5,), window=Cube((-1.0,), 2.0))
    with pytest.raises(InvalidExponents):
        cm.theta_lower_bound(b, H, cm.ExponentConfig(2, 3), "multi", s)
    with pytest.raises(EmptySampler):
        cm.theta_lower_bound(b, H, cm.ExponentConfig(3, 2), "multi",
                             cm.CubeFamilySampler(sides=(0.3,), window=Cube((-1.0,), 2.0)))
