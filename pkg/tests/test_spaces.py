import numpy as np
import pytest
from hypothesis import given, strategies as st

from czlab import kernels, spaces
from czlab.errors import NonPositiveWeight, TooFewScales
from czlab.grid import Ball, Cube, Grid, GridFunction

G = Grid(1, (0.0,), 1.0, 512)
G2 = Grid(2, (0.0, 0.0), 1.0, 32)


def test_bmo_of_half_indicator():
    b = G.sample(lambda x: (x[..., 0] < 0.5).astype(float))
    assert spaces.bmo_norm(b).value == pytest.approx(0.5, abs=1e-14)


def test_bmo_of_constant_is_zero():
    assert spaces.bmo_norm(GridFunction(G, 3.0)).value == 0.0


@given(st.floats(-5, 5), st.floats(0.1, 10))
def test_bmo_affine_behaviour(c, t):
    b = G.sample(lambda x: np.log(np.abs(x[..., 0] - 0.3)))
    base = spaces.bmo_norm(b).value
    assert spaces.bmo_norm(b * t + c).value == pytest.approx(t * base, rel=1e-9)


def test_holder_of_identity():
    b = G.sample(lambda x: x[..., 0])
    assert spaces.holder_seminorm(b, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_holder_of_square_root():
    b = G.sample(lambda x: np.sqrt(x[..., 0]))
    assert spaces.holder_seminorm(b, 0.5) == pytest.approx(1.0, rel=0.05)


def test_holder_sampled_is_lower_estimate():
    b = G.sample(lambda x: np.sqrt(x[..., 0]))
    full = spaces.holder_seminorm(b, 0.5)
    part = spaces.holder_seminorm(b, 0.5, max_pairs=5000, seed=3)
    assert part <= full and part > 0.5 * full


@pytest.mark.parametrize("func,label", [
    (lambda x: 0 * x[..., 0] + 2.0, "Constant"),
    (lambda x: np.log(np.abs(x[..., 0] - 0.3)), "BMO"),
    (lambda x: (x[..., 0] < 0.5).astype(float), "BMO"),
    (lambda x: np.sqrt(x[..., 0]), "Holder"),
    (lambda x: np.abs(x[..., 0] - 0.5) ** -0.5, "None"),
])
def test_classify(func, label):
    cl = spaces.oscillation_classify(G.sample(func))
    assert cl.label.startswith(label)


def test_classify_sqrt_slope():
    cl = spaces.oscillation_classify(G.sample(lambda x: np.sqrt(x[..., 0])))
    assert cl.slope == pytest.approx(0.5, abs=0.05)


def test_classify_needs_scales():
    with pytest.raises(TooFewScales):
        spaces.oscillation_classify(Grid(1, (0.0,), 1.0, 16).sample(lambda x: x[..., 0]))


def test_profile_csv(tmp_path):
    prof = spaces.oscillation_profile(G.sample(lambda x: x[..., 0]))
    spaces.write_profile_csv(tmp_path / "p.csv", prof)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "scale,position,oscillation"


def test_ap_of_unit_weight_is_one():
    assert spaces.ap_characteristic(G2.ones(), 2.0).value == 1.0


def _ap_brute(w, p, lattice):
    best = 0.0
    for Q in lattice.cubes():
        v = w.at(w.grid.cells(Q))
        best = max(best, v.mean() * np.mean(v ** (-1 / (p - 1))) ** (p - 1))
    return best


def test_ap_power_weight_matches_brute_force():
    g = Grid(1, (0.0,), 1.0, 128)
    w = g.sample(lambda x: np.abs(x[..., 0] - 0.5) ** 0.5)
    lat = spaces.CubeLattice(g)
    assert spaces.ap_characteristic(w, 2.0, lat).value == pytest.approx(_ap_brute(w, 2.0, lat), rel=1e-2)


@given(st.floats(-0.8, 0.8), st.sampled_from([1.5, 2.0, 3.0]))
def test_ap_duality(a, p):
    w = G.sample(lambda x: np.abs(x[..., 0] - 0.5) ** a)
    pp = p / (p - 1)
    lhs = spaces.ap_characteristic(spaces.dual_weight(w, p), pp).value
    rhs = spaces.ap_characteristic(w, p).value ** (pp - 1)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_nonpositive_weight():
    with pytest.raises(NonPositiveWeight):
        spaces.ap_characteristic(G.sample(lambda x: x[..., 0] - 0.5), 2.0)


def test_bloom_with_unit_weight_is_bmo():
    b = G.sample(lambda x: np.log(np.abs(x[..., 0] - 0.3)))
    assert spaces.bloom_bmo_norm(b, G.ones()).value == spaces.bmo_norm(b).value


def test_bloom_decreases_with_larger_weight():
    b = G.sample(lambda x: np.log(np.abs(x[..., 0] - 0.3)))
    nu1 = G.sample(lambda x: 1 + x[..., 0])
    nu2 = G.sample(lambda x: 2 + x[..., 0] ** 2)
    assert spaces.bloom_bmo_norm(b, nu2).value <= spaces.bloom_bmo_norm(b, nu1).value


def test_basic_ap_ratio_unit_weights():
    g = Grid.centered(1, 16, 1024)
    wt = spaces.WeightTriple(g.ones(), g.ones(), 2.0)
    r = spaces.basic_ap_ratio(wt, Ball((0.0,), 1.0), Ball((8.0,), 1.0))
    assert r == pytest.approx(1.0, rel=1e-12)
    assert wt.characteristics() == {"mu": 1.0, "lambda": 1.0}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_inf_power_deviation_against_scan(k):
    b = G.sample(lambda x: np.exp(3 * x[..., 0]) + np.sin(17 * x[..., 0]))
    R = Cube((0.0,), 0.5)
    res = spaces.inf_power_deviation(b, R, k)
    v = b.at(G.cells(R))
    scan = min(np.sum(np.abs(v - c) ** k) * G.cell_volume for c in np.linspace(v.min(), v.max(), 4001))
    assert res.value <= scan * (1 + 1e-12)
    assert res.value >= scan * (1 - 1e-3)


GM = Grid.centered(1, 16, 2048)
BM = Ball((0.0,), 1.0)


@pytest.fixture(scope="module")
def hprobe():
    return kernels.probe_non_degeneracy(kernels.hilbert(), GM, BM, 4)


def test_median_constant_symbol_is_degenerate(hprobe):
    res = spaces.median_lower_bound(GridFunction(GM, 2.0), kernels.hilbert(), 1, BM, 4, hprobe)
    assert res.degenerate and res.ratio == 0.0 and res.bound_holds


@pytest.mark.parametrize("k", [1, 2, 3])
def test_median_ratio_finite_and_homogeneous(hprobe, k):
    K = kernels.hilbert()
    b = GM.sample(lambda x: x[..., 0])
    base = spaces.median_lower_bound(b, K, k, BM, 4, hprobe)
    assert np.isfinite(base.ratio) and base.bound_holds
    assert spaces.median_lower_bound(b * 2.0, K, k, BM, 4, hprobe).ratio == base.ratio
    assert spaces.median_lower_bound(b * 5.0, K, k, BM, 4, hprobe).ratio == pytest.approx(base.ratio, rel=1e-12)
