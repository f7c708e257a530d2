import numpy as np
import pytest
from hypothesis import given, strategies as st

from czlab import decomp
from czlab.errors import EtaViolated, NotMeanZero
from czlab.grid import Cube, Grid, GridFunction

G1 = Grid(1, (0.0,), 1.0, 256)
G2 = Grid(2, (0.0, 0.0), 1.0, 32)
ROOT1 = Cube((0.0,), 1.0)
ROOT2 = Cube((0.0, 0.0), 1.0)


def _random_mean_zero(grid, seed, heavy=True):
    rng = np.random.default_rng(seed)
    v = rng.standard_cauchy(grid.shape) if heavy else rng.normal(size=grid.shape)
    return GridFunction(grid, v - v.mean())


def test_zero_function_gives_empty_tree():
    tree = decomp.cz_stopping(G1.zeros(), ROOT1)
    assert tree.families == []


def test_balanced_sign_split_stops_at_root():
    f = G1.sample(lambda x: np.where(x[..., 0] < 0.5, 1.0, -1.0))
    tree = decomp.cz_stopping(f, ROOT1)
    assert len(tree.families) == 1
    assert np.array_equal(tree.pieces[0][0].values, f.values)


def test_spike_builds_nested_chain():
    v = np.full(G1.shape, -1.0)
    v[0] = G1.size - 1.0
    tree = decomp.cz_stopping(GridFunction(G1, v), ROOT1)
    assert len(tree.families) > 1
    res = tree.verify(GridFunction(G1, v))
    assert res["reconstruction_ok"] and res["sup_ok"] and res["nesting_ok"] and res["disjoint"]


def test_not_mean_zero_rejected():
    with pytest.raises(NotMeanZero):
        decomp.cz_stopping(G1.ones(), ROOT1)


@given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.booleans())
def test_stopping_invariants(seed, d, heavy):
    grid, root = (G1, ROOT1) if d == 1 else (G2, ROOT2)
    f = _random_mean_zero(grid, seed, heavy)
    res = decomp.cz_stopping(f, root).verify(f)
    assert res["reconstruction"] <= 1e-12
    assert res["sup_ok"] and res["nesting_ok"] and res["disjoint"]
    assert res["piece_mean"] <= 1e-12


def test_lerner_indicator_single_cube():
    b = G1.sample(lambda x: (x[..., 0] < 0.25).astype(float))
    fam = decomp.lerner_sparse(b, ROOT1)
    assert len(fam.cubes) == 1
    assert fam.coefficients[0] == pytest.approx(0.375, abs=1e-15)
    assert fam.verify(b)["domination_ok"]


def test_lerner_log_singularity_is_deep():
    b = G1.sample(lambda x: np.log(np.abs(x[..., 0] - 0.3)))
    fam = decomp.lerner_sparse(b, ROOT1)
    res = fam.verify(b)
    assert len(fam.cubes) > 3
    assert res["domination_ok"] and res["e_disjoint"] and res["e_major"] and res["packing_ok"]


@given(st.integers(0, 10_000), st.sampled_from([1, 2]))
def test_lerner_invariants(seed, d):
    grid, root = (G1, ROOT1) if d == 1 else (G2, ROOT2)
    b = GridFunction(grid, np.random.default_rng(seed).standard_cauchy(grid.shape))
    res = decomp.lerner_sparse(b, root).verify(b)
    assert res["domination_ok"] and res["e_disjoint"] and res["e_major"] and res["packing_ok"]


def test_doob_trivial_subset_ratio_one():
    Q = Cube((0.0,), 0.5)
    r = decomp.doob_check(G1, [Q], [Q], [1.0], 2.0, eta=0.5)
    assert r.ratio == pytest.approx(1.0, rel=1e-14)


def test_doob_single_cube_half_subset():
    Q = Cube((0.0,), 0.5)
    r = decomp.doob_check(G1, [Q], [Cube((0.0,), 0.25)], [3.0], 1.0, eta=0.5)
    assert r.ratio == pytest.approx(2.0, rel=1e-14)
    assert not r.flagged


def _random_family(grid, rng, size=8):
    cubes, subsets = [], []
    for _ in range(size):
        s = grid.n >> int(rng.integers(1, 5))
        Q = grid.cube_from_index(rng.integers(0, grid.n // s, size=grid.d) * s, s)
        cells = grid.cells(Q)
        m = np.zeros(grid.shape, dtype=bool)
        m.flat[cells[rng.permutation(len(cells))[: (len(cells) + 1) // 2]]] = True
        cubes.append(Q)
        subsets.append(m)
    return cubes, subsets


@given(st.integers(0, 10_000), st.sampled_from([1.5, 2.0, 3.0]))
def test_doob_random_families_within_bound(seed, p):
    rng = np.random.default_rng(seed)
    cubes, subsets = _random_family(G1, rng)
    r = decomp.doob_check(G1, cubes, subsets, rng.exponential(size=len(cubes)), p, eta=0.5)
    assert r.ratio <= 8.0


def test_doob_rejects_bad_subsets():
    Q = Cube((0.0,), 0.5)
    with pytest.raises(EtaViolated):
        decomp.doob_check(G1, [Q], [Cube((0.0,), 0.125)], [1.0], 2.0, eta=0.5)
    with pytest.raises(EtaViolated):
        decomp.doob_check(G1, [Q], [Cube((0.5,), 0.5)], [1.0], 2.0, eta=0.5)
    with pytest.raises(EtaViolated):
        decomp.doob_check(G1, [Q], [Q], [-1.0], 2.0)


def test_doob_partner_variant():
    g = Grid(1, (0.0,), 64.0, 1024)
    Q, E = Cube((0.0,), 1.0), Cube((4.0,), 1.0)
    r = decomp.doob_check(g, [Q], [E], [1.0], 2.0, partner_a=4)
    assert r.ratio == pytest.approx(1.0, rel=1e-14) and r.bound == 16
    with pytest.raises(EtaViolated):
        decomp.doob_check(g, [Q], [Cube((40.0,), 1.0)], [1.0], 2.0, partner_a=4)


def _nested(grid):
    return [Cube((0.5 - s / 2,), s) for s in (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0)]


def test_extract_constant_of_constant():
    b = GridFunction(G1, 5.0)
    ex = decomp.extract_constant(b, _nested(G1), 2.0)
    assert ex.c == 5.0 and ex.a_norm == 0.0 and ex.theta == 0.0


def test_extract_constant_recovers_shift():
    bump = G1.sample(lambda x: np.sin(2 * np.pi * x[..., 0]) * np.exp(-40 * (x[..., 0] - 0.5) ** 2))
    ex = decomp.extract_constant(bump + 5.0, _nested(G1), 2.0)
    assert abs(ex.c - 5.0) <= 1e-3
    assert ex.tail_ok and ex.increments_ok
