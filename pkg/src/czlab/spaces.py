"""Oscillation spaces, Muckenhoupt characteristics and the median lower bound.

Suprema over cubes run over a dyadic lattice: every cube of side 2^j h
(j >= 2) whose corner sits on the half-side lattice, which covers the 2^d
half-shifted dyadic systems.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .commutator import pairing_matrix
from .errors import (EmptyRegion, NonDegeneracyFailed, NonPositiveWeight, RealRequired,
                     TooFewScales)
from .grid import Ball, Cube, Grid, GridFunction, median_on
from .kernels import HOMOGENEOUS, KernelSpec, ProbeResult, probe_non_degeneracy
from .rng import stream


@dataclass(frozen=True)
class CubeLattice:
    """Cubes of side s cells, min_side <= s <= max_side (powers of two), corners on the s/2 lattice."""

    grid: Grid
    min_side: int = 4
    max_side: Optional[int] = None
    shifted: bool = True

    def sides(self):
        top = self.grid.n if self.max_side is None else min(self.max_side, self.grid.n)
        s = self.min_side
        while s <= top:
            yield s
            s *= 2

    def step(self, s: int) -> int:
        return max(1, s // 2) if self.shifted else s

    def windows(self, values: np.ndarray, s: int):
        """(corners, flattened windows) for all lattice cubes of side s."""
        st = self.step(s)
        d = values.ndim
        view = sliding_window_view(values, (s,) * d)[(slice(None, None, st),) * d]
        counts = view.shape[:d]
        corners = np.stack(np.meshgrid(*[np.arange(c) * st for c in counts], indexing="ij"), -1)
        return corners.reshape(-1, d), view.reshape(-1, s ** d)

    def cubes(self):
        for s in self.sides():
            st = self.step(s)
            for idx in np.ndindex(*((self.grid.n - s) // st + 1,) * self.grid.d):
                yield self.grid.cube_from_index(np.asarray(idx) * st, s)


def _osc_windows(win: np.ndarray) -> np.ndarray:
    """sum_Q |b - <b>_Q| per window (not normalized)."""
    m = win.sum(axis=1) / win.shape[1]
    return np.abs(win - m[:, None]).sum(axis=1)


@dataclass
class SupResult:
    value: float
    cube: Optional[Cube]


def bmo_norm(b: GridFunction, lattice: Optional[CubeLattice] = None) -> SupResult:
    """sup over lattice cubes of the mean oscillation."""
    lat = lattice or CubeLattice(b.grid)
    best, arg = -np.inf, None
    for s in lat.sides():
        corners, win = lat.windows(b.values, s)
        osc = _osc_windows(win) / win.shape[1]
        i = int(np.argmax(osc))
        if osc[i] > best:
            best, arg = float(osc[i]), b.grid.cube_from_index(corners[i], s)
    return SupResult(best, arg)


def oscillation_profile(b: GridFunction, lattice: Optional[CubeLattice] = None):
    """Rows (side, corner, sup oscillation) with one row per lattice scale."""
    lat = lattice or CubeLattice(b.grid)
    rows = []
    for s in lat.sides():
        corners, win = lat.windows(b.values, s)
        osc = _osc_windows(win) / win.shape[1]
        i = int(np.argmax(osc))
        rows.append((s * b.grid.h, tuple(b.grid.cube_from_index(corners[i], s).corner), float(osc[i])))
    return rows


def holder_seminorm(b: GridFunction, alpha: float, max_pairs: int = 1_000_000, seed: int = 0) -> float:
    """sup |b(x) - b(y)| / |x - y|^alpha over all cell pairs, or max_pairs random pairs."""
    grid = b.grid
    N = grid.size
    vals = b.values.reshape(-1)
    total = N * (N - 1) // 2
    best = 0.0
    if total <= max_pairs:
        X = grid.midpoints()
        for i in range(N - 1):
            diff = X[i + 1:] - X[i]
            dist = np.sqrt(np.sum(diff * diff, axis=1))
            q = np.abs(vals[i + 1:] - vals[i]) / dist ** alpha
            best = max(best, float(q.max()))
        return best
    rng = stream(seed, "holder")
    i = rng.integers(0, N, max_pairs)
    j = rng.integers(0, N, max_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    diff = grid.midpoints(i) - grid.midpoints(j)
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    return float(np.max(np.abs(vals[i] - vals[j]) / dist ** alpha))


@dataclass
class Classification:
    label: str
    slope: float
    profile: list


def oscillation_classify(b: GridFunction, lattice: Optional[CubeLattice] = None,
                         bmo_tol: float = 0.1, holder_max: float = 1.1,
                         constant_tol: float = 1e-8) -> Classification:
    """Fit the log-log slope of the oscillation profile and name the space.

    'Constant' when every scale is flat, 'BMO' for slope within bmo_tol of 0,
    'Holder(a)' for slope a in (bmo_tol, holder_max], otherwise 'None'.
    """
    prof = oscillation_profile(b, lattice)
    if len(prof) < 4:
        raise TooFewScales(f"need at least 4 scales, got {len(prof)}")
    sides = np.array([p[0] for p in prof])
    osc = np.array([p[2] for p in prof])
    bsup = b.sup()
    if np.all(osc <= constant_tol * max(bsup, 1e-300)):
        return Classification("Constant", 0.0, prof)
    slope = float(np.polyfit(np.log(sides), np.log(np.maximum(osc, 1e-300)), 1)[0])
    if abs(slope) <= bmo_tol:
        label = "BMO"
    elif bmo_tol < slope <= holder_max:
        label = f"Holder({slope:.3f})"
    else:
        label = "None"
    return Classification(label, slope, prof)


def write_profile_csv(path, profile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "position", "oscillation"])
        for s, pos, osc in profile:
            w.writerow([repr(float(s)), " ".join(repr(float(c)) for c in pos), repr(float(osc))])


# -- weights -------------------------------------------------------------


def _check_weight(w: GridFunction):
    if w.is_complex or np.any(~(w.values > 0)):
        raise NonPositiveWeight("weights must be positive at every cell")


def dual_weight(w: GridFunction, p: float) -> GridFunction:
    """w^(-1/(p-1))."""
    _check_weight(w)
    return GridFunction(w.grid, w.values ** (-1.0 / (p - 1)), w.support)


def ap_characteristic(w: GridFunction, p: float, lattice: Optional[CubeLattice] = None) -> SupResult:
    """sup_Q <w>_Q <w^(-1/(p-1))>_Q^(p-1)."""
    _check_weight(w)
    lat = lattice or CubeLattice(w.grid)
    wd = w.values ** (-1.0 / (p - 1))
    best, arg = -np.inf, None
    for s in lat.sides():
        corners, win = lat.windows(w.values, s)
        _, wind = lat.windows(wd, s)
        val = win.mean(axis=1) * wind.mean(axis=1) ** (p - 1)
        i = int(np.argmax(val))
        if val[i] > best:
            best, arg = float(val[i]), w.grid.cube_from_index(corners[i], s)
    return SupResult(best, arg)


def bloom_bmo_norm(b: GridFunction, nu: GridFunction, k: int = 1,
                   lattice: Optional[CubeLattice] = None) -> SupResult:
    """sup_Q (1 / nu^{1/k}(Q)) int_Q |b - <b>_Q|."""
    _check_weight(nu)
    lat = lattice or CubeLattice(b.grid)
    nk = nu.values ** (1.0 / k) if k != 1 else nu.values
    best, arg = -np.inf, None
    for s in lat.sides():
        corners, win = lat.windows(b.values, s)
        _, nwin = lat.windows(nk, s)
        val = _osc_windows(win) / nwin.sum(axis=1)
        i = int(np.argmax(val))
        if val[i] > best:
            best, arg = float(val[i]), b.grid.cube_from_index(corners[i], s)
    return SupResult(best, arg)


@dataclass
class WeightTriple:
    """Weights mu, lambda and exponent p; nu = (mu / lambda)^(1/p)."""

    mu: GridFunction
    lam: GridFunction
    p: float

    def __post_init__(self):
        _check_weight(self.mu)
        _check_weight(self.lam)

    @property
    def nu(self) -> GridFunction:
        return GridFunction(self.mu.grid, (self.mu.values / self.lam.values) ** (1 / self.p))

    @property
    def mu_dual(self) -> GridFunction:
        return dual_weight(self.mu, self.p)

    @property
    def lam_dual(self) -> GridFunction:
        return dual_weight(self.lam, self.p)

    def characteristics(self, lattice: Optional[CubeLattice] = None) -> dict:
        return {"mu": ap_characteristic(self.mu, self.p, lattice).value,
                "lambda": ap_characteristic(self.lam, self.p, lattice).value}


def basic_ap_ratio(weights: WeightTriple, B: Ball, Bt: Ball, k: int = 1) -> float:
    """mu(B)^{1/p} lambda'(B~)^{1/p'} / (<nu^{1/k}>_B^k |B|)."""
    grid = weights.mu.grid
    cb, ct = grid.cells(B), grid.cells(Bt)
    if len(cb) == 0 or len(ct) == 0:
        raise EmptyRegion("ball contains no cells")
    hd = grid.cell_volume
    p = weights.p
    lhs = (weights.mu.at(cb).sum() * hd) ** (1 / p) * (weights.lam_dual.at(ct).sum() * hd) ** (1 - 1 / p)
    nu = weights.nu.at(cb)
    rhs = np.mean(nu ** (1.0 / k)) ** k * len(cb) * hd
    return float(lhs / rhs)


# -- median method --------------------------------------------------------


@dataclass
class InfDeviation:
    c: float
    value: float


def inf_power_deviation(b: GridFunction, region, k: int, rtol: float = 1e-10) -> InfDeviation:
    """Minimize c -> int_R |b - c|^k by ternary search on [min b, max b].

    For k = 1 the search is cross-checked against the median, which is an
    exact minimizer; the smaller of the two values is returned.
    """
    if b.is_complex:
        raise RealRequired("power deviation needs a real function")
    grid = b.grid
    cells = grid.cells(region)
    if len(cells) == 0:
        raise EmptyRegion("region contains no cells")
    v = b.at(cells)
    hd = grid.cell_volume

    def cost(c):
        return np.sum(np.abs(v - c) ** k) * hd

    lo, hi = float(v.min()), float(v.max())
    width = hi - lo
    if width == 0:
        return InfDeviation(lo, 0.0)
    while hi - lo > rtol * width:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if cost(m1) <= cost(m2):
            hi = m2
        else:
            lo = m1
    c = 0.5 * (lo + hi)
    val = cost(c)
    if k == 1:
        med = float(np.sort(v)[(len(v) - 1) // 2])
        mval = cost(med)
        if mval <= val:
            c, val = med, mval
    return InfDeviation(float(c), float(val))


@dataclass
class MedianBound:
    """lhs = inf_c int_B |b - c|^k against the witness pairings."""

    lhs: float
    pairings: list
    ratio: float
    bound: float
    bound_holds: bool
    degenerate: bool
    median: float
    witness_sizes: list = field(default_factory=list)


def _level_sets(vb, vt, alpha):
    return [(vb >= alpha, vt <= alpha), (vb <= alpha, vt >= alpha)]


def median_lower_bound(b: GridFunction, kernel: KernelSpec, k: int, B: Ball, A: float,
                       probe: Optional[ProbeResult] = None, constant: Optional[float] = None) -> MedianBound:
    """Median-method comparison of the power deviation on B with commutator pairings.

    The median of b on the partner ball splits B and B~ into two witness pairs.
    Rough homogeneous kernels add the two pairs built from the median on B,
    which is the same argument run for the adjoint.
    """
    if b.is_complex:
        raise RealRequired("the median method needs a real symbol")
    grid = b.grid
    if probe is None:
        probe = probe_non_degeneracy(kernel, grid, B, A)
    if kernel.variant != HOMOGENEOUS and probe.sigma is None:
        raise NonDegeneracyFailed("no unimodular rotation makes the kernel positive on B~ x B")
    Bt = probe.partner
    cb, ct = grid.cells(B), grid.cells(Bt)
    vb, vt = b.at(cb), b.at(ct)
    alpha = median_on(b, Bt)
    sets = _level_sets(vb, vt, alpha)
    if kernel.variant == HOMOGENEOUS:
        beta = median_on(b, B)
        sets += [(vb <= beta, vt >= beta), (vb >= beta, vt <= beta)]
    M = pairing_matrix(b, kernel, k, ct, cb)
    pairs = []
    for fm, gm in sets:
        pairs.append(complex(gm.astype(float) @ (M @ fm.astype(float))) if fm.any() and gm.any() else 0j)
    lhs = inf_power_deviation(b, B, k).value
    total = float(sum(abs(p) for p in pairs))
    C = 100.0 * A ** grid.d if constant is None else constant
    degenerate = lhs == 0
    if degenerate:
        ratio = 0.0
    else:
        ratio = lhs / total if total > 0 else np.inf
    sizes = [(int(fm.sum()), int(gm.sum())) for fm, gm in sets]
    return MedianBound(lhs, pairs, float(ratio), C, bool(ratio <= C), degenerate, alpha, sizes)
