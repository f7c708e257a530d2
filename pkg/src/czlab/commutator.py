"""Discrete commutator pairings and lower bounds for the operator norm.

The k-th order commutator pairing against off-support test functions is the
double sum h^{2d} sum_x sum_y (b(x) - b(y))^k K(x, y) f(y) g(x).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import (EmptySampler, InvalidExponents, RealRequired, SupportsOverlap,
                     SupportsTouching)
from .grid import Ball, Cube, Grid, GridFunction, median_on
from .kernels import BLOCK, KernelSpec
from .rng import stream


@dataclass(frozen=True)
class ExponentConfig:
    """Exponents p, q in (1, inf), commutator order k and dimension d."""

    p: float
    q: float
    k: int = 1
    d: int = 1

    def __post_init__(self):
        if not (1 < self.p < np.inf and 1 < self.q < np.inf):
            raise InvalidExponents(f"need 1 < p, q < inf, got p={self.p}, q={self.q}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidExponents(f"commutator order must be a positive integer, got {self.k}")

    @property
    def alpha(self) -> float:
        """Hölder exponent (d/k)(1/p - 1/q) of the case p < q."""
        return self.d / self.k * (1 / self.p - 1 / self.q)

    @property
    def r(self) -> float:
        """Lebesgue exponent pq/(p - q) of the case p > q (inf when p <= q)."""
        return self.p * self.q / (self.p - self.q) if self.p > self.q else np.inf

    @property
    def q_prime(self) -> float:
        return self.q / (self.q - 1)

    @property
    def p_star(self) -> float:
        """p*_k = dp / (d + kp) when d + kp > 0."""
        return self.d * self.p / (self.d + self.k * self.p)

    @property
    def regime(self) -> str:
        if self.p == self.q:
            return "bmo"
        return "holder" if self.p < self.q else "lebesgue"


def separation(grid: Grid, cells_a, cells_b) -> float:
    """Smallest midpoint distance between two cell sets."""
    X = grid.midpoints(cells_a)
    Y = grid.midpoints(cells_b)
    best = np.inf
    step = max(1, BLOCK // max(len(Y), 1))
    for a in range(0, len(X), step):
        diff = X[a:a + step, None, :] - Y[None, :, :]
        best = min(best, float(np.sqrt(np.min(np.sum(diff * diff, axis=-1)))))
    return best


def check_separated(grid: Grid, cells_f, cells_g, min_sep: Optional[float] = None) -> float:
    if np.intersect1d(cells_f, cells_g).size:
        raise SupportsOverlap("test function supports share cells")
    sep = separation(grid, cells_f, cells_g)
    need = 2 * grid.h if min_sep is None else max(2 * grid.h, min_sep)
    if sep < need * (1 - 1e-12):
        raise SupportsTouching(f"support separation {sep:.4g} below {need:.4g}")
    return sep


def _check_symbol(b: GridFunction, k: int):
    if b.is_complex and k != 1:
        raise RealRequired("complex symbols are only allowed for first order commutators")


def pairing_matrix(b: GridFunction, kernel: KernelSpec, k: int, target_cells, source_cells):
    """h^{2d} (b(x) - b(y))^k K(x, y) for x in target cells (rows), y in source cells."""
    grid = b.grid
    X = grid.midpoints(target_cells)
    Y = grid.midpoints(source_cells)
    bx = b.at(target_cells)[:, None]
    by = b.at(source_cells)[None, :]
    diff = bx - by
    mat = kernel.matrix(X, Y) * (diff ** k if k else 1.0)
    return mat * grid.cell_volume ** 2


def pairing(b: GridFunction, kernel: KernelSpec, k: int, f: GridFunction, g: GridFunction,
            min_sep: Optional[float] = None):
    """<T_b^k f, g> for test functions with disjoint, separated supports."""
    _check_symbol(b, k)
    sf = f.support_cells()
    sg = g.support_cells()
    if len(sf) == 0 or len(sg) == 0:
        return 0.0
    check_separated(b.grid, sf, sg, min_sep)
    fy = f.at(sf)
    gx = g.at(sg)
    total = 0.0
    step = max(1, BLOCK // len(sf))
    for a in range(0, len(sg), step):
        rows = sg[a:a + step]
        total = total + gx[a:a + step] @ (pairing_matrix(b, kernel, k, rows, sf) @ fy)
    if np.iscomplexobj(total) and np.imag(total) == 0 and not (b.is_complex or kernel.complex_valued):
        total = np.real(total)
    return total


def apply_at(kernel: KernelSpec, f: GridFunction, points, adjoint: bool = False):
    """(Tf)(x) = h^d sum_y K(x, y) f(y) at arbitrary points away from supp f."""
    grid = f.grid
    sf = f.support_cells()
    Y = grid.midpoints(sf)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ker = kernel.adjoint() if adjoint else kernel
    out = []
    step = max(1, BLOCK // max(len(sf), 1))
    for a in range(0, len(pts), step):
        out.append(ker.matrix(pts[a:a + step], Y) @ f.at(sf))
    return np.concatenate(out) * grid.cell_volume if out else np.zeros(0)


def apply_off_support(kernel: KernelSpec, f: GridFunction, target, adjoint: bool = False,
                      min_sep: Optional[float] = None) -> GridFunction:
    """Tf (or T*f) sampled on the cells of a target region disjoint from supp f."""
    grid = f.grid
    tc = grid.cells(target)
    sf = f.support_cells()
    if len(sf):
        check_separated(grid, sf, tc, min_sep)
    vals = np.zeros(grid.size, dtype=complex if (kernel.complex_valued or f.is_complex) else float)
    if len(sf):
        vals[tc] = apply_at(kernel, f, grid.midpoints(tc), adjoint)
    mask = np.zeros(grid.size, dtype=bool)
    mask[tc] = True
    return GridFunction(grid, vals.reshape(grid.shape), mask.reshape(grid.shape))


# -- test-function samplers ---------------------------------------------


@dataclass(frozen=True)
class BallPairSampler:
    """Ball pairs B, B~ = B + s r theta at a list of radii and random centres.

    Centres are uniform in ``window`` (a lower corner and side).  ``gap`` is the
    distance between the balls in units of r, at least 1/2.  Sample i depends
    only on (seed, i), so a larger sampler contains every pair of a smaller one.
    """

    radii: tuple
    count: int
    window: tuple
    gap: float = 1.0
    seed: int = 0
    directions: Optional[tuple] = None

    def pairs(self, d: int):
        lo = np.asarray(self.window[0], dtype=float).reshape(-1)
        lo = np.broadcast_to(lo, (d,))
        side = float(self.window[1])
        dirs = None if self.directions is None else [np.asarray(v, dtype=float) for v in self.directions]
        for i in range(self.count):
            rng = stream(self.seed, "ball_pairs", i)
            r = float(self.radii[i % len(self.radii)])
            c = lo + rng.random(d) * side
            if dirs is None:
                theta = rng.normal(size=d)
                theta /= np.linalg.norm(theta)
            else:
                theta = dirs[int(rng.integers(len(dirs)))]
                theta = theta / np.linalg.norm(theta)
            yield Ball(tuple(c), r), Ball(tuple(c + (2 + self.gap) * r * theta), r)


def witness_sets(b: GridFunction, cells_b, cells_t):
    """Indicator witnesses on B (source) and B~ (target) built from medians.

    Returns a list of (source mask, target mask, tag) with masks as boolean
    arrays over cells_b and cells_t.  Complex symbols use their real part.
    """
    vb = np.real(b.at(cells_b))
    vt = np.real(b.at(cells_t))
    out = [(np.ones(len(cells_b), bool), np.ones(len(cells_t), bool), "full")]
    at = np.sort(vt)[(len(vt) - 1) // 2]
    ab = np.sort(vb)[(len(vb) - 1) // 2]
    out.append((vb >= at, vt <= at, "upper"))
    out.append((vb <= at, vt >= at, "lower"))
    out.append((vb <= ab, vt >= ab, "upper*"))
    out.append((vb >= ab, vt <= ab, "lower*"))
    return out


def _two_block(vals, med):
    return np.where(vals >= med, 1.0, -1.0)


def _pair_values(b: GridFunction, kernel: KernelSpec, k: int, cells_b, cells_t):
    """Witness pairings for one ball pair as (|pairing|, f sup, g sup, tag) rows."""
    M = pairing_matrix(b, kernel, k, cells_t, cells_b)
    out = []
    for fm, gm, tag in witness_sets(b, cells_b, cells_t):
        if fm.any() and gm.any():
            out.append((abs(gm.astype(float) @ (M @ fm.astype(float))), tag))
    vb = np.real(b.at(cells_b))
    vt = np.real(b.at(cells_t))
    fb = _two_block(vb, np.sort(vb)[(len(vb) - 1) // 2])
    gt = _two_block(vt, np.sort(vt)[(len(vt) - 1) // 2])
    out.append((abs(np.ones(len(cells_t)) @ (M @ fb)), "two_block_f"))
    out.append((abs(gt @ (M @ np.ones(len(cells_b)))), "two_block_g"))
    out.append((abs(gt @ (M @ fb)), "two_block_fg"))
    return out


@dataclass
class ThetaEstimate:
    """Lower bound for the commutator norm with its best witness and all sample rows."""

    value: float
    mode: str
    witness: dict
    rows: list = field(default_factory=list)

    def write_csv(self, path, cfg: ExponentConfig) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "p", "q", "k", "scale", "position", "pairing", "normalizer", "ratio"])
            for row in self.rows:
                w.writerow([self.mode, cfg.p, cfg.q, cfg.k, _fmt(row["scale"]), _fmt(row["position"]),
                            _fmt(row["pairing"]), _fmt(row["normalizer"]), _fmt(row["ratio"])])


def _fmt(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(_fmt(v) for v in np.ravel(x))
    return repr(float(x))


def _ball_cells(grid: Grid, ball: Ball):
    grid.require_inside(ball)
    return grid.cells(ball)


def theta_single(b: GridFunction, kernel: KernelSpec, cfg: ExponentConfig, pairs: Iterable,
                 weights=None) -> ThetaEstimate:
    """Largest |pairing| / (|f|_inf |B|^{1/p} |g|_inf |B~|^{1/q'}) over sampled ball pairs.

    With ``weights`` (a WeightTriple, p = q) the normalizer becomes
    mu(B)^{1/p} lambda'(B~)^{1/p'}.
    """
    _check_symbol(b, cfg.k)
    grid = b.grid
    rows = []
    best = {"ratio": -np.inf}
    mode = "single" if weights is None else "weighted"
    for B, Bt in pairs:
        cb = _ball_cells(grid, B)
        ct = _ball_cells(grid, Bt)
        if len(cb) == 0 or len(ct) == 0:
            continue
        check_separated(grid, cb, ct, 0.5 * B.radius)
        if weights is None:
            norm = (len(cb) * grid.cell_volume) ** (1 / cfg.p) * (len(ct) * grid.cell_volume) ** (1 / cfg.q_prime)
        else:
            mu_b = weights.mu.at(cb).sum() * grid.cell_volume
            lam_t = weights.lam_dual.at(ct).sum() * grid.cell_volume
            norm = mu_b ** (1 / weights.p) * lam_t ** (1 - 1 / weights.p)
        vals = _pair_values(b, kernel, cfg.k, cb, ct)
        val, tag = max(vals, key=lambda t: t[0])
        ratio = val / norm
        row = {"scale": B.radius, "position": B.center, "pairing": val, "normalizer": norm,
               "ratio": ratio, "tag": tag, "partner": Bt.center}
        rows.append(row)
        if ratio > best["ratio"]:
            best = row
    if not rows:
        raise EmptySampler("sampler produced no usable ball pairs")
    return ThetaEstimate(float(best["ratio"]), mode, best, rows)


@dataclass(frozen=True)
class CubeFamilySampler:
    """Families of cubes tiling a window at one side length, each with a shifted partner.

    For every side in ``sides`` and every shift direction, the window is tiled
    by cell-aligned cubes of that side; the partner of Q is Q + (1 + gap) side e.
    """

    sides: tuple
    window: Cube
    directions: tuple = ((1.0,), (-1.0,))
    gap: float = 0.5

    def families(self, grid: Grid):
        corner, s_cells = grid.cube_index(self.window)
        for side in self.sides:
            m = int(round(side / grid.h))
            if m < 1 or s_cells % m:
                continue
            per_axis = s_cells // m
            shift_cells = int(round((1 + self.gap) * m))
            for e in self.directions:
                e = np.asarray(e, dtype=float)
                fam = []
                for idx in np.ndindex(*(per_axis,) * grid.d):
                    c = np.asarray(corner) + np.asarray(idx) * m
                    Q = grid.cube_from_index(c, m)
                    Qt = grid.cube_from_index(c + np.rint(e * shift_cells).astype(int), m)
                    if grid.contains(Qt):
                        fam.append((Q, Qt))
                if fam:
                    yield side, tuple(e), fam


def theta_multi(b: GridFunction, kernel: KernelSpec, cfg: ExponentConfig,
                sampler: CubeFamilySampler) -> ThetaEstimate:
    """Sum_i |pairing_i| / (|sum a_i 1_{Q_i}|_p |sum c_i 1_{Q~_i}|_{q'}) over cube families.

    Each pair carries its best indicator witness.  The amplitudes a_i, c_i are
    the Hölder-optimal choice for the measured witness densities; any choice
    gives a valid lower bound.
    """
    if not cfg.p > cfg.q:
        raise InvalidExponents("multi-pair estimates need p > q")
    _check_symbol(b, cfg.k)
    grid = b.grid
    r = cfg.r
    rows = []
    best = {"ratio": -np.inf}
    for side, e, fam in sampler.families(grid):
        dens, vals, cells = [], [], []
        for Q, Qt in fam:
            cq = grid.cells(Q)
            ct = grid.cells(Qt)
            check_separated(grid, cq, ct, 0.5 * side)
            val, tag = max(_pair_values(b, kernel, cfg.k, cq, ct), key=lambda t: t[0])
            vals.append(val)
            dens.append(val / (len(cq) * grid.cell_volume))
            cells.append((cq, ct))
        if not vals or max(dens) == 0:
            continue
        dens = np.asarray(dens) / max(dens)
        amp_f = dens ** (r / cfg.p)
        amp_g = dens ** (r / cfg.q_prime)
        stack_f = np.zeros(grid.size)
        stack_g = np.zeros(grid.size)
        for (cq, ct), af, ag in zip(cells, amp_f, amp_g):
            stack_f[cq] += af
            stack_g[ct] += ag
        num = float(np.sum(amp_f * amp_g * np.asarray(vals)))
        hd = grid.cell_volume
        norm = (np.sum(stack_f ** cfg.p) * hd) ** (1 / cfg.p) * (np.sum(stack_g ** cfg.q_prime) * hd) ** (1 / cfg.q_prime)
        if norm == 0:
            continue
        ratio = num / norm
        row = {"scale": side, "position": e, "pairing": num, "normalizer": norm, "ratio": ratio,
               "pairs": len(vals)}
        rows.append(row)
        if ratio > best["ratio"]:
            best = row
    if not rows:
        raise EmptySampler("sampler produced no usable cube families")
    return ThetaEstimate(float(best["ratio"]), "multi", best, rows)


def theta_lower_bound(b: GridFunction, kernel: KernelSpec, cfg: ExponentConfig, mode: str,
                      sampler, weights=None) -> ThetaEstimate:
    """Dispatch to the single, multi or weighted estimator."""
    if mode == "single":
        return theta_single(b, kernel, cfg, sampler.pairs(b.grid.d) if hasattr(sampler, "pairs") else sampler)
    if mode == "weighted":
        if weights is None:
            raise InvalidExponents("weighted mode needs a weight triple")
        return theta_single(b, kernel, cfg, sampler.pairs(b.grid.d) if hasattr(sampler, "pairs") else sampler,
                            weights=weights)
    if mode == "multi":
        return theta_multi(b, kernel, cfg, sampler)
    raise InvalidExponents(f"unknown mode {mode!r}")
