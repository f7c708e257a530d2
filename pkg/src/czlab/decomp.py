"""Dyadic decompositions: stopping-time splitting, sparse oscillation families,
the Doob-type comparison of indicator sums, and extraction of the constant at
infinity from nested cubes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EtaViolated, InvalidGrid, NotMeanZero
from .grid import Cube, Grid, GridFunction, lp_norm, run_lengths

MEAN_TOL = 1e-12


def _root_block(f: GridFunction, Q0: Cube):
    grid = f.grid
    corner, s = grid.cube_index(Q0)
    if s & (s - 1):
        raise InvalidGrid("the root cube must have a power-of-two number of cells per side")
    if min(corner) < 0 or max(corner) + s > grid.n:
        raise InvalidGrid("the root cube does not fit in the grid")
    sl = tuple(slice(c, c + s) for c in corner)
    return np.asarray(f.values[sl]), corner, s, sl


def _block_sums(a: np.ndarray, t: int) -> np.ndarray:
    """Sums over the aligned blocks of side t of a (s,)*d array."""
    d = a.ndim
    s = a.shape[0]
    m = s // t
    shape = []
    for _ in range(d):
        shape += [m, t]
    return a.reshape(shape).sum(axis=tuple(range(1, 2 * d, 2)))


class _Pyramid:
    """Block sums of an array at every dyadic level."""

    def __init__(self, a: np.ndarray):
        self.s = a.shape[0]
        self.d = a.ndim
        self.levels = {}
        t = 1
        while t <= self.s:
            self.levels[t] = _block_sums(a, t) if t > 1 else a
            t *= 2

    def avg(self, t: int, idx) -> float:
        return self.levels[t][tuple(i // t for i in idx)] / t ** self.d


def _children(t: int, idx, d: int):
    half = t // 2
    for off in np.ndindex(*(2,) * d):
        yield half, tuple(i + o * half for i, o in zip(idx, off))


def _slices(t, idx):
    return tuple(slice(i, i + t) for i in idx)


def _maximal_selection(pyr: _Pyramid, t: int, idx, threshold: float):
    """Maximal dyadic strict subcubes whose average exceeds the threshold."""
    out = []
    if t == 1:
        return out
    stack = list(_children(t, idx, pyr.d))
    while stack:
        tt, ii = stack.pop()
        if pyr.avg(tt, ii) > threshold:
            out.append((tt, ii))
        elif tt > 1:
            stack.extend(_children(tt, ii, pyr.d))
    out.sort(key=lambda c: c[1])
    return out


@dataclass
class StoppingTree:
    """Families F_0, F_1, ... of stopping cubes and the mean-zero pieces f_F."""

    root: Cube
    families: list
    pieces: list
    abs_avgs: list
    grid: Grid
    nesting: list = field(default_factory=list)

    def cubes(self):
        return [Q for fam in self.families for Q in fam]

    def reconstruct(self) -> np.ndarray:
        total = np.zeros(self.grid.shape, dtype=complex)
        for fam in self.pieces:
            for p in fam:
                total += p.values
        return total

    def verify(self, f: GridFunction) -> dict:
        """Reconstruction, sup bound, nesting ratio and disjointness checks."""
        d = self.grid.d
        fsup = max(f.sup(), 1e-300)
        rec = self.reconstruct()
        recon = float(np.max(np.abs(rec - f.values))) / fsup
        sup_ratio = 0.0
        mean_dev = 0.0
        for fam, pfam, afam in zip(self.families, self.pieces, self.abs_avgs):
            for Q, p, a in zip(fam, pfam, afam):
                if a > 0:
                    sup_ratio = max(sup_ratio, p.sup() / a)
                cells = self.grid.cells(Q)
                mean_dev = max(mean_dev, abs(p.at(cells).sum()) / (len(cells) * fsup))
        disjoint = True
        for fam in self.families:
            seen = np.zeros(self.grid.size, dtype=int)
            for Q in fam:
                seen[self.grid.cells(Q)] += 1
            disjoint &= bool(seen.max(initial=0) <= 1)
        min_nest = min(self.nesting) if self.nesting else np.inf
        return {
            "reconstruction": recon,
            "reconstruction_ok": recon <= 1e-12,
            "sup_ratio": sup_ratio,
            "sup_ok": sup_ratio <= (2 ** (d + 1) + 1) * (1 + 1e-12),
            "piece_mean": mean_dev,
            "nesting_min": min_nest,
            "nesting_ok": bool(min_nest > 2),
            "disjoint": disjoint,
        }

    def to_json(self) -> dict:
        return {"root": self.root.to_json(),
                "families": [[Q.to_json() for Q in fam] for fam in self.families],
                "abs_avgs": self.abs_avgs}


def cz_stopping(f: GridFunction, Q0: Cube) -> StoppingTree:
    """Stopping-time splitting of a mean-zero f on a dyadic cube.

    Children of F are the maximal dyadic subcubes Q with <|f|>_Q > 2 <|f|>_F.
    The piece for F is f on E(F) = F minus its children, plus the child averages,
    minus the average over F.  Single cells are never split.
    """
    grid = f.grid
    block, corner, s, _ = _root_block(f, Q0)
    d = grid.d
    if np.any(f.values[~grid.mask(Q0)] != 0):
        raise InvalidGrid("f must be supported in the root cube")
    fsup = f.sup()
    if abs(block.sum()) > MEAN_TOL * max(fsup, 1e-300) * block.size:
        raise NotMeanZero("f must have mean zero on the root cube")
    if fsup == 0:
        return StoppingTree(Q0, [], [], [], grid)
    pa = _Pyramid(np.abs(block))
    ps = _Pyramid(block)
    fams, pieces, avgs, nesting = [], [], [], []
    current = [(s, (0,) * d)]
    gen = 0
    while current:
        fam_cubes, fam_pieces, fam_avgs, nxt = [], [], [], []
        for t, idx in current:
            a = pa.avg(t, idx)
            kids = _maximal_selection(pa, t, idx, 2 * a)
            piece = np.zeros_like(block, dtype=np.result_type(block, float))
            sl = _slices(t, idx)
            piece[sl] = block[sl]
            for tt, ii in kids:
                piece[_slices(tt, ii)] = ps.avg(tt, ii)
                nesting.append(pa.avg(tt, ii) / a)
            piece[sl] -= ps.avg(t, idx)
            full = np.zeros(grid.shape, dtype=piece.dtype)
            full[tuple(slice(c, c + s) for c in corner)] = piece
            mask = grid.mask(grid.cube_from_index(np.asarray(corner) + np.asarray(idx), t))
            fam_cubes.append(grid.cube_from_index(np.asarray(corner) + np.asarray(idx), t, gen))
            fam_pieces.append(GridFunction(grid, full, mask))
            fam_avgs.append(float(a))
            nxt.extend(kids)
        fams.append(fam_cubes)
        pieces.append(fam_pieces)
        avgs.append(fam_avgs)
        current = nxt
        gen += 1
    return StoppingTree(Q0, fams, pieces, avgs, grid, nesting)


@dataclass
class SparseFamily:
    """Nested cubes with oscillation coefficients and disjoint major subsets E(Q)."""

    root: Cube
    cubes: list
    coefficients: list
    parents: list
    e_sets: list
    grid: Grid
    root_mean: complex = 0.0

    def majorant(self) -> np.ndarray:
        total = np.zeros(self.grid.size)
        for Q, c in zip(self.cubes, self.coefficients):
            total[self.grid.cells(Q)] += c
        return total.reshape(self.grid.shape)

    def verify(self, b: GridFunction, constant: Optional[float] = None) -> dict:
        d = self.grid.d
        C = 2.0 ** (d + 2) if constant is None else constant
        cells = self.grid.cells(self.root)
        dev = np.abs(b.at(cells) - self.root_mean)
        maj = self.majorant().reshape(-1)[cells]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dev > 0, dev / np.where(maj > 0, maj, np.nan), 0.0)
        worst = float(np.nanmax(np.where(np.isnan(ratio), np.inf, ratio))) if ratio.size else 0.0
        seen = np.zeros(self.grid.size, dtype=int)
        major = True
        for Q, E in zip(self.cubes, self.e_sets):
            seen[E] += 1
            major &= bool(2 * len(E) >= len(self.grid.cells(Q)))
        packing = 0.0
        kids = {}
        for i, par in enumerate(self.parents):
            if par is not None:
                kids.setdefault(par, []).append(i)
        for par, ch in kids.items():
            packing = max(packing, sum(self.cubes[i].volume for i in ch) / self.cubes[par].volume)
        return {
            "domination_ratio": worst,
            "domination_ok": worst <= C * (1 + 1e-12),
            "e_disjoint": bool(seen.max(initial=0) <= 1),
            "e_major": major,
            "packing": packing,
            "packing_ok": packing <= 0.5 + 1e-12,
        }

    def to_json(self) -> dict:
        out = []
        for Q, c, par, E in zip(self.cubes, self.coefficients, self.parents, self.e_sets):
            m = np.zeros(self.grid.size, dtype=bool)
            m[E] = True
            out.append({"cube": Q.to_json(), "coefficient": c, "parent": par,
                        "e_set_rle": run_lengths(m)})
        return {"root": self.root.to_json(), "cubes": out}


def lerner_sparse(b: GridFunction, Q0: Cube) -> SparseFamily:
    """Sparse family bounding |b - <b>_{Q0}| by 2^(d+2) sum_Q osc_Q 1_Q on Q0.

    Inside a cube R the selected subcubes are the maximal dyadic Q with
    avg_Q |b - <b>_R| > 2 avg_R |b - <b>_R|; the construction recurses on them.
    """
    grid = b.grid
    block, corner, s, _ = _root_block(b, Q0)
    d = grid.d
    cubes, coefs, parents, e_sets = [], [], [], []
    base = np.asarray(corner)
    root_mean = block.mean()
    stack = [(s, (0,) * d, None, 0)]
    while stack:
        t, idx, par, gen = stack.pop(0)
        sub = block[_slices(t, idx)]
        m = sub.mean()
        dev = np.abs(sub - m)
        osc = float(dev.mean())
        me = len(cubes)
        Q = grid.cube_from_index(base + np.asarray(idx), t, gen)
        cubes.append(Q)
        coefs.append(osc)
        parents.append(par)
        local = np.zeros((s,) * d, dtype=bool)
        local[_slices(t, idx)] = True
        if osc > 0:
            # selection runs in coordinates local to R
            pyr = _Pyramid(dev)
            for tt, ii in _maximal_selection(pyr, t, (0,) * d, 2 * osc):
                jj = tuple(a + c for a, c in zip(ii, idx))
                local[_slices(tt, jj)] = False
                stack.append((tt, jj, me, gen + 1))
        full = np.zeros(grid.shape, dtype=bool)
        full[tuple(slice(c, c + s) for c in corner)] = local
        e_sets.append(np.flatnonzero(full))
    return SparseFamily(Q0, cubes, coefs, parents, e_sets, grid, root_mean)


@dataclass
class DoobResult:
    lhs: float
    rhs: float
    ratio: float
    bound: float
    flagged: bool


def doob_check(grid: Grid, cubes: Sequence[Cube], subsets: Sequence, lambdas, p: float,
               eta: Optional[float] = None, partner_a: Optional[float] = None) -> DoobResult:
    """Compare |sum lambda_k 1_{Q_k}|_p with |sum lambda_k 1_{E_k}|_p.

    With ``eta`` each E_k must be a subset of Q_k holding an eta fraction of it
    and the ratio is flagged above 4/eta.  With ``partner_a`` each E_k is a
    partner cube of the same side within distance A * side, flagged above 4 A^d.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 0):
        raise EtaViolated("coefficients must be non-negative")
    top = np.zeros(grid.size)
    bot = np.zeros(grid.size)
    for Q, E, l in zip(cubes, subsets, lam):
        qc = grid.cells(Q)
        ec = grid.cells(E)
        if partner_a is None:
            if not np.isin(ec, qc).all():
                raise EtaViolated("subset is not inside its cube")
            if eta is not None and len(ec) < eta * len(qc) * (1 - 1e-12):
                raise EtaViolated(f"subset holds {len(ec) / len(qc):.3f} of its cube, below {eta}")
        else:
            if not isinstance(E, Cube) or abs(E.side - Q.side) > 1e-12 * Q.side:
                raise EtaViolated("partner sets must be cubes of the same side")
            gap = np.max(np.abs(E.center - Q.center)) - Q.side
            if gap > partner_a * Q.side * (1 + 1e-12):
                raise EtaViolated("partner cube is too far away")
        top[qc] += l
        bot[ec] += l
    hd = grid.cell_volume
    lhs = float((np.sum(top ** p) * hd) ** (1 / p))
    rhs = float((np.sum(bot ** p) * hd) ** (1 / p))
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    if partner_a is not None:
        bound = 4 * partner_a ** grid.d
    elif eta is not None:
        bound = 4 / eta
    else:
        bound = np.inf
    return DoobResult(lhs, rhs, ratio, bound, bool(ratio > bound))


@dataclass
class ConstantExtraction:
    c: complex
    a: GridFunction
    a_norm: float
    theta: float
    averages: list
    increments: list
    increment_bounds: list
    tails: list
    tail_bounds: list

    @property
    def tail_ok(self) -> bool:
        return all(t <= bd * (1 + 1e-12) for t, bd in zip(self.tails, self.tail_bounds))

    @property
    def increments_ok(self) -> bool:
        return all(t <= bd * (1 + 1e-12) for t, bd in zip(self.increments, self.increment_bounds))


def extract_constant(b: GridFunction, cubes: Sequence[Cube], r: float) -> ConstantExtraction:
    """c = <b> on the largest of nested cubes, a = b - c, with the tail estimates.

    Theta is the largest local norm |b - <b>_{Q_m}|_{L^r(Q_m)}; the increments
    of the averages are compared with Theta |Q_m|^{-1/r} and the distance from
    c with 2 Theta |Q_m|^{-1/r}.
    """
    grid = b.grid
    cells = [grid.cells(Q) for Q in cubes]
    for inner, outer in zip(cells[:-1], cells[1:]):
        if not np.isin(inner, outer).all():
            raise InvalidGrid("cubes must be nested and increasing")
    hd = grid.cell_volume
    avgs = [b.at(cc).mean() for cc in cells]
    thetas = [float((np.sum(np.abs(b.at(cc) - m) ** r) * hd) ** (1 / r)) for cc, m in zip(cells, avgs)]
    theta = max(thetas)
    c = avgs[-1]
    vols = [len(cc) * hd for cc in cells]
    incs = [float(abs(avgs[m + 1] - avgs[m])) for m in range(len(avgs) - 1)]
    inc_bounds = [theta * vols[m] ** (-1 / r) for m in range(len(avgs) - 1)]
    tails = [float(abs(c - avgs[m])) for m in range(len(avgs))]
    tail_bounds = [2 * theta * vols[m] ** (-1 / r) for m in range(len(avgs))]
    a = GridFunction(grid, b.values - c, b.support)
    a_norm = lp_norm(a, r, cubes[-1])
    return ConstantExtraction(c, a, a_norm, theta, avgs, incs, inc_bounds, tails, tail_bounds)
