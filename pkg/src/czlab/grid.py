"""Uniform cell grids, cell-aligned regions and grid functions.

A grid partitions an axis-parallel box in R^d into n^d congruent cells.  Integrals
use the midpoint rule, so a function is identified with its array of cell values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import EmptyRegion, InvalidGrid, OutOfGrid, RealRequired

ALIGN_TOL = 1e-9


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel cube given by its lower corner and side length."""

    corner: tuple
    side: float
    generation: int = 0

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(float(c) for c in np.atleast_1d(self.corner)))
        object.__setattr__(self, "side", float(self.side))
        if self.side <= 0:
            raise InvalidGrid("cube side must be positive")

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.corner) + 0.5 * self.side

    @property
    def volume(self) -> float:
        return self.side ** self.d

    def dilate(self, factor: float) -> "Cube":
        """Concentric cube with side multiplied by ``factor``."""
        side = self.side * factor
        return Cube(tuple(self.center - 0.5 * side), side, self.generation)

    def translate(self, v) -> "Cube":
        return Cube(tuple(np.asarray(self.corner) + np.asarray(v, dtype=float)), self.side, self.generation)

    def to_json(self) -> dict:
        return {"corner": list(self.corner), "side": self.side, "generation": self.generation}


@dataclass(frozen=True)
class Ball:
    """Euclidean ball; rasterized as the cells whose midpoint lies in the closed ball."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise InvalidGrid("ball radius must be positive")

    @property
    def d(self) -> int:
        return len(self.center)

    def to_json(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Grid:
    """Box ``lo + [0, side]^d`` split into ``n`` cells per axis.

    ``periodic`` marks the box as a torus; only the Fourier solver and the
    periodic difference operators look at it.
    """

    d: int
    lo: tuple
    side: float
    n: int
    periodic: bool = False

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lo))
        if len(lo) == 1 and self.d > 1:
            lo = lo * self.d
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "side", float(self.side))
        if self.d not in (1, 2, 3):
            raise InvalidGrid(f"dimension must be 1, 2 or 3, got {self.d}")
        if len(lo) != self.d:
            raise InvalidGrid("lower corner has the wrong dimension")
        if not _is_pow2(int(self.n)) or self.n < 2:
            raise InvalidGrid(f"cells per axis must be a power of two >= 2, got {self.n}")
        if not self.side > 0:
            raise InvalidGrid("box side must be positive")

    @classmethod
    def centered(cls, d: int, half_width: float, n: int, periodic: bool = False) -> "Grid":
        return cls(d, (-half_width,) * d, 2.0 * half_width, n, periodic)

    @classmethod
    def covering(cls, regions: Sequence, n: int, factor: float = 4.0) -> "Grid":
        """Grid whose box is ``factor`` times the bounding cube of the regions."""
        los, his = [], []
        for reg in regions:
            if isinstance(reg, Ball):
                c = np.asarray(reg.center)
                los.append(c - reg.radius)
                his.append(c + reg.radius)
            elif isinstance(reg, Cube):
                los.append(np.asarray(reg.corner))
                his.append(np.asarray(reg.corner) + reg.side)
            else:
                raise InvalidGrid("covering() takes balls and cubes")
        lo = np.min(los, axis=0)
        hi = np.max(his, axis=0)
        center = 0.5 * (lo + hi)
        width = factor * float(np.max(hi - lo))
        return cls(len(center), tuple(center - 0.5 * width), width, n)

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def hi(self) -> tuple:
        return tuple(x + self.side for x in self.lo)

    def refine(self) -> "Grid":
        return Grid(self.d, self.lo, self.side, 2 * self.n, self.periodic)

    def axis_midpoints(self, axis: int = 0) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.n) + 0.5) * self.h

    def coords(self) -> list:
        """Midpoint coordinate arrays, one per axis, each of grid shape."""
        axes = [self.axis_midpoints(i) for i in range(self.d)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def midpoints(self, cells=None) -> np.ndarray:
        """Midpoints of the given flat cell indices (all cells if None), shape (m, d)."""
        if cells is None:
            cells = np.arange(self.size)
        idx = np.unravel_index(np.asarray(cells), self.shape)
        return np.stack([self.lo[i] + (idx[i] + 0.5) * self.h for i in range(self.d)], axis=-1)

    def sample(self, func: Callable, support=None) -> "GridFunction":
        """Evaluate ``func(x)`` with ``x`` of shape (..., d) at every midpoint."""
        pts = np.stack(self.coords(), axis=-1)
        vals = np.asarray(func(pts))
        return GridFunction(self, vals, support)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def ones(self, region=None) -> "GridFunction":
        return indicator(self, region)

    # -- regions ---------------------------------------------------------

    def cube_index(self, cube: Cube) -> tuple:
        """Integer lower-corner index and side in cells of a cell-aligned cube."""
        if cube.d != self.d:
            raise InvalidGrid("cube dimension does not match the grid")
        raw = (np.asarray(cube.corner) - np.asarray(self.lo)) / self.h
        corner = np.rint(raw).astype(int)
        s_raw = cube.side / self.h
        s = int(round(s_raw))
        if np.any(np.abs(raw - corner) > ALIGN_TOL * max(1.0, np.max(np.abs(raw)))) or abs(
            s_raw - s
        ) > ALIGN_TOL * max(1.0, s_raw) or s < 1:
            raise InvalidGrid(f"cube {cube} is not aligned with cells of width {self.h}")
        return tuple(int(c) for c in corner), s

    def cube_from_index(self, corner, side_cells: int, generation: int = 0) -> Cube:
        corner = np.asarray(corner, dtype=float)
        return Cube(tuple(np.asarray(self.lo) + corner * self.h), side_cells * self.h, generation)

    def contains(self, region) -> bool:
        """True when the region lies inside the closed box."""
        tol = ALIGN_TOL * self.side
        if isinstance(region, Ball):
            c = np.asarray(region.center)
            return bool(np.all(c - region.radius >= np.asarray(self.lo) - tol)
                        and np.all(c + region.radius <= np.asarray(self.hi) + tol))
        if isinstance(region, Cube):
            c = np.asarray(region.corner)
            return bool(np.all(c >= np.asarray(self.lo) - tol)
                        and np.all(c + region.side <= np.asarray(self.hi) + tol))
        return True

    def require_inside(self, region):
        if not self.contains(region):
            raise OutOfGrid(f"{region} does not fit in the grid box")

    def mask(self, region) -> np.ndarray:
        """Boolean cell mask of a region (Cube, Ball, mask array or GridFunction support)."""
        if region is None:
            return np.ones(self.shape, dtype=bool)
        if isinstance(region, GridFunction):
            return region.support.copy()
        if isinstance(region, np.ndarray):
            if region.shape != self.shape:
                raise InvalidGrid("mask shape does not match the grid")
            return region.astype(bool)
        m = np.zeros(self.shape, dtype=bool)
        m.flat[self.cells(region)] = True
        return m

    def cells(self, region) -> np.ndarray:
        """Sorted flat indices of the cells in a region."""
        if region is None:
            return np.arange(self.size)
        if isinstance(region, (np.ndarray, GridFunction)):
            return np.flatnonzero(self.mask(region))
        if isinstance(region, Cube):
            corner, s = self.cube_index(region)
            sl = []
            for c in corner:
                a, b = max(c, 0), min(c + s, self.n)
                if b <= a:
                    return np.zeros(0, dtype=int)
                sl.append(np.arange(a, b))
            idx = np.meshgrid(*sl, indexing="ij")
            return np.sort(np.ravel_multi_index([i.ravel() for i in idx], self.shape))
        if isinstance(region, Ball):
            if region.d != self.d:
                raise InvalidGrid("ball dimension does not match the grid")
            c = np.asarray(region.center)
            rng = []
            for i in range(self.d):
                a = int(np.ceil((c[i] - region.radius - self.lo[i]) / self.h - 0.5))
                b = int(np.floor((c[i] + region.radius - self.lo[i]) / self.h - 0.5))
                a, b = max(a, 0), min(b, self.n - 1)
                if b < a:
                    return np.zeros(0, dtype=int)
                rng.append(np.arange(a, b + 1))
            idx = np.meshgrid(*rng, indexing="ij")
            flat = [i.ravel() for i in idx]
            pts = np.stack([self.lo[i] + (flat[i] + 0.5) * self.h for i in range(self.d)], axis=-1)
            inside = np.sum((pts - c) ** 2, axis=-1) <= region.radius ** 2
            sel = [f[inside] for f in flat]
            return np.sort(np.ravel_multi_index(sel, self.shape))
        raise InvalidGrid(f"unsupported region type {type(region).__name__}")

    def measure(self, region) -> float:
        return len(self.cells(region)) * self.cell_volume

    def to_json(self) -> dict:
        return {"d": self.d, "n": self.n, "box": {"lo": list(self.lo), "side": self.side},
                "periodic": self.periodic}


Region = Union[Cube, Ball, np.ndarray, "GridFunction", None]


class GridFunction:
    """Cell values on a grid together with a support mask; values vanish off the support."""

    def __init__(self, grid: Grid, values, support=None):
        vals = np.asarray(values)
        if vals.shape != grid.shape:
            vals = np.broadcast_to(vals, grid.shape)
        if np.iscomplexobj(vals):
            vals = vals.astype(np.complex128)
        else:
            vals = vals.astype(np.float64)
        supp = np.ones(grid.shape, dtype=bool) if support is None else grid.mask(support)
        vals = np.where(supp, vals, 0)
        vals.setflags(write=False)
        supp.setflags(write=False)
        self.grid = grid
        self.values = vals
        self.support = supp

    def __repr__(self):
        return f"GridFunction(d={self.grid.d}, n={self.grid.n}, cells={int(self.support.sum())})"

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def at(self, cells) -> np.ndarray:
        return self.values.reshape(-1)[np.asarray(cells)]

    def support_cells(self) -> np.ndarray:
        return np.flatnonzero(self.support)

    def restrict(self, region) -> "GridFunction":
        return GridFunction(self.grid, self.values, self.support & self.grid.mask(region))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.support)

    def real(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.real, self.support)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise InvalidGrid("grid functions live on different grids")
            return GridFunction(self.grid, op(self.values, other.values), self.support | other.support)
        return GridFunction(self.grid, op(self.values, other), self.support)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.grid, self.values * other.values, self.support & other.support)
        return GridFunction(self.grid, self.values * other, self.support)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.support)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values), self.support)

    # -- serialization ---------------------------------------------------

    def header(self) -> dict:
        head = self.grid.to_json()
        head["dtype"] = "complex128" if self.is_complex else "float64"
        head["support_rle"] = run_lengths(self.support.reshape(-1))
        return head

    def save(self, stem) -> None:
        """Write ``stem.bin`` (row-major 64-bit floats) and ``stem.json`` (header)."""
        stem = Path(stem)
        vals = self.values.reshape(-1)
        if self.is_complex:
            vals = np.stack([vals.real, vals.imag], axis=-1).reshape(-1)
        np.ascontiguousarray(vals, dtype="<f8").tofile(str(stem) + ".bin")
        Path(str(stem) + ".json").write_text(json.dumps(self.header(), indent=1))

    @classmethod
    def load(cls, stem) -> "GridFunction":
        stem = Path(stem)
        head = json.loads(Path(str(stem) + ".json").read_text())
        grid = Grid(head["d"], tuple(head["box"]["lo"]), head["box"]["side"], head["n"],
                    head.get("periodic", False))
        raw = np.fromfile(str(stem) + ".bin", dtype="<f8")
        if head["dtype"] == "complex128":
            raw = raw[0::2] + 1j * raw[1::2]
        supp = from_run_lengths(head["support_rle"], grid.size).reshape(grid.shape)
        return cls(grid, raw.reshape(grid.shape), supp)


def run_lengths(mask: np.ndarray) -> list:
    """Alternating run lengths of a flat boolean array, starting with a False run."""
    mask = np.asarray(mask, dtype=bool)
    change = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [mask.size]])
    runs = np.diff(bounds).tolist()
    if mask.size and mask[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def from_run_lengths(runs, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos, val = 0, False
    for r in runs:
        out[pos:pos + r] = val
        pos += r
        val = not val
    return out


def indicator(grid: Grid, region) -> GridFunction:
    m = grid.mask(region)
    return GridFunction(grid, m.astype(float), m)


def _region_values(f: GridFunction, region):
    cells = f.grid.cells(region)
    if len(cells) == 0:
        raise EmptyRegion("region contains no cells")
    return f.at(cells)


def integrate(f: GridFunction, region=None):
    """Midpoint quadrature h^d * sum of values over the region."""
    vals = _region_values(f, region)
    return vals.sum() * f.grid.cell_volume


def measure(grid: Grid, region) -> float:
    return grid.measure(region)


def average(f: GridFunction, region=None):
    vals = _region_values(f, region)
    return vals.sum() / len(vals)


def lp_norm(f: GridFunction, p: float, region=None) -> float:
    if region is None:
        vals = f.values.reshape(-1)
    else:
        vals = _region_values(f, region)
    a = np.abs(vals)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * f.grid.cell_volume) ** (1.0 / p))


def mean_oscillation(b: GridFunction, region) -> float:
    """Average of |b - <b>_R| over the region R."""
    vals = _region_values(b, region)
    return float(np.mean(np.abs(vals - vals.mean())))


def median_on(b: GridFunction, region) -> float:
    """Lower median of a real function on a region.

    The returned value m satisfies |{b <= m}| >= |R|/2 and |{b >= m}| >= |R|/2.
    """
    if b.is_complex:
        raise RealRequired("median needs a real-valued function")
    vals = np.sort(_region_values(b, region))
    return float(vals[(len(vals) - 1) // 2])


def inscribed_cube(grid: Grid, ball: Ball) -> Cube:
    """Largest cell-aligned cube, roughly centred, whose cells all lie in the ball."""
    ball_cells = grid.cells(ball)
    c = (np.asarray(ball.center) - np.asarray(grid.lo)) / grid.h
    s = int(np.floor(2 * ball.radius / np.sqrt(grid.d) / grid.h)) + 2
    while s >= 1:
        corner = np.rint(c - s / 2).astype(int)
        cube = grid.cube_from_index(corner, s)
        if np.isin(grid.cells(cube), ball_cells).all() and len(grid.cells(cube)) == s ** grid.d:
            return cube
        s -= 1
    raise EmptyRegion("ball too small to hold a cell")
