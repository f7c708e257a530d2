"""Singular integral kernels and the non-degeneracy probe.

Two kernel representations are supported: a vectorized two-variable evaluator
K(x, y), and a rough homogeneous kernel Omega((x-y)/|x-y|) / |x-y|^d given by a
table of Omega on the unit sphere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import (ATooLargeForGrid, ConfigError, DiagonalEvaluation, EmptyRegion,
                     NonDegeneracyFailed, OutOfGrid)
from .grid import Ball, Grid
from .rng import stream

TWO_VARIABLE = "two_variable"
HOMOGENEOUS = "homogeneous"

# rows * cols per block when forming kernel matrices
BLOCK = 2_000_000


def riesz_constant(d: int) -> float:
    return math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description.

    ``func(x, y)`` (two-variable) or ``omega(u)`` (homogeneous, u unit vectors)
    must broadcast over leading axes with the coordinate axis last.
    ``c_k`` bounds |K(x,y)| |x-y|^d, ``c0`` is the non-degeneracy constant and
    ``omega_table`` tabulates the smoothness modulus on [0, 1/2].
    """

    name: str
    d: int
    variant: str
    func: Optional[Callable] = None
    omega: Optional[Callable] = None
    theta0: Optional[tuple] = None
    c_k: float = 1.0
    c0: float = 10.0
    omega_table: tuple = ()
    complex_valued: bool = False
    params: dict = field(default_factory=dict, compare=False)
    transposed: bool = False

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.transposed:
            x, y = y, x
        if self.variant == HOMOGENEOUS:
            diff = x - y
            r = np.sqrt(np.sum(diff * diff, axis=-1))
            with np.errstate(invalid="ignore", divide="ignore"):
                u = diff / r[..., None]
                return self.omega(u) / r ** self.d
        return self.func(x, y)

    def matrix(self, targets, sources) -> np.ndarray:
        """Kernel values K(x_i, y_j) for target rows x_i and source columns y_j."""
        x = np.asarray(targets, dtype=float)[:, None, :]
        y = np.asarray(sources, dtype=float)[None, :, :]
        return self(x, y)

    def adjoint(self) -> "KernelSpec":
        """Kernel of the transpose operator, K*(x, y) = K(y, x)."""
        name = self.name[:-1] if self.name.endswith("*") else self.name + "*"
        theta0 = None if self.theta0 is None else tuple(-np.asarray(self.theta0))
        return KernelSpec(name, self.d, self.variant, self.func, self.omega,
                          theta0, self.c_k, self.c0, self.omega_table, self.complex_valued,
                          self.params, not self.transposed)

    def to_json(self) -> dict:
        out = dict(self.params)
        out.setdefault("name", self.name)
        if self.transposed:
            out["adjoint"] = True
        return out


def _table(c: float, power: int):
    t = np.linspace(0.0, 0.5, 11)
    return tuple(zip(t.tolist(), (c * t / (1 - t) ** power).tolist()))


def hilbert() -> KernelSpec:
    """K(x, y) = 1 / (pi (x - y)) on the line."""

    def func(x, y):
        return 1.0 / (np.pi * (x[..., 0] - y[..., 0]))

    return KernelSpec("hilbert", 1, TWO_VARIABLE, func=func, c_k=1 / np.pi, c0=np.pi,
                      omega_table=_table(1 / np.pi, 1), params={"name": "hilbert"})


def riesz(j: int, d: int) -> KernelSpec:
    """K(x, y) = c_d (x_j - y_j) / |x - y|^(d+1), j counted from 1."""
    if not 1 <= j <= d:
        raise ConfigError(f"Riesz index {j} out of range for d={d}")
    c = riesz_constant(d)

    def func(x, y):
        diff = x - y
        r2 = np.sum(diff * diff, axis=-1)
        return c * diff[..., j - 1] / r2 ** ((d + 1) / 2)

    return KernelSpec(f"riesz{j}", d, TWO_VARIABLE, func=func, c_k=c, c0=2.0 ** d / c,
                      omega_table=_table((d + 2) * c, d + 1),
                      params={"name": "riesz", "j": j, "d": d})


def ahlfors_beurling() -> KernelSpec:
    """K(z, w) = -1 / (pi (z - w)^2) in the complex plane (complex valued)."""

    def func(x, y):
        z = (x[..., 0] - y[..., 0]) + 1j * (x[..., 1] - y[..., 1])
        return -1.0 / (np.pi * z * z)

    return KernelSpec("ahlfors_beurling", 2, TWO_VARIABLE, func=func, c_k=1 / np.pi, c0=4 * np.pi,
                      omega_table=_table(3 / np.pi, 3), complex_valued=True,
                      params={"name": "ahlfors_beurling"})


def zero_kernel(d: int = 1) -> KernelSpec:
    def func(x, y):
        return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])

    return KernelSpec("zero", d, TWO_VARIABLE, func=func, c_k=0.0, params={"name": "zero", "d": d})


def two_variable(name: str, d: int, func: Callable, c_k: float, c0: float = 10.0,
                 complex_valued: bool = False) -> KernelSpec:
    """Wrap a user evaluator K(x, y)."""
    return KernelSpec(name, d, TWO_VARIABLE, func=func, c_k=c_k, c0=c0, complex_valued=complex_valued,
                      params={"name": name})


def _omega_from_table(d: int, table: dict) -> Callable:
    if d == 1:
        vm, vp = float(table["minus"]), float(table["plus"])
        return lambda u: np.where(u[..., 0] > 0, vp, vm)
    if d == 2 and "edges" in table:
        edges = np.asarray(table["edges"], dtype=float)
        vals = np.asarray(table["values"], dtype=float)
        if len(edges) != len(vals) + 1 or edges[0] != 0.0 or not np.all(np.diff(edges) > 0):
            raise ConfigError("angle table needs increasing edges from 0 with one value per bin")

        def omega(u):
            ang = np.mod(np.arctan2(u[..., 1], u[..., 0]), 2 * np.pi)
            k = np.clip(np.searchsorted(edges, ang, side="right") - 1, 0, len(vals) - 1)
            return vals[k]

        return omega
    if d == 2 and ("cos" in table or "sin" in table):
        cs = np.asarray(table.get("cos", [0.0]), dtype=float)
        ss = np.asarray(table.get("sin", [0.0]), dtype=float)

        def omega(u):
            ang = np.arctan2(u[..., 1], u[..., 0])
            out = np.zeros(ang.shape)
            for m, a in enumerate(cs):
                out = out + a * np.cos(m * ang)
            for m, b in enumerate(ss):
                out = out + b * np.sin(m * ang)
            return out

        return omega
    raise ConfigError(f"no table format for homogeneous kernels in dimension {d}")


def rough_homogeneous(d: int, table: dict, theta0, name: str = "rough") -> KernelSpec:
    """Omega((x-y)/|x-y|) / |x-y|^d with Omega read from a table.

    d = 1: ``{"minus": v, "plus": v}``.  d = 2: piecewise constant
    ``{"edges": [0, ..., 2pi], "values": [...]}`` or trigonometric
    ``{"cos": [a0, a1, ...], "sin": [0, b1, ...]}``.
    """
    omega = _omega_from_table(d, table)
    theta0 = np.asarray(theta0, dtype=float).reshape(d)
    theta0 = tuple(theta0 / np.linalg.norm(theta0))
    probe_pts = np.random.default_rng(0).normal(size=(4096, d))
    probe_pts /= np.linalg.norm(probe_pts, axis=1, keepdims=True)
    c_k = float(max(np.max(np.abs(omega(probe_pts))), abs(float(omega(np.asarray(theta0)[None])[0]))))
    return KernelSpec(name, d, HOMOGENEOUS, omega=omega, theta0=theta0, c_k=c_k,
                      params={"name": name, "variant": HOMOGENEOUS, "d": d, "table": table,
                              "theta0": list(theta0)})


def homogeneous(d: int, omega: Callable, theta0, c_k: float, name: str = "homogeneous") -> KernelSpec:
    theta0 = np.asarray(theta0, dtype=float).reshape(d)
    return KernelSpec(name, d, HOMOGENEOUS, omega=omega, theta0=tuple(theta0 / np.linalg.norm(theta0)),
                      c_k=c_k, params={"name": name})


def from_json(desc) -> KernelSpec:
    """Build a kernel from a JSON object, a JSON file path, or a built-in name."""
    if isinstance(desc, (str, Path)) and Path(str(desc)).suffix == ".json":
        desc = json.loads(Path(desc).read_text())
    if isinstance(desc, str):
        desc = {"name": desc}
    name = desc.get("name")
    if desc.get("variant") == HOMOGENEOUS:
        k = rough_homogeneous(int(desc["d"]), desc["table"], desc["theta0"], name or "rough")
    elif name == "hilbert":
        k = hilbert()
    elif name == "riesz":
        k = riesz(int(desc.get("j", 1)), int(desc.get("d", 2)))
    elif name in ("ahlfors_beurling", "beurling"):
        k = ahlfors_beurling()
    elif name == "zero":
        k = zero_kernel(int(desc.get("d", 1)))
    else:
        raise ConfigError(f"unknown kernel {name!r}")
    return k.adjoint() if desc.get("adjoint") else k


def eval_kernel(kernel: KernelSpec, x, y, h: Optional[float] = None):
    """Pointwise kernel value; refuses points closer than half a cell."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    too_close = dist == 0 if h is None else dist < 0.5 * h
    if np.any(too_close):
        raise DiagonalEvaluation("kernel evaluated on the diagonal")
    return kernel(x, y)


def check_kernel(kernel: KernelSpec, grid: Grid, samples: int = 2000, seed: int = 0) -> dict:
    """Sampled checks of the size bound and of the smoothness modulus table."""
    rng = stream(seed, "check_kernel")
    lo = np.asarray(grid.lo)
    x = lo + rng.random((samples, kernel.d)) * grid.side
    y = lo + rng.random((samples, kernel.d)) * grid.side
    r = np.linalg.norm(x - y, axis=1)
    keep = r > grid.h
    x, y, r = x[keep], y[keep], r[keep]
    vals = np.abs(kernel(x, y))
    size_ok = bool(np.all(vals * r ** kernel.d <= kernel.c_k * (1 + 1e-9) + 1e-300))
    out = {"size_bound": size_ok}
    if kernel.variant == HOMOGENEOUS:
        scaled = np.abs(kernel(y + 2.0 * (x - y), y)) * (2.0 * r) ** kernel.d
        out["homogeneity"] = bool(np.allclose(scaled, vals * r ** kernel.d, rtol=1e-12, atol=0))
        return out
    if kernel.omega_table:
        t_tab = np.array([p[0] for p in kernel.omega_table])
        w_tab = np.array([p[1] for p in kernel.omega_table])
        out["omega_monotone"] = bool(np.all(np.diff(w_tab) >= 0) and w_tab[0] == 0.0)
        t = rng.random(len(r)) * 0.5
        direction = rng.normal(size=x.shape)
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        xs = x + (t * r)[:, None] * direction
        lhs = np.abs(kernel(xs, y) - kernel(x, y)) * r ** kernel.d
        rhs = np.interp(t, t_tab, w_tab)
        out["smoothness"] = bool(np.all(lhs <= rhs * (1 + 1e-9) + 1e-12))
    return out


@dataclass
class ProbeResult:
    """Partner ball and large-scale smoothness measurement for a ball B and ratio A."""

    A: float
    ball: Ball
    partner: Ball
    kernel_value: complex
    eps_a: float
    sigma: Optional[complex]
    qupos_min: float
    dist_ratio: float
    size_const: float
    cells: int
    partner_cells: int
    sampled: bool

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.partner.center)

    @property
    def y0(self) -> np.ndarray:
        return np.asarray(self.ball.center)

    def invariants(self) -> dict:
        return {
            "disjoint": self.dist_ratio > 0,
            "distance_comparable": 0.25 <= self.dist_ratio <= 4.0,
            "kernel_nonzero": abs(self.kernel_value) > 0,
            "eps_finite": bool(np.isfinite(self.eps_a)),
        }

    def to_json(self) -> dict:
        kv = complex(self.kernel_value)
        return {
            "A": self.A, "ball": self.ball.to_json(), "partner": self.partner.to_json(),
            "kernel_value": [kv.real, kv.imag], "eps_a": self.eps_a,
            "sigma": None if self.sigma is None else [self.sigma.real, self.sigma.imag],
            "qupos_min": self.qupos_min, "dist_ratio": self.dist_ratio,
            "size_const": self.size_const, "cells": self.cells,
            "partner_cells": self.partner_cells, "sampled": self.sampled,
        }


def _partner_fits(grid: Grid, centers: np.ndarray, r: float) -> np.ndarray:
    lo = np.asarray(grid.lo)
    hi = np.asarray(grid.hi)
    tol = 1e-9 * grid.side
    return np.all((centers - r >= lo - tol) & (centers + r <= hi + tol), axis=1)


def _shell_argmax(kernel: KernelSpec, grid: Grid, y0: np.ndarray, r: float, A: float):
    cand = grid.cells(Ball(tuple(y0), 2 * A * r))
    pts = grid.midpoints(cand)
    dist = np.linalg.norm(pts - y0, axis=1)
    keep = (dist >= A * r) & _partner_fits(grid, pts, r)
    if not np.any(keep):
        raise OutOfGrid("no point of the probe shell leaves room for a partner ball")
    pts = pts[keep]
    vals = np.abs(kernel(pts, y0[None, :]))
    i = int(np.argmax(vals))
    return pts[i], float(vals[i])


def probe_non_degeneracy(kernel: KernelSpec, grid: Grid, ball: Ball, A: float,
                         seed: int = 0, max_cells: int = 4096, n_sampled: int = 256) -> ProbeResult:
    """Find the partner ball at distance about A r and measure eps_A.

    Homogeneous kernels put the partner at y0 + A r theta0.  Two-variable
    kernels scan the shell A r <= |x - y0| <= 2 A r for the largest |K(x, y0)|,
    restricted to centres whose partner ball fits in the grid.
    """
    if kernel.d != grid.d or ball.d != grid.d:
        raise OutOfGrid("kernel, grid and ball dimensions differ")
    if A < 3:
        raise NonDegeneracyFailed("A must be at least 3 so the balls are disjoint")
    grid.require_inside(ball)
    y0 = np.asarray(ball.center)
    r = ball.radius
    d = grid.d
    if kernel.variant == HOMOGENEOUS:
        x0 = y0 + A * r * np.asarray(kernel.theta0)
        partner = Ball(tuple(x0), r)
        grid.require_inside(partner)
        k0 = complex(kernel(x0, y0))
        if k0 == 0:
            raise NonDegeneracyFailed("Omega vanishes in the chosen direction")
    else:
        x0, peak = _shell_argmax(kernel, grid, y0, r, A)
        partner = Ball(tuple(x0), r)
        if not peak >= 1.0 / (kernel.c0 * (2 * A * r) ** d):
            raise NonDegeneracyFailed(f"kernel too small on the probe shell (max {peak:.3e})")
        k0 = complex(kernel(x0, y0))
    ys = grid.cells(ball)
    xs = grid.cells(partner)
    if len(ys) == 0 or len(xs) == 0:
        raise EmptyRegion("ball contains no cells")
    Y = grid.midpoints(ys)
    X = grid.midpoints(xs)
    rng = stream(seed, "probe")
    sampled = False
    rows = np.arange(len(X))
    cols = np.arange(len(Y))
    if len(X) > max_cells:
        rows = np.sort(rng.choice(len(X), n_sampled, replace=False))
        sampled = True
    if len(Y) > max_cells:
        cols = np.sort(rng.choice(len(Y), n_sampled, replace=False))
        sampled = True
    hd = grid.cell_volume
    sigma = np.conj(k0) / abs(k0)
    term1 = 0.0
    pos_min = np.inf
    step = max(1, BLOCK // len(Y))
    for a in range(0, len(rows), step):
        blk = kernel.matrix(X[rows[a:a + step]], Y)
        term1 = max(term1, float(np.max(np.sum(np.abs(blk - k0), axis=1))) * hd)
        pos_min = min(pos_min, float(np.min(np.real(sigma * blk))))
    colsum = np.zeros(len(cols))
    step = max(1, BLOCK // len(cols))
    for a in range(0, len(X), step):
        blk = kernel.matrix(X[a:a + step], Y[cols])
        colsum += np.sum(np.abs(blk - k0), axis=0)
        pos_min = min(pos_min, float(np.min(np.real(sigma * blk))))
    term2 = float(np.max(colsum)) * hd
    eps = A ** d * (term1 + term2)
    scale = (A * r) ** d
    qupos = pos_min * scale
    dist = float(np.linalg.norm(x0 - y0)) - 2 * r
    return ProbeResult(
        A=float(A), ball=ball, partner=partner, kernel_value=k0, eps_a=float(eps),
        sigma=complex(sigma) if qupos > 0 else None, qupos_min=float(qupos),
        dist_ratio=dist / (A * r), size_const=abs(k0) * scale, cells=len(ys),
        partner_cells=len(xs), sampled=sampled,
    )


def choose_a(kernel: KernelSpec, grid: Grid, ball: Ball, eps_target: float,
             a_values=(4, 8, 16, 32, 64, 128, 256, 512, 1024), seed: int = 0) -> ProbeResult:
    """Probe for the smallest A in the ladder with eps_A <= eps_target."""
    tried = []
    for A in a_values:
        try:
            res = probe_non_degeneracy(kernel, grid, ball, A, seed=seed)
        except OutOfGrid:
            break
        tried.append((A, res.eps_a))
        if res.eps_a <= eps_target:
            return res
    raise ATooLargeForGrid(f"no A reaches eps <= {eps_target} inside the grid (tried {tried})")
