"""Approximate weak factorization of mean-zero functions.

One step writes a mean-zero f on B as  f = g T h - h T* g + f~  with g resting
on the partner ball and a small error f~ on the support of g.  Running a second
step on f~ with the adjoint sends the error back into the original cube, and
iterating gives a convergent expansion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .commutator import apply_at
from .errors import (DegeneratePairing, MajorSubsetTooSmall, NegativeG, NoDecay, NotMeanZero,
                     SupportExceedsQ)
from .grid import GridFunction, indicator
from .kernels import KernelSpec, ProbeResult

MEAN_TOL = 1e-12
DEGENERACY = 1e-6


def _subset(grid, inner_cells, region) -> bool:
    return np.isin(inner_cells, grid.cells(region)).all()


def check_mean_zero(f: GridFunction, region=None, tol: float = MEAN_TOL, scale: Optional[float] = None):
    """Raise NotMeanZero unless |int f| <= tol * scale (default scale |f|_inf |region|)."""
    grid = f.grid
    cells = f.support_cells() if region is None else grid.cells(region)
    if len(cells) == 0:
        return
    if scale is None:
        scale = f.sup() * len(cells) * grid.cell_volume
    total = abs(f.at(cells).sum() * grid.cell_volume)
    if total > tol * max(scale, 1e-300):
        raise NotMeanZero(f"integral {total:.3e} exceeds tolerance {tol * scale:.3e}")


@dataclass
class StepResult:
    """Output of a single factorization step; ``f_err`` is f~."""

    g: GridFunction
    h: GridFunction
    f_err: GridFunction
    tstar_g_min: float
    lower_witness: float
    product_ratio: float
    err_ratio: float


def _step(kernel: KernelSpec, f: GridFunction, g: GridFunction, src, tgt, A: float,
          mean_scale: Optional[float] = None) -> StepResult:
    grid = f.grid
    d = grid.d
    if np.iscomplexobj(g.values) or np.any(g.values < 0):
        raise NegativeG("g must be real and non-negative")
    sf = f.support_cells()
    if not _subset(grid, sf, src):
        raise SupportExceedsQ("f is not supported in its ball")
    if not _subset(grid, g.support_cells(), tgt):
        raise SupportExceedsQ("g is not supported in the partner ball")
    check_mean_zero(f, src, scale=mean_scale)
    gsup = g.sup()
    tgt_cells = grid.cells(tgt)
    if gsup > 8 * g.at(tgt_cells).mean() * (1 + 1e-12):
        raise MajorSubsetTooSmall("g is too concentrated: |g|_inf > 8 avg g")
    src_cells = grid.cells(src)
    # T* g on the whole source ball
    tsg = apply_at(kernel, g, grid.midpoints(src_cells), adjoint=True)
    tmin = float(np.min(np.abs(tsg)))
    if tmin < DEGENERACY * A ** (-d) * gsup:
        raise DegeneratePairing(f"min |T* g| = {tmin:.3e} on the source ball")
    dtype = complex if (np.iscomplexobj(tsg) or f.is_complex) else float
    hv = np.zeros(grid.size, dtype=dtype)
    tsg_full = np.zeros(grid.size, dtype=tsg.dtype)
    tsg_full[src_cells] = tsg
    hv[sf] = -f.at(sf) / tsg_full[sf]
    h = GridFunction(grid, hv.reshape(grid.shape), f.support)
    sg = g.support_cells()
    th = apply_at(kernel, h, grid.midpoints(sg)) if len(sf) else np.zeros(len(sg))
    ev = np.zeros(grid.size, dtype=np.result_type(th, g.values))
    ev[sg] = -g.at(sg) * th
    f_err = GridFunction(grid, ev.reshape(grid.shape), g.support)
    fsup = f.sup()
    return StepResult(
        g=g, h=h, f_err=f_err, tstar_g_min=tmin,
        lower_witness=tmin * A ** d / gsup,
        product_ratio=(gsup * h.sup() / (A ** d * fsup)) if fsup else 0.0,
        err_ratio=(f_err.sup() / fsup) if fsup else 0.0,
    )


def awf_step(kernel: KernelSpec, f: GridFunction, g: GridFunction, probe: ProbeResult,
             adjoint: bool = False, mean_scale: Optional[float] = None) -> StepResult:
    """One factorization step for f on the probe ball and g >= 0 on the partner.

    With ``adjoint`` the roles flip: f lives on the partner ball, g on the ball,
    and T* takes the place of T.  ``mean_scale`` overrides the scale of the
    mean-zero tolerance, which iterated expansions set from the original f.
    """
    if adjoint:
        return _step(kernel.adjoint(), f, g, probe.partner, probe.ball, probe.A, mean_scale)
    return _step(kernel, f, g, probe.ball, probe.partner, probe.A, mean_scale)


def reconstruct(kernel: KernelSpec, pairs, err: GridFunction) -> GridFunction:
    """sum_i (g_i T h_i - h_i T* g_i) + err, recomputing every operator application."""
    grid = err.grid
    total = np.array(err.values, dtype=complex).reshape(-1)
    for g, h in pairs:
        sg, sh = g.support_cells(), h.support_cells()
        if len(sg) and len(sh):
            total[sg] += g.at(sg) * apply_at(kernel, h, grid.midpoints(sg))
            total[sh] -= h.at(sh) * apply_at(kernel, g, grid.midpoints(sh), adjoint=True)
    if not (np.iscomplexobj(err.values) or kernel.complex_valued
            or any(p.is_complex for pair in pairs for p in pair)):
        total = total.real
    return GridFunction(grid, total.reshape(grid.shape))


@dataclass
class AwfResult:
    """Two-step factorization f = sum_{i=1,2} (g_i T h_i - h_i T* g_i) + err."""

    g1: GridFunction
    h1: GridFunction
    g2: GridFunction
    h2: GridFunction
    err: GridFunction
    probe: ProbeResult
    residual: float
    certificate: dict = field(default_factory=dict)

    @property
    def pairs(self):
        return [(self.g1, self.h1), (self.g2, self.h2)]

    def save(self, stem) -> None:
        """Grid function blobs plus a JSON certificate block."""
        stem = Path(stem)
        for name in ("g1", "h1", "g2", "h2", "err"):
            getattr(self, name).save(f"{stem}.{name}")
        block = {"probe": self.probe.to_json(), "residual": self.residual,
                 "certificate": self.certificate}
        Path(f"{stem}.certificate.json").write_text(json.dumps(block, indent=1, default=_jsonable))


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


def awf_double(kernel: KernelSpec, f: GridFunction, Q, Qt, probe: ProbeResult,
               mean_scale: Optional[float] = None) -> AwfResult:
    """Two steps with g1 = 1_{Q~} and then g~ = 1_Q under the adjoint.

    Q must hold at least a quarter of the cells of the probe ball, Q~ at least a
    quarter of the partner; the final error is supported in Q with mean zero.
    """
    grid = f.grid
    qc, qtc = grid.cells(Q), grid.cells(Qt)
    bc, btc = grid.cells(probe.ball), grid.cells(probe.partner)
    if not (np.isin(qc, bc).all() and np.isin(qtc, btc).all()):
        raise SupportExceedsQ("major subsets must lie inside their balls")
    if 4 * len(qc) < len(bc) or 4 * len(qtc) < len(btc):
        raise MajorSubsetTooSmall("major subsets need a quarter of the ball cells")
    if not np.isin(f.support_cells(), qc).all():
        raise SupportExceedsQ("f is not supported in Q")
    if mean_scale is None:
        mean_scale = f.sup() * len(qc) * grid.cell_volume
    s1 = awf_step(kernel, f, indicator(grid, Qt), probe, mean_scale=mean_scale)
    s2 = awf_step(kernel, s1.f_err, indicator(grid, Q), probe, adjoint=True, mean_scale=mean_scale)
    g2 = -s2.h
    h2 = s2.g
    err = s2.f_err
    rec = reconstruct(kernel, [(s1.g, s1.h), (g2, h2)], err)
    fsup = f.sup()
    residual = float(np.max(np.abs(rec.values - f.values))) / fsup if fsup else float(np.max(np.abs(rec.values)))
    d = grid.d
    A = probe.A
    cert = {
        "eps_a": probe.eps_a,
        "residual": residual,
        "err_ratio": err.sup() / fsup if fsup else 0.0,
        "err_bound": 10 * probe.eps_a,
        "product1_ratio": s1.g.sup() * s1.h.sup() / (A ** d * fsup) if fsup else 0.0,
        "product2_ratio": g2.sup() * h2.sup() / (A ** d * fsup) if fsup else 0.0,
        "product_bound": 32.0,
        "lower_witness": s1.lower_witness,
        "err_support_in_Q": bool(np.isin(err.support_cells(), qc).all()),
        "err_integral": complex(err.at(qc).sum() * grid.cell_volume) if len(qc) else 0.0,
    }
    cert["err_ok"] = cert["err_ratio"] <= cert["err_bound"]
    cert["products_ok"] = max(cert["product1_ratio"], cert["product2_ratio"]) <= 32.0
    return AwfResult(s1.g, s1.h, g2, h2, err, probe, residual, cert)


@dataclass
class AwfExpansion:
    """Iterated factorization; ``errors[j]`` is the sup norm of the error after j+1 rounds."""

    levels: list
    errors: list
    final_error: GridFunction
    f_sup: float
    eps_a: float

    @property
    def pairs(self):
        return [p for lev in self.levels for p in lev.pairs]

    def decay_ratios(self):
        e = [self.f_sup] + list(self.errors)
        return [e[j + 1] / e[j] if e[j] else 0.0 for j in range(len(e) - 1)]

    def bound_holds(self) -> bool:
        return all(e <= (10 * self.eps_a) ** (j + 1) * self.f_sup * (1 + 1e-9)
                   for j, e in enumerate(self.errors))


def awf_expand(kernel: KernelSpec, f: GridFunction, Q, Qt, probe: ProbeResult, depth: int,
               stall: float = 0.9, floor: float = 1e-14) -> AwfExpansion:
    """Apply awf_double to its own error ``depth`` times.

    Stops early once the error is below ``floor`` times |f|_inf, where
    rounding dominates and no further decay can be measured.
    """
    levels, errors = [], []
    scale = f.sup() * f.grid.measure(Q)
    cur = f
    prev = f.sup()
    for _ in range(depth):
        if prev <= floor * f.sup():
            break
        res = awf_double(kernel, cur, Q, Qt, probe, mean_scale=scale)
        e = res.err.sup()
        if e > stall * prev:
            raise NoDecay(f"error went from {prev:.3e} to {e:.3e}")
        levels.append(res)
        errors.append(e)
        cur, prev = res.err, e
    return AwfExpansion(levels, errors, cur, f.sup(), probe.eps_a)
