"""Discrete Jacobians, the derivative-to-Jacobian lift and related tools.

Gradients are central differences, so affine maps are differentiated exactly
whenever their values are exact in floating point.  Fourier work happens on a
periodic grid.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .errors import (EnumerationTooLarge, InvalidGrid, NotMeanZero, OutOfGrid, OutsideBall,
                     StalledResidual, SupportExceedsQ, SupportTouchesBoundary)
from .grid import Cube, Grid, GridFunction
from .rng import parallel_map, stream

BOUNDARY_MARGIN = 2


# -- vector fields ---------------------------------------------------------


class VectorField:
    """d component arrays on a common grid."""

    def __init__(self, grid: Grid, comps):
        arr = np.array([np.asarray(c.values if isinstance(c, GridFunction) else c, dtype=float)
                        for c in comps])
        if arr.shape != (grid.d,) + grid.shape:
            raise InvalidGrid(f"need {grid.d} components of shape {grid.shape}")
        arr.setflags(write=False)
        self.grid = grid
        self.comps = arr

    def __getitem__(self, i) -> GridFunction:
        return GridFunction(self.grid, self.comps[i])

    def scaled(self, t: float) -> "VectorField":
        return VectorField(self.grid, t * self.comps)

    def swapped(self, i: int, j: int) -> "VectorField":
        c = self.comps.copy()
        c[[i, j]] = c[[j, i]]
        return VectorField(self.grid, c)

    @property
    def support(self) -> np.ndarray:
        return np.any(self.comps != 0, axis=0)

    def save(self, stem) -> None:
        """``stem.bin`` holds the d component blobs back to back; ``stem.json`` the header."""
        np.ascontiguousarray(self.comps.reshape(-1), dtype="<f8").tofile(f"{stem}.bin")
        head = self.grid.to_json()
        head["components"] = self.grid.d
        Path(f"{stem}.json").write_text(json.dumps(head, indent=1))

    @classmethod
    def load(cls, stem) -> "VectorField":
        head = json.loads(Path(f"{stem}.json").read_text())
        grid = Grid(head["d"], tuple(head["box"]["lo"]), head["box"]["side"], head["n"], head["periodic"])
        raw = np.fromfile(f"{stem}.bin", dtype="<f8")
        return cls(grid, raw.reshape((grid.d,) + grid.shape))


def _diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    # zero padding and wrapping agree once the support keeps off the boundary
    return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * h)


def _check_margin(grid: Grid, support: np.ndarray, margin: int = BOUNDARY_MARGIN):
    if grid.periodic:
        return
    for ax in range(grid.d):
        idx = np.flatnonzero(np.any(support, axis=tuple(i for i in range(grid.d) if i != ax)))
        if idx.size and (idx[0] < margin or idx[-1] >= grid.n - margin):
            raise SupportTouchesBoundary(f"support comes within {margin} cells of the box edge")


def gradient(a: np.ndarray, grid: Grid) -> np.ndarray:
    """Central-difference gradient, shape (d, *grid.shape)."""
    return np.array([_diff(a, ax, grid.h) for ax in range(grid.d)])


def _lex_less(a: np.ndarray, b: np.ndarray) -> int:
    ne = np.flatnonzero(a.reshape(-1) != b.reshape(-1))
    if ne.size == 0:
        return 0
    i = ne[0]
    return -1 if a.flat[i] < b.flat[i] else 1


def _det(rows) -> np.ndarray:
    d = len(rows)
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    a, b, c = rows
    return (a[0] * (b[1] * c[2] - b[2] * c[1])
            - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def jacobian_det(u: VectorField) -> GridFunction:
    """det(D_i u_j) by cofactor expansion.

    Components are put in a fixed numeric order before expanding and the sign
    of that permutation is applied afterwards, so swapping two components
    negates the result exactly.
    """
    grid = u.grid
    _check_margin(grid, u.support)
    order = sorted(range(grid.d), key=functools.cmp_to_key(lambda i, j: _lex_less(u.comps[i], u.comps[j])))
    sign = 1
    perm = list(order)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    rows = [gradient(u.comps[i], grid) for i in order]
    return GridFunction(grid, sign * _det(rows))


def integral_check(u: VectorField) -> dict:
    """|int Ju| against h * prod ||grad u_i||_d, the scale at which it should vanish."""
    grid = u.grid
    J = jacobian_det(u)
    total = float(J.values.sum() * grid.cell_volume)
    scale = grid.h * np.prod([grad_norm(u.comps[i], grid, grid.d) for i in range(grid.d)])
    return {"integral": total, "scale": float(scale), "ratio": abs(total) / scale if scale else 0.0}


def grad_norm(a: np.ndarray, grid: Grid, r: float) -> float:
    """L^r norm of the pointwise Euclidean length of the gradient."""
    g = np.sqrt(np.sum(gradient(a, grid) ** 2, axis=0))
    if np.isinf(r):
        return float(g.max())
    return float((np.sum(g ** r) * grid.cell_volume) ** (1 / r))


# -- bumps and the lift -----------------------------------------------------


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _offsets(grid: Grid, corner: int, axis_len: int) -> np.ndarray:
    """Cell offsets j - corner; on a torus wrapped into a window centred on the cube."""
    j = np.arange(grid.n) - corner
    if grid.periodic:
        half = grid.n // 2
        j = (j - axis_len // 2 + half) % grid.n - half + axis_len // 2
    return j


def _profile(j: np.ndarray, s: int) -> np.ndarray:
    # distance of the midpoint to [0, s] in cells, over the band width s/2
    m = j + 0.5
    dist = np.maximum(np.maximum(-m, m - s), 0.0)
    return smoothstep(1.0 - dist / (0.5 * s))


def bump_function(grid: Grid, Q: Cube) -> GridFunction:
    """Tensor smoothstep bump: 1 on Q, 0 outside 2Q, gradient at most 3 / side(Q).

    Values depend only on integer cell offsets from Q, so translating Q by
    whole cells translates the bump exactly.
    """
    corner, s = grid.cube_index(Q)
    if not grid.periodic:
        band = s // 2 + (s % 2)
        if any(c - band < 0 or c + s + band > grid.n for c in corner):
            raise OutOfGrid("2Q does not fit in the grid")
    elif 2 * s > grid.n:
        raise OutOfGrid("2Q wraps onto itself on this torus")
    vals = np.ones(grid.shape)
    for ax, c in enumerate(corner):
        prof = _profile(_offsets(grid, c, s), s)
        shape = [1] * grid.d
        shape[ax] = grid.n
        vals = vals * prof.reshape(shape)
    return GridFunction(grid, vals)


def _centred_coord(grid: Grid, Q: Cube, ax: int) -> np.ndarray:
    corner, s = grid.cube_index(Q)
    j = _offsets(grid, corner[ax], s)
    return (j + 0.5 - 0.5 * s) * grid.h


@dataclass
class Lift:
    """u with J(u) = D_k w on Q; ``grad_norms[r]`` lists ||grad u_i||_r."""

    u: VectorField
    Q: Cube
    axis: int
    grad_norms: dict = field(default_factory=dict)


def lift_derivative_to_jacobian(w: GridFunction, k: int, Q: Cube,
                                exponents: Sequence[float] = ()) -> Lift:
    """u_k = w and u_i = (x_i - c_i) phi_Q for i != k."""
    grid = w.grid
    corner, s = grid.cube_index(Q)
    inner = np.zeros(grid.shape, dtype=bool)
    sl = tuple(slice(c + BOUNDARY_MARGIN, c + s - BOUNDARY_MARGIN) for c in corner)
    if grid.periodic:
        idx = np.ix_(*[(np.arange(c + BOUNDARY_MARGIN, c + s - BOUNDARY_MARGIN)) % grid.n for c in corner])
        inner[idx] = True
    else:
        if any(c < 0 or c + s > grid.n for c in corner):
            raise SupportExceedsQ("Q is not inside the grid")
        inner[sl] = True
    if np.any((w.values != 0) & ~inner):
        raise SupportExceedsQ("w must vanish within two cells of the boundary of Q")
    phi = bump_function(grid, Q).values
    comps = []
    for i in range(grid.d):
        if i == k:
            comps.append(np.asarray(w.values, dtype=float))
        else:
            x = _centred_coord(grid, Q, i)
            shape = [1] * grid.d
            shape[i] = grid.n
            comps.append(x.reshape(shape) * phi)
    u = VectorField(grid, comps)
    norms = {float(r): [grad_norm(u.comps[i], grid, r) for i in range(grid.d)] for r in exponents}
    return Lift(u, Q, k, norms)


# -- divergence solver --------------------------------------------------------


def _symbols(grid: Grid):
    """Per-axis derivative symbols: i xi below the Nyquist mode, -2/h at it."""
    n, h = grid.n, grid.h
    xi = 2 * np.pi * np.fft.fftfreq(n, d=h)
    sym = 1j * xi
    sym[n // 2] = -2.0 / h
    out = []
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = n
        out.append(sym.reshape(shape))
    return out


def spectral_divergence(v: VectorField) -> GridFunction:
    syms = _symbols(v.grid)
    tot = sum(syms[ax] * np.fft.fftn(v.comps[ax]) for ax in range(v.grid.d))
    return GridFunction(v.grid, np.fft.ifftn(tot).real)


def spectral_gradient(a: np.ndarray, grid: Grid) -> np.ndarray:
    syms = _symbols(grid)
    A = np.fft.fftn(a)
    return np.array([np.fft.ifftn(syms[ax] * A).real for ax in range(grid.d)])


@dataclass
class DivSolution:
    v: VectorField
    residual: float
    grad_norms: dict


def div_solve(g: GridFunction, exponents: Sequence[float] = (2.0,), tol: float = 1e-10) -> DivSolution:
    """v with div v = g on the torus, v = grad (Laplacian)^-1 g.

    The Nyquist mode uses the real symbol of the forward difference so that
    the inverse stays real and exact on every discrete mode.
    """
    grid = g.grid
    scale = float(np.sum(np.abs(g.values))) * grid.cell_volume
    if abs(g.values.sum() * grid.cell_volume) > tol * max(scale, 1e-300):
        raise NotMeanZero("the right-hand side must integrate to zero")
    syms = _symbols(grid)
    G = np.fft.fftn(g.values)
    den = sum(np.abs(s) ** 2 for s in syms)
    den = np.asarray(den, dtype=float) * np.ones(grid.shape)
    den.flat[0] = 1.0
    G.flat[0] = 0.0
    comps = [np.fft.ifftn(np.conj(syms[ax]) * G / den).real for ax in range(grid.d)]
    v = VectorField(grid, comps)
    div = spectral_divergence(v).values
    gn = np.sqrt(np.sum(g.values ** 2))
    res = float(np.sqrt(np.sum((div - g.values) ** 2)) / gn) if gn else float(np.sqrt(np.sum(div ** 2)))
    norms = {}
    for q in exponents:
        mats = [spectral_gradient(c, grid) for c in comps]
        pt = np.sqrt(sum(np.sum(m ** 2, axis=0) for m in mats))
        norms[float(q)] = float((np.sum(pt ** q) * grid.cell_volume) ** (1 / q))
    return DivSolution(v, res, norms)


# -- roots of unity ------------------------------------------------------------


def _cyclotomic(d: int) -> list:
    """Integer coefficients (low degree first) of the d-th cyclotomic polynomial."""
    poly = [-1] + [0] * (d - 1) + [1]  # x^d - 1
    for m in range(1, d):
        if d % m == 0:
            poly = _polydiv(poly, _cyclotomic(m))[0]
    return poly


def _polydiv(num, den):
    num = list(num)
    q = [0] * max(1, len(num) - len(den) + 1)
    while len(num) >= len(den) and any(num):
        shift = len(num) - len(den)
        c = Fraction(num[-1], den[-1])
        q[shift] = c
        for i, x in enumerate(den):
            num[shift + i] -= c * x
        num.pop()
    return q, num


@dataclass
class Moment:
    """Exact element of Q(omega) as coefficients on 1, omega, ..., omega^(phi(d)-1)."""

    order: int
    tuple: tuple
    coeffs: list

    @property
    def is_rational(self) -> bool:
        return all(c == 0 for c in self.coeffs[1:])

    @property
    def value(self):
        if self.is_rational:
            return self.coeffs[0] if self.coeffs else Fraction(0)
        w = np.exp(2j * np.pi / self.order)
        return complex(sum(float(c) * w ** i for i, c in enumerate(self.coeffs)))

    @property
    def predicted(self) -> Fraction:
        return Fraction(1) if len(set(self.tuple)) == 1 else Fraction(0)

    @property
    def matches(self) -> bool:
        return self.is_rational and self.value == self.predicted


def roots_of_unity_moments(d: int, tuples, N: Optional[int] = None, cap: int = 1 << 22) -> list:
    """E prod_j zeta_{k_j} for independent uniform d-th roots of unity zeta_1..zeta_N.

    Every one of the d^N assignments is enumerated and the sum is reduced
    exactly modulo the cyclotomic polynomial.
    """
    if d < 2:
        raise InvalidGrid("order must be at least 2")
    tuples = [tuple(int(k) for k in t) for t in tuples]
    if N is None:
        N = max(max(t) for t in tuples)
    if N > 6 or d ** N > cap:
        raise EnumerationTooLarge(f"{d}^{N} assignments exceed the enumeration cap")
    assign = np.array(list(itertools.product(range(d), repeat=N)), dtype=np.int64)
    phi = _cyclotomic(d)
    out = []
    for t in tuples:
        if len(t) != d:
            raise InvalidGrid(f"tuple {t} must have exactly {d} indices")
        if min(t) < 1 or max(t) > N:
            raise InvalidGrid(f"indices of {t} must lie in [1, {N}]")
        counts = np.bincount(np.asarray(t) - 1, minlength=N)
        hist = np.bincount((assign @ counts) % d, minlength=d)
        num = [Fraction(int(c), d ** N) for c in hist]
        _, rem = _polydiv(num, phi)
        rem = list(rem) + [Fraction(0)] * (len(phi) - 1 - len(rem))
        out.append(Moment(d, t, [Fraction(c) for c in rem]))
    return out


# -- Gamma estimator -------------------------------------------------------------


@dataclass
class GammaSampler:
    """Random (Q, w, k) triples: Q an aligned cube, w a bump on a subcube of Q."""

    sides: Sequence[int]
    count: int = 200
    seed: int = 0
    sub_fraction: float = 0.25

    def triples(self, grid: Grid):
        out = []
        for i in range(self.count):
            rng = stream(self.seed, "gamma", i)
            s = int(self.sides[rng.integers(len(self.sides))])
            pad = s // 2 + BOUNDARY_MARGIN
            if grid.n - 2 * pad - s < 0:
                continue
            corner = rng.integers(pad, grid.n - pad - s + 1, size=grid.d)
            Q = grid.cube_from_index(corner, s)
            ps = max(4, int(s * self.sub_fraction))
            lo = BOUNDARY_MARGIN + ps // 2
            hi = s - BOUNDARY_MARGIN - ps - ps // 2
            if hi < lo:
                continue
            sub = corner + rng.integers(lo, hi + 1, size=grid.d)
            P = grid.cube_from_index(sub, ps)
            k = int(rng.integers(grid.d))
            out.append((Q, P, k))
        return out


@dataclass
class GammaEstimate:
    value: float
    witness: Optional[tuple]
    samples: int
    rows: list


def gamma_lower_bound(b: GridFunction, exponents: Sequence[float], sampler: GammaSampler) -> GammaEstimate:
    """sup over samples of |int b J(u)| / prod ||grad u_i||_{r_i}."""
    grid = b.grid
    if len(exponents) != grid.d:
        raise InvalidGrid("one exponent per component is required")

    def one(tr):
        Q, P, k = tr
        w = bump_function(grid, P)
        lift = lift_derivative_to_jacobian(w, k, Q)
        J = jacobian_det(lift.u)
        num = abs(float(np.sum(b.values * J.values) * grid.cell_volume))
        den = float(np.prod([grad_norm(lift.u.comps[i], grid, exponents[i]) for i in range(grid.d)]))
        return num / den if den else 0.0

    triples = sampler.triples(grid)
    vals = parallel_map(one, triples)
    rows = [(Q.side, tuple(Q.corner), tuple(P.corner), k, v) for (Q, P, k), v in zip(triples, vals)]
    if not vals:
        return GammaEstimate(0.0, None, 0, rows)
    i = int(np.argmax(vals))
    return GammaEstimate(float(vals[i]), triples[i], len(vals), rows)


# -- s-convex representation ----------------------------------------------------


@dataclass
class SConvexProblem:
    """Symmetric generating set V (rows) in R^n with a norm oracle."""

    V: np.ndarray
    norm: Optional[Callable] = None
    eps: float = 0.5
    beta: Optional[float] = None
    directions: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        m = {tuple(v) for v in self.V}
        if any(tuple(-v) not in m for v in self.V):
            raise InvalidGrid("V must be symmetric")
        if not 0 < self.eps < 1:
            raise InvalidGrid("contraction must lie in (0, 1)")
        if self.beta is None:
            self.beta = inscribed_radius(self)

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def nrm(self, x) -> float:
        return float(self.norm(x)) if self.norm else float(np.linalg.norm(x))


def ray_length(V: np.ndarray, u: np.ndarray) -> float:
    """Largest t with t u in conv V, by linear programming."""
    m = len(V)
    # variables (lambda_1..lambda_m, t); maximize t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_eq = np.zeros((V.shape[1] + 1, m + 1))
    A_eq[:-1, :m] = V.T
    A_eq[:-1, -1] = -u
    A_eq[-1, :m] = 1.0
    b_eq = np.zeros(V.shape[1] + 1)
    b_eq[-1] = 1.0
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (m + 1), method="highs")
    return float(res.x[-1]) if res.status == 0 else 0.0


def inscribed_radius(P: SConvexProblem) -> float:
    """Radius of the largest norm ball about 0 inside conv V.

    Ray lengths along sampled directions give upper bounds; for the Euclidean
    norm the facet normals of the hull are added, which attain the minimum.
    """
    rng = stream(P.seed, "beta")
    dirs = rng.standard_normal((P.directions, P.n))
    cands = []
    if P.norm is None:
        hull = ConvexHull(P.V)
        offsets = -hull.equations[:, -1]
        normals = hull.equations[:, :-1]
        cands.append(float(np.min(offsets / np.linalg.norm(normals, axis=1))))
        dirs = np.vstack([normals, dirs])
    # the LP path costs ~1ms per direction; keep it to a sample
    for u in dirs[: min(len(dirs), 200)]:
        u = u / P.nrm(u)
        cands.append(ray_length(P.V, u))
    return float(min(cands))


def _exact_combination(V: np.ndarray, y: np.ndarray) -> np.ndarray:
    m = len(V)
    A_eq = np.vstack([V.T, np.ones((1, m))])
    b_eq = np.concatenate([y, [1.0]])
    res = linprog(np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * m, method="highs")
    if res.status != 0:
        raise OutsideBall("point is not in the convex hull")
    lam = np.maximum(res.x, 0)
    return lam / lam.sum()


def _frank_wolfe(V: np.ndarray, y: np.ndarray, target: float, nrm, iters: int = 10_000):
    lam = np.zeros(len(V))
    lam[int(np.argmax(V @ y))] = 1.0
    z = V.T @ lam
    for it in range(iters):
        if nrm(y - z) <= target:
            return lam
        grad = z - y
        j = int(np.argmin(V @ grad))
        dvec = V[j] - z
        dd = float(dvec @ dvec)
        if dd == 0:
            break
        gamma = min(1.0, max(0.0, float(-(grad @ dvec)) / dd))
        lam *= 1 - gamma
        lam[j] += gamma
        z = V.T @ lam
    return None


@dataclass
class SConvexRepresentation:
    """x = sum_k eps^k x_k with x_k = V^T weights[k]; residuals[n] after n terms."""

    terms: list
    weights: list
    residuals: list
    bounds: list
    beta: float
    eps: float

    @property
    def bound_holds(self) -> bool:
        return all(r <= b * (1 + 1e-9) + 1e-15 for r, b in zip(self.residuals, self.bounds))


def sconvex_represent(P: SConvexProblem, x, steps: int = 20) -> SConvexRepresentation:
    """Greedy representation, each term within eps * beta of the current target."""
    x = np.asarray(x, dtype=float)
    beta, eps = P.beta, P.eps
    if P.nrm(x) > beta * (1 + 1e-12):
        raise OutsideBall(f"|x| = {P.nrm(x):.6g} exceeds the inscribed radius {beta:.6g}")
    terms, weights, residuals, bounds = [], [], [P.nrm(x)], [beta]
    if not np.any(x):
        return SConvexRepresentation([], [], [0.0], [beta], beta, eps)
    y = x.copy()
    partial = np.zeros_like(x)
    for k in range(steps):
        target = eps * beta
        lam = _frank_wolfe(P.V, y, target, P.nrm) if P.norm is None else None
        if lam is None:
            lam = _exact_combination(P.V, y)
        xk = P.V.T @ lam
        terms.append(xk)
        weights.append(lam)
        partial = partial + eps ** k * xk
        residuals.append(P.nrm(x - partial))
        bounds.append(eps ** (k + 1) * beta)
        y = (y - xk) / eps
        if P.nrm(y) > beta * (1 + 1e-9):
            # rounding pushed the target out; the exact combination restores it
            y = y * beta / P.nrm(y)
    return SConvexRepresentation(terms, weights, residuals, bounds, beta, eps)


# -- span of Jacobians ---------------------------------------------------------------


def _partition_1d(grid: Grid, s: int) -> list:
    """Functions psi_m, m < n/s, summing to one on the torus axis.

    psi_m rises across m s +- s/4 and falls across (m+1) s +- s/4, where
    psi_{m+1} rises by the complementary amount.
    """
    n = grid.n
    out = []
    for m in range(n // s):
        t = (np.arange(n) + 0.5 - m * s + n // 2) % n - n // 2
        rise = smoothstep((t + s / 4) / (s / 2))
        fall = 1.0 - smoothstep((t - 3 * s / 4) / (s / 2))
        out.append(rise * fall)
    return out


@dataclass
class SpanRepresentation:
    fields: list
    residuals: list
    budget: float
    budget_terms: list
    rounds: int


def jacobian_span_represent(f: GridFunction, p: float = 2.0, rounds: int = 5, generation: int = 2,
                            tol: float = 1e-12, keep_fields: bool = False) -> SpanRepresentation:
    """Greedy f ~ sum_j J(u^j) on a periodic grid.

    Each round solves div v = residual, splits every v_k with a smooth
    partition of unity over the cubes of one dyadic generation, and lifts
    each piece to a Jacobian.  residuals[j] is ||f - sum J(u)||_p after j rounds.
    """
    grid = f.grid
    if not grid.periodic:
        raise InvalidGrid("the span representation runs on a periodic grid")
    s = grid.n >> generation
    if s < 8 or generation < 2:
        raise InvalidGrid("generation must leave cubes of at least 8 cells and at most n/4")

    def pnorm(a):
        return float((np.sum(np.abs(a) ** p) * grid.cell_volume) ** (1 / p))

    scale = float(np.sum(np.abs(f.values))) * grid.cell_volume
    if abs(f.values.sum() * grid.cell_volume) > 1e-10 * max(scale, 1e-300):
        raise NotMeanZero("f must integrate to zero")
    parts = _partition_1d(grid, s)
    nparts = len(parts)
    res = np.array(f.values, dtype=float)
    residuals = [pnorm(res)]
    fields, budget_terms = [], []
    f0 = residuals[0]
    done = 0
    for rnd in range(rounds):
        if residuals[-1] <= tol * f0:
            break
        sol = div_solve(GridFunction(grid, res - res.mean()))
        approx = np.zeros(grid.shape)
        for k in range(grid.d):
            vk = sol.v.comps[k]
            for idx in np.ndindex(*(nparts,) * grid.d):
                psi = np.ones(grid.shape)
                for ax, m in enumerate(idx):
                    shape = [1] * grid.d
                    shape[ax] = grid.n
                    psi = psi * parts[m].reshape(shape)
                w = psi * vk
                if not np.any(w):
                    continue
                corner = np.array(idx) * s - s // 2
                Q = Cube(tuple(np.asarray(grid.lo) + (corner % grid.n) * grid.h), 2 * s * grid.h)
                lift = lift_derivative_to_jacobian(GridFunction(grid, w), k, Q)
                u = _balance(lift.u, p * grid.d)
                J = jacobian_det(u).values
                approx += J
                budget_terms.append(float(np.sqrt(np.sum(
                    [grad_norm(u.comps[i], grid, p * grid.d) ** 2 for i in range(grid.d)]))) ** grid.d)
                if keep_fields:
                    fields.append(u)
        new = res - approx
        r = pnorm(new)
        if r > 0.99 * residuals[-1] and r > tol * f0:
            raise StalledResidual(f"residual went from {residuals[-1]:.3e} to {r:.3e}")
        res = new
        residuals.append(r)
        done += 1
    return SpanRepresentation(fields, residuals, float(sum(budget_terms)), budget_terms, done)


def _balance(u: VectorField, r: float) -> VectorField:
    """Rescale components (product of factors 1) so their gradient norms agree."""
    grid = u.grid
    norms = np.array([grad_norm(u.comps[i], grid, r) for i in range(grid.d)])
    if np.any(norms == 0):
        return u
    gm = np.exp(np.mean(np.log(norms)))
    return VectorField(grid, u.comps * (gm / norms).reshape((-1,) + (1,) * grid.d))
