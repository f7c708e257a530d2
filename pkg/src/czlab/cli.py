"""Command-line driver: one subcommand per experiment family.

Every run writes ``<name>.summary.json`` (resolved config, results and the
invariant table) and ``<name>.detail.csv`` (one row per sample, after a
timestamp line).  The exit code is 0 exactly when every invariant holds.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import commutator, decomp, factorization, jacobian, kernels, spaces
from .errors import ATooLargeForGrid, ConfigError, CzlabError, OutOfGrid
from .grid import Ball, Cube, Grid, GridFunction, inscribed_cube, lp_norm
from .rng import stream

KERNELS = ("hilbert", "riesz1", "riesz2", "ahlfors-beurling", "zero")
SYMBOLS = ("log", "x", "sqrt", "const", "step", "bump", "random")


# -- inputs -----------------------------------------------------------------


def make_kernel(name: str, d: int) -> kernels.KernelSpec:
    if name == "hilbert":
        return kernels.hilbert()
    if name in ("riesz1", "riesz2"):
        return kernels.riesz(int(name[-1]), max(d, 2))
    if name == "ahlfors-beurling":
        return kernels.ahlfors_beurling()
    if name == "zero":
        return kernels.zero_kernel(d)
    path = Path(name)
    if path.exists():
        return kernels.from_json(json.loads(path.read_text()))
    raise ConfigError(f"unknown kernel {name!r}; use one of {', '.join(KERNELS)} or a JSON file")


def make_symbol(name: str, grid: Grid, seed: int = 0) -> GridFunction:
    X = np.stack(grid.coords(), axis=-1)
    rad = np.sqrt(np.sum(X ** 2, axis=-1))
    x1 = X[..., 0]
    if name == "log":
        return GridFunction(grid, np.log(rad))
    if name == "x":
        return GridFunction(grid, x1)
    if name == "sqrt":
        return GridFunction(grid, np.sqrt(rad))
    if name == "const":
        return GridFunction(grid, np.ones(grid.shape))
    if name == "step":
        return GridFunction(grid, (x1 >= 0).astype(float))
    if name == "bump":
        return GridFunction(grid, np.where(rad < 1, x1 * (1 - rad ** 2) ** 2, 0.0))
    if name == "random":
        rng = stream(seed, "symbol")
        centres = rng.uniform(-1, 1, size=(4, grid.d))
        amps = rng.normal(size=4)
        vals = sum(a * np.log(np.sqrt(np.sum((X - c) ** 2, axis=-1)) + grid.h) for a, c in zip(amps, centres))
        return GridFunction(grid, vals)
    raise ConfigError(f"unknown symbol {name!r}; use one of {', '.join(SYMBOLS)}")


def _floats(text: str):
    try:
        return tuple(float(t) for t in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(args, d: int) -> Grid:
    return Grid.centered(d, args.half_width, args.n)


# -- reports -----------------------------------------------------------------


class Report:
    def __init__(self, name: str, args):
        self.name = name
        self.config = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
        self.results = {}
        self.invariants = {}
        self.header = []
        self.rows = []
        self.plot = []

    def check(self, key: str, ok) -> None:
        self.invariants[key] = bool(self.invariants.get(key, True) and bool(ok))

    @property
    def ok(self) -> bool:
        return all(self.invariants.values())

    def write(self, out: Path, emit_plot: bool) -> None:
        out.mkdir(parents=True, exist_ok=True)
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        summary = {"generated": stamp, "command": self.name, "config": self.config,
                   "results": self.results, "invariants": self.invariants, "passed": self.ok}
        (out / f"{self.name}.summary.json").write_text(json.dumps(summary, indent=1, default=_json) + "\n")
        with open(out / f"{self.name}.detail.csv", "w", newline="") as fh:
            fh.write(f"# generated {stamp}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            for row in self.rows:
                w.writerow([_cell(v) for v in row])
        if emit_plot:
            with open(out / f"{self.name}.plot.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["series", "x", "y"])
                for series, x, y in self.plot:
                    w.writerow([series, _cell(x), _cell(y)])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return f"{complex(v).real!r}{complex(v).imag:+.17g}j"
    if isinstance(v, (tuple, list, np.ndarray)):
        return " ".join(_cell(x) for x in np.ravel(v))
    return str(v)


def _json(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


# -- subcommands -----------------------------------------------------------------


def cmd_probe(args, rep: Report):
    vals = _floats(args.ball)
    d = len(vals) - 1
    ball = Ball(vals[:-1], vals[-1])
    K = make_kernel(args.kernel, d)
    grid = _grid(args, K.d)
    if args.A is not None:
        ladder = [args.A]
    else:
        ladder = [A for A in (4, 8, 16, 32, 64, 128, 256, 512, 1024)]
    rep.header = ["A", "eps_a", "qupos_min", "dist_ratio", "size_const", "partner_center"]
    chosen = None
    prev = None
    for A in ladder:
        try:
            res = kernels.probe_non_degeneracy(K, grid, ball, A, seed=args.seed)
        except OutOfGrid:
            break
        rep.rows.append([A, res.eps_a, res.qupos_min, res.dist_ratio, res.size_const, res.partner.center])
        rep.plot.append(("eps_a", A, res.eps_a))
        for key, ok in res.invariants().items():
            rep.check(key, ok)
        if prev is not None:
            rep.check("eps_non_increasing", res.eps_a <= prev * (1 + 1e-9))
        prev = res.eps_a
        chosen = res
        if args.A is None and res.eps_a <= args.eps_target:
            break
    if chosen is None:
        raise ATooLargeForGrid("no probe fits in the grid")
    if args.A is None:
        rep.check("eps_target_reached", chosen.eps_a <= args.eps_target)
    rep.results["probe"] = chosen.to_json()


def _awf_setup(args):
    K = make_kernel(args.kernel, args.d)
    if args.d == 1:
        grid = Grid.centered(1, 64, args.n or 4096)
        ball = Ball((0.0,), 1.0)
    else:
        n = args.n or 256
        grid = Grid(2, (0.0, 0.0), 256.0, n)
        ball = Ball((4.5, 128.5), 4.0)
    probe = kernels.choose_a(K, grid, ball, args.eps_target, seed=args.seed)
    Q = inscribed_cube(grid, probe.ball)
    Qt = inscribed_cube(grid, probe.partner)
    return K, grid, probe, Q, Qt


def _random_mean_zero(grid: Grid, Q: Cube, rng) -> GridFunction:
    cells = grid.cells(Q)
    v = np.zeros(grid.size)
    v[cells] = rng.normal(size=len(cells))
    v[cells] -= v[cells].mean()
    return GridFunction(grid, v.reshape(grid.shape), grid.mask(Q))


def cmd_awf(args, rep: Report):
    K, grid, probe, Q, Qt = _awf_setup(args)
    rep.results["probe"] = probe.to_json()
    rep.header = ["sample", "residual", "err_ratio", "err_bound", "product1_ratio", "product2_ratio",
                  "err_integral"]
    for i in range(args.count):
        f = _random_mean_zero(grid, Q, stream(args.seed, "awf", i))
        res = factorization.awf_double(K, f, Q, Qt, probe)
        c = res.certificate
        rep.rows.append([i, c["residual"], c["err_ratio"], c["err_bound"], c["product1_ratio"],
                         c["product2_ratio"], abs(c["err_integral"])])
        rep.check("residual", c["residual"] <= 1e-10)
        rep.check("support_in_Q", c["err_support_in_Q"])
        scale = f.sup() * grid.measure(Q)
        rep.check("mean_zero", abs(c["err_integral"]) <= 1e-12 * scale)
        rep.check("err_bound", c["err_ok"])
        rep.check("product_bound", c["products_ok"])
    f = _random_mean_zero(grid, Q, stream(args.seed, "awf_expand", 0))
    exp = factorization.awf_expand(K, f, Q, Qt, probe, args.depth)
    for j, e in enumerate(exp.errors):
        rep.plot.append(("expansion_error", j + 1, e / exp.f_sup))
    rep.results["expansion_errors"] = [e / exp.f_sup for e in exp.errors]
    rep.check("expansion_bound", exp.bound_holds())


def cmd_decomp(args, rep: Report):
    grid = Grid(args.d, (0.0,) * args.d, 1.0, args.n)
    Q0 = Cube((0.0,) * args.d, 1.0)
    rep.header = ["sample", "kind", "value", "ok"]
    for i in range(args.count):
        rng = stream(args.seed, "decomp", i)
        raw = rng.standard_cauchy(grid.shape)
        f = GridFunction(grid, raw - raw.mean())
        t = decomp.cz_stopping(f, Q0)
        v = t.verify(f)
        rep.rows.append([i, "stopping_reconstruction", v["reconstruction"], v["reconstruction_ok"]])
        rep.check("stopping_reconstruction", v["reconstruction_ok"])
        rep.check("stopping_sup", v["sup_ok"])
        rep.check("stopping_nesting", v["nesting_ok"])
        rep.check("stopping_disjoint", v["disjoint"])
        s = decomp.lerner_sparse(f, Q0)
        sv = s.verify(f)
        rep.rows.append([i, "sparse_domination", sv["domination_ratio"], sv["domination_ok"]])
        rep.check("sparse_domination", sv["domination_ok"])
        rep.check("sparse_major", sv["e_major"])
        rep.check("sparse_disjoint", sv["e_disjoint"])
        rep.check("sparse_packing", sv["packing_ok"])
    for p in args.p:
        worst = 0.0
        for i in range(args.count):
            rng = stream(args.seed, f"doob{p}", i)
            cubes, subsets = _random_family(grid, rng)
            lam = rng.exponential(size=len(cubes))
            res = decomp.doob_check(grid, cubes, subsets, lam, p, eta=0.5)
            worst = max(worst, res.ratio)
            rep.check("doob", not res.flagged)
        rep.rows.append(["all", f"doob_p{p}", worst, worst <= 8.0])
        rep.plot.append(("doob_worst_ratio", p, worst))


def _random_family(grid: Grid, rng, size: int = 8):
    cubes, subsets = [], []
    for _ in range(size):
        level = int(rng.integers(1, 5))
        s = grid.n >> level
        corner = rng.integers(0, grid.n // s, size=grid.d) * s
        Q = grid.cube_from_index(corner, s)
        m = np.zeros(grid.shape, dtype=bool)
        cells = grid.cells(Q)
        keep = rng.permutation(len(cells))[: (len(cells) + 1) // 2]
        m.flat[cells[keep]] = True
        cubes.append(Q)
        subsets.append(m)
    return cubes, subsets


def cmd_theta(args, rep: Report):
    K = make_kernel(args.kernel, 1)
    cfg = commutator.ExponentConfig(args.p, args.q, args.k, 1)
    weights = None
    if args.mode == "multi":
        grid = Grid.centered(1, 8, args.n or 2048)
        b = make_symbol(args.b, grid, args.seed)
        sampler = commutator.CubeFamilySampler(sides=(1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0),
                                               window=Cube((-1.0,), 2.0), gap=0.5)
    else:
        grid = Grid.centered(1, 16, args.n or 2048)
        b = make_symbol(args.b, grid, args.seed)
        sampler = commutator.BallPairSampler(radii=(0.125, 0.25, 0.5, 1.0, 2.0), count=args.count,
                                             window=((-4.0,), 8.0), gap=0.5, seed=args.seed)
        if args.mode == "weighted":
            x = np.abs(grid.coords()[0])
            weights = spaces.WeightTriple(GridFunction(grid, x ** args.weight_power),
                                          GridFunction(grid, x ** -args.weight_power), args.p)
    est = commutator.theta_lower_bound(b, K, cfg, args.mode, sampler, weights)
    rep.header = ["scale", "position", "pairing", "normalizer", "ratio"]
    for row in est.rows:
        rep.rows.append([row["scale"], row["position"], row["pairing"], row["normalizer"], row["ratio"]])
        rep.plot.append(("ratio", row["scale"], row["ratio"]))
    rep.results["theta"] = est.value
    rep.results["regime"] = cfg.regime
    if cfg.regime == "bmo" and weights is None:
        rep.results["bmo_norm"] = spaces.bmo_norm(b).value
    elif cfg.regime == "holder":
        rep.results["holder_seminorm"] = spaces.holder_seminorm(b, cfg.alpha)
    elif cfg.regime == "lebesgue":
        rep.results["lp_norm"] = lp_norm(b, cfg.r)
    rep.check("theta_finite_positive", np.isfinite(est.value) and est.value > 0)


def cmd_median(args, rep: Report):
    grid = Grid.centered(1, 64, args.n or 4096)
    K = make_kernel(args.kernel, 1)
    b = make_symbol(args.b, grid, args.seed)
    ball = Ball((0.0,), 1.0)
    probe = kernels.choose_a(K, grid, ball, args.eps_target, seed=args.seed)
    rep.results["A"] = probe.A
    rep.header = ["k", "lhs", "pairings", "ratio", "bound", "bound_holds"]
    for k in args.k:
        mb = spaces.median_lower_bound(b, K, k, ball, probe.A, probe=probe)
        rep.rows.append([k, mb.lhs, [abs(p) for p in mb.pairings], mb.ratio, mb.bound, mb.bound_holds])
        rep.plot.append(("ratio", k, mb.ratio))
        rep.check("ratio_finite", np.isfinite(mb.ratio))
        rep.check("bound_holds", mb.bound_holds)


def cmd_classify(args, rep: Report):
    grid = Grid(1, (0.0,), 1.0, args.n or 4096) if args.b == "sqrt" else _grid(args, 1)
    b = make_symbol(args.b, grid, args.seed)
    cl = spaces.oscillation_classify(b, bmo_tol=args.bmo_tol, constant_tol=args.constant_tol)
    rep.header = ["scale", "position", "oscillation"]
    for s, pos, osc in cl.profile:
        rep.rows.append([s, pos, osc])
        rep.plot.append(("oscillation", s, osc))
    rep.results.update({"label": cl.label, "slope": cl.slope,
                        "thresholds": {"bmo": args.bmo_tol, "holder_max": 1.1, "constant": args.constant_tol}})
    rep.check("profile_non_negative", all(p[2] >= 0 for p in cl.profile))


def cmd_jacobian(args, rep: Report):
    rep.header = ["task", "n", "value"]
    tasks = ("det", "lift", "divsolve", "span") if args.task == "all" else (args.task,)
    if "det" in tasks:
        g = Grid(2, (0.0, 0.0), 1.0, 64)
        X, Y = g.coords()
        phi = jacobian.bump_function(g, Cube((0.375, 0.375), 0.25)).values
        A = np.array([[0.75, 0.125], [-0.5, 1.5]])
        u = jacobian.VectorField(g, [(A[0, 0] * X + A[0, 1] * Y) * phi, (A[1, 0] * X + A[1, 1] * Y) * phi])
        Ju = jacobian.jacobian_det(u).values[26:38, 26:38]
        err = float(np.max(np.abs(Ju - np.linalg.det(A))))
        rep.rows.append(["affine_det_error", 64, err])
        rep.check("affine_exact", err == 0.0)
    if "lift" in tasks:
        errs = []
        for n in (64, 128, 256):
            g = Grid(2, (-0.5, -0.5), 2.0, n)
            w, dw = _cos4_bump(g)
            lift = jacobian.lift_derivative_to_jacobian(w, 0, Cube((0.25, 0.25), 0.5))
            Ju = jacobian.jacobian_det(lift.u).values
            errs.append(float(np.max(np.abs(Ju - dw))))
            rep.rows.append(["lift_error", n, errs[-1]])
            rep.plot.append(("lift_error", n, errs[-1]))
        rep.check("lift_converges", all(b < a for a, b in zip(errs, errs[1:])))
    if "divsolve" in tasks:
        t = Grid(2, (0.0, 0.0), 1.0, 128, periodic=True)
        g = GridFunction(t, stream(args.seed, "divsolve").normal(size=t.shape))
        g = g.with_values(g.values - g.values.mean())
        sol = jacobian.div_solve(g)
        rep.rows.append(["divsolve_residual", 128, sol.residual])
        rep.check("divsolve_residual", sol.residual <= 1e-8)
    if "span" in tasks:
        t = Grid(2, (0.0, 0.0), 1.0, 128, periodic=True)
        X, Y = t.coords()
        f = GridFunction(t, np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y))
        sp = jacobian.jacobian_span_represent(f, p=2.0, rounds=args.rounds)
        for j, r in enumerate(sp.residuals):
            rep.rows.append(["span_residual", j, r / sp.residuals[0]])
            rep.plot.append(("span_residual", j, r / sp.residuals[0]))
        rep.results["span_budget"] = sp.budget
        rep.check("span_monotone", all(b < a for a, b in zip(sp.residuals, sp.residuals[1:])))
        rep.check("span_residual", sp.residuals[-1] <= 0.2 * sp.residuals[0])


def _cos4_bump(g: Grid):
    X, Y = g.coords()
    inside = (np.abs(X - 0.5) < 0.2) & (np.abs(Y - 0.5) < 0.2)
    cx, cy = np.cos(np.pi * (X - 0.5) / 0.4), np.cos(np.pi * (Y - 0.5) / 0.4)
    sx = np.sin(np.pi * (X - 0.5) / 0.4)
    w = np.where(inside, cx ** 4 * cy ** 4, 0.0)
    dw = np.where(inside, -4 * cx ** 3 * sx * (np.pi / 0.4) * cy ** 4, 0.0)
    return GridFunction(g, w), dw


def cmd_sconvex(args, rep: Report):
    V = np.vstack([np.eye(args.dim), -np.eye(args.dim)])
    P = jacobian.SConvexProblem(V, eps=args.eps, seed=args.seed)
    rep.results["beta"] = P.beta
    rep.header = ["sample", "steps", "worst_residual_over_bound"]
    for i in range(args.count):
        rng = stream(args.seed, "sconvex", i)
        x = rng.normal(size=args.dim)
        x *= args.radius * P.beta * rng.random() ** (1 / args.dim) / np.linalg.norm(x)
        rr = jacobian.sconvex_represent(P, x, steps=args.steps)
        worst = max(r / b for r, b in zip(rr.residuals, rr.bounds))
        rep.rows.append([i, len(rr.terms), worst])
        rep.check("residual_bound", rr.bound_holds)
        rep.check("weights_sum_to_one", all(abs(w.sum() - 1) <= 1e-12 for w in rr.weights))
        if i == 0:
            for n, r in enumerate(rr.residuals):
                rep.plot.append(("residual", n, r))


def cmd_roots(args, rep: Report):
    tuples = list(itertools.product(range(1, args.N + 1), repeat=args.d))
    moments = jacobian.roots_of_unity_moments(args.d, tuples, N=args.N)
    rep.header = ["tuple", "moment", "predicted", "match"]
    for m in moments:
        rep.rows.append(["-".join(map(str, m.tuple)), str(m.value), str(m.predicted), m.matches])
        rep.check("identity", m.matches)
    rep.results["tuples"] = len(moments)


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="czlab", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of option values")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--name", default=name, help="report file stem")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--emit-plotdata", action="store_true", help="also write <name>.plot.csv")
        return p

    p = add("probe", cmd_probe, "partner-ball probe and eps_A")
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--ball", default="0,1", help="centre coordinates then radius")
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--eps-target", type=float, default=0.1)
    p.add_argument("--half-width", type=float, default=64.0)
    p.add_argument("--n", type=int, default=4096)

    p = add("awf", cmd_awf, "approximate weak factorization suite")
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--eps-target", type=float, default=0.1)

    p = add("decomp", cmd_decomp, "stopping, sparse and Doob checks")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--p", type=float, nargs="+", default=[1.5, 2.0, 3.0])

    p = add("theta", cmd_theta, "commutator lower bounds")
    p.add_argument("--mode", choices=("single", "multi", "weighted"), default="single")
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--b", default="log")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--weight-power", type=float, default=0.3)

    p = add("median", cmd_median, "median-method lower bounds")
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--b", default="x")
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--eps-target", type=float, default=0.1)

    p = add("classify", cmd_classify, "oscillation profile and classification")
    p.add_argument("--b", default="log")
    p.add_argument("--half-width", type=float, default=4.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--bmo-tol", type=float, default=0.1)
    p.add_argument("--constant-tol", type=float, default=1e-8)

    p = add("jacobian", cmd_jacobian, "Jacobian calculus checks")
    p.add_argument("--task", choices=("all", "det", "lift", "divsolve", "span"), default="all")
    p.add_argument("--rounds", type=int, default=5)

    p = add("sconvex", cmd_sconvex, "s-convex representation")
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.9)

    p = add("roots", cmd_roots, "roots-of-unity moment table")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=3)
    return top


def load_config(path: str, parser: argparse.ArgumentParser, argv) -> dict:
    """Parse a JSON config, reporting the line of any syntax error or unknown key."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    probe_args = parser.parse_args(argv)
    known = set(vars(probe_args)) - {"func", "config", "command"}
    out = {}
    for key, val in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            line = next((i + 1 for i, l in enumerate(text.splitlines()) if f'"{key}"' in l), 1)
            raise ConfigError(f"{path}:{line}: unknown option {key!r} for {probe_args.command}")
        out[dest] = val
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            overrides = load_config(args.config, parser, argv)
            sub = parser._subparsers._group_actions[0].choices[args.command]
            sub.set_defaults(**overrides)
            args = parser.parse_args(argv)
        rep = Report(args.name, args)
        args.func(args, rep)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CzlabError as exc:
        rep = Report(args.name, args)
        rep.results["error"] = f"{type(exc).__name__}: {exc}"
        rep.check("completed", False)
        rep.write(Path(args.out), args.emit_plotdata)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    rep.write(Path(args.out), args.emit_plotdata)
    status = "passed" if rep.ok else "FAILED"
    failed = [k for k, v in rep.invariants.items() if not v]
    print(f"{args.name}: {status}" + (f" ({', '.join(failed)})" if failed else ""))
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
