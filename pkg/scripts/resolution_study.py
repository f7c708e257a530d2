"""Grid-refinement tables: norm-to-estimate ratios and Jacobian lift errors.

Writes resolution_study.csv (quantity, n, value) and prints the table.
"""

import argparse
import csv

import numpy as np

from czlab import commutator as cm
from czlab import jacobian as jc
from czlab import kernels, spaces
from czlab.cli import make_symbol
from czlab.grid import Cube, Grid, GridFunction


def theta_ratios(ns):
    H = kernels.hilbert()
    sampler = cm.BallPairSampler(radii=(0.125, 0.25, 0.5, 1.0, 2.0), count=200, window=((-4.0,), 8.0), gap=0.5)
    for n in ns:
        grid = Grid.centered(1, 16, n)
        b = make_symbol("log", grid)
        th = cm.theta_lower_bound(b, H, cm.ExponentConfig(2, 2), "single", sampler).value
        yield "bmo_over_theta", n, spaces.bmo_norm(b).value / th


def lift_errors(ns):
    Q = Cube((0.25, 0.25), 0.5)
    for n in ns:
        g = Grid(2, (-0.5, -0.5), 2.0, n)
        X, Y = g.coords()
        inside = (np.abs(X - 0.5) < 0.2) & (np.abs(Y - 0.5) < 0.2)
        cx, cy = np.cos(np.pi * (X - 0.5) / 0.4), np.cos(np.pi * (Y - 0.5) / 0.4)
        sx = np.sin(np.pi * (X - 0.5) / 0.4)
        w = GridFunction(g, np.where(inside, cx ** 4 * cy ** 4, 0.0))
        dw = np.where(inside, -4 * cx ** 3 * sx * (np.pi / 0.4) * cy ** 4, 0.0)
        lift = jc.lift_derivative_to_jacobian(w, 0, Q)
        yield "lift_error", n, float(np.max(np.abs(jc.jacobian_det(lift.u).values - dw)[g.mask(Q)]))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="resolution_study.csv")
    args = ap.parse_args()
    rows = list(theta_ratios((1024, 2048, 4096))) + list(lift_errors((64, 128, 256, 512)))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "n", "value"])
        w.writerows((q, n, repr(v)) for q, n, v in rows)
    for q, n, v in rows:
        print(f"{q:16s} {n:6d} {v:.6g}")
