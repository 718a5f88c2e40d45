"""The CV-error MPEC has a degenerate global minimizer at C = 0.

With C = 0 every lower-level solution is w = 0, each validation point lies on
the separating hyperplane and counts as correctly classified, so F = 0. This
script checks that point, then runs the relaxation method on a few seeds and
reports which runs end there and which find a nontrivial C.
"""

import numpy as np

from grcv.dataset import SplitSpec
from grcv.grm import prepare_instance, run_grm
from grcv.mpec import MpecPoint, eval_F, feasible_point, vio

from compare_methods import make_data


if __name__ == "__main__":
    inst = prepare_instance(make_data(30, seed=0), SplitSpec(30, 0, 3))
    p = inst.problem
    trivial = MpecPoint.from_parts(p, 0.0, np.zeros(p.nu), np.zeros(p.nu), np.zeros(p.nl), np.ones(p.nl))
    print(f"trivial point: F = {eval_F(p, trivial)}, Vio = {vio(p, trivial)}")

    grid = np.logspace(-4, 4, 41)
    for seed in range(6):
        p = prepare_instance(make_data(30, seed=seed), SplitSpec(30, 0, 3)).problem
        tr = run_grm(p)
        best = min(eval_F(p, feasible_point(p, C)) for C in grid)
        kind = "collapsed" if tr.v_opt[0] < 1e-6 else "nontrivial"
        print(f"seed {seed}: C = {tr.v_opt[0]:9.3g}  F = {tr.F:.4f}  best grid F = {best:.4f}  ({kind})")
