"""Follow the relaxation schedule stage by stage.

For each t_k the script prints the subproblem status, the iterations spent,
the current C, the CV error F and the complementarity violation Vio.
"""

import numpy as np

from grcv.dataset import SplitSpec
from grcv.grm import prepare_instance, relaxation_schedule
from grcv.mpec import eval_F, vio
from grcv.nlp_solver import RelaxedProblem, solve_relaxed

from compare_methods import make_data


if __name__ == "__main__":
    inst = prepare_instance(make_data(60, seed=4), SplitSpec(60, 0, 3))
    p = inst.problem
    v = p.initial_point().v
    print(f"{'t':>8s} {'status':>16s} {'it':>4s} {'C':>10s} {'F':>7s} {'Vio':>9s}")
    for t in relaxation_schedule(1.0, 0.01, 1e-8):
        res = solve_relaxed(RelaxedProblem(p, t), v)
        v = res.point.v
        print(f"{t:8.0e} {res.status:>16s} {res.iterations:4d} {v[0]:10.4g} {eval_F(p, v):7.4f} {vio(p, v):9.2e}")
