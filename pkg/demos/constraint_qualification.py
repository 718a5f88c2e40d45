"""Empirical check of MPEC-MFCQ and the active-set identities.

Random C values are drawn, each fold's SVC is trained exactly and the
validation variables are set by the 0-1 rule. At every such feasible point the
active gradients are tested for positive-linear independence with an LP.
"""

import numpy as np

from grcv.dataset import SplitSpec
from grcv.grm import prepare_instance
from grcv.mpec import active_sets, check_index_relations, feasible_point, mfcq_diagnostic

from compare_methods import make_data


if __name__ == "__main__":
    p = prepare_instance(make_data(20, seed=3), SplitSpec(20, 0, 2)).problem
    rng = np.random.default_rng(0)
    independent = relations_ok = 0
    for C in 10.0 ** rng.uniform(-2, 2, size=50):
        v = feasible_point(p, C).v
        independent += mfcq_diagnostic(p, v).independent
        relations_ok += all(ok for ok, _, _ in check_index_relations(p, v).values())
    print(f"MFCQ holds at {independent}/50 points, index identities at {relations_ok}/50")

    v = feasible_point(p, 1.0).v
    print("active-set sizes at C = 1:", active_sets(p, v).sizes())
