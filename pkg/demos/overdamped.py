"""Overdamping survives the reduction.

Proportional damping ``a M + b K`` with ``a b > 1`` makes the triple chain
overdamped. The reduced models keep positive damping and real poles, with
the two pole types separated.
"""
import numpy as np

from soprbt.pipeline import run_pipeline
from soprbt.recovery import overdamped_pipeline_check
from soprbt.so_model import generate_triple_chain, is_overdamped

sys_ = generate_triple_chain(4, alpha=1.5, beta=1.5)
print("original overdamped:", is_overdamped(sys_).overdamped)
for r in (2, 3, 4):
    out = overdamped_pipeline_check(sys_, run_pipeline(sys_, r).reduced)
    print(f"r={r}: D min eig {out['D_min_eig']:.3f}, K min eig {out['K_min_eig']:.3f}")
    print("   negative-type poles", np.round(out["neg_type_poles"], 3))
    print("   positive-type poles", np.round(out["pos_type_poles"], 3))

# with S = diag(-I, I) the positive-type poles sit below the negative-type ones
