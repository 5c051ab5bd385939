"""Padding a reduced model whose typed zeros cannot be paired.

A reduced structured system is built directly in balanced form with zero
dynamics ``diag(mu_plus, mu_minus)``. When ``mu_minus < mu_plus`` fails,
synthetic zeros are appended, the order grows, and the transfer function is
unchanged.
"""
import sys
from pathlib import Path

import numpy as np

from soprbt.fo_realization import fo_frequency_response
from soprbt.recovery import recover
from soprbt.so_model import frequency_response

# the balanced-form builder lives with the tests
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from builders import balanced_instance  # noqa: E402

red = balanced_instance(mu_plus=[-3.0], mu_minus=[-1.0])
out = recover(red, check_zeros=False)
print("condition met before padding:", out.condition_ok)
print("added (mu_plus, mu_minus):", out.padding)
print("order", red.r, "->", out.final_r)
w = np.logspace(-2, 2, 50)
G = fo_frequency_response(red.fo, w)
Gp = frequency_response(out.result.to_system(), w)
print("max transfer function change:", np.abs(G - Gp).max())
print("recovered damping eigenvalues:", np.linalg.eigvalsh(out.result.D))
