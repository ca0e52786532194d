"""e-BH with conditional-calibration boosting."""

from .calibration import (BoostOutcome, CCConfig, CCResult, apply_mask,
                          boost_avcs, boost_ci, boost_with_budget,
                          budget_mode_select, cc_rounds_exact, ebhcc,
                          mc_sample, phi_exact)
from .confidence import AsymptoticCS, HedgedCS, bernstein_ci, hybrid_cs
from .evalues import bh, ebh, fdp, power, self_consistent

__all__ = [
    "AsymptoticCS", "BoostOutcome", "CCConfig", "CCResult", "HedgedCS",
    "apply_mask", "bernstein_ci", "bh", "boost_avcs", "boost_ci",
    "boost_with_budget", "budget_mode_select", "cc_rounds_exact", "ebh",
    "ebhcc", "fdp", "hybrid_cs", "mc_sample", "phi_exact", "power",
    "self_consistent",
]
