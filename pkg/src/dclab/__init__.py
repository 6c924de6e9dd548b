"""Delta-convexity of quadratic forms, probed through Walsh-Paley martingales."""

from .dcgauge import (ConstantEstimate, ControlGrid, DcSumReport, SearchConfig, control_check,
                      control_value_iteration, dc_lower_bound, dc_sum, homogeneity_check, make_grid,
                      theorem3_chain, umd_lower_bound)
from .dyadic import DyadicTable, conditional_expectation, expectation, section, tail_weighted_sum
from .factorize import (DominatingFormCertificate, FactorizationCertificate, Gamma2Estimate, block_assemble,
                        dss_from_factorization, gamma2_l1_linf, hilbert_factorization, min_dominating_form,
                        spectral_split)
from .martingale import (PredictableSigns, WalshPaleyMartingale, doob_ratio, second_difference_sum,
                         stopping_profile, transform)
from .quadform import (DirectSum, Lp, QuadraticForm, SymOperator, counterexample_form, delta2, duality_form,
                       operator_norm, parse_space)

__all__ = [
    "ConstantEstimate", "ControlGrid", "DcSumReport", "SearchConfig", "control_check", "control_value_iteration",
    "dc_lower_bound", "dc_sum", "homogeneity_check", "make_grid", "theorem3_chain", "umd_lower_bound",
    "DyadicTable", "conditional_expectation", "expectation", "section", "tail_weighted_sum",
    "DominatingFormCertificate", "FactorizationCertificate", "Gamma2Estimate", "block_assemble",
    "dss_from_factorization", "gamma2_l1_linf", "hilbert_factorization", "min_dominating_form", "spectral_split",
    "PredictableSigns", "WalshPaleyMartingale", "doob_ratio", "second_difference_sum", "stopping_profile",
    "transform", "DirectSum", "Lp", "QuadraticForm", "SymOperator", "counterexample_form", "delta2",
    "duality_form", "operator_norm", "parse_space",
]

__version__ = "0.1.0"
