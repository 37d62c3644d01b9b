"""Discrete reduction of the spectral problem and the two-scale model system."""

from .density import model_density
from .harris_lutz import (BetaSeries, ModelReduction, beta_series, harris_lutz_Q1, harris_lutz_bound,
                          oscillatory_tail, reduce_to_model)
from .monodromy import EtaPropagator, discrete_monodromy, leading_defect, leading_term, monodromy_sequence
from .recursion import (ModelParams, ModelRun, RemainderSeq, ThetaResult, b_matrix, levinson_limit,
                        max_product_norm, run_recursion, theta_map)
from .slow_scale import (InterchangeReport, interchange_check, limit_ode_solve, slow_limit, volterra_solve,
                         z_equation_residual)

__all__ = [
    "BetaSeries", "EtaPropagator", "InterchangeReport", "ModelParams", "ModelReduction", "ModelRun",
    "RemainderSeq", "ThetaResult", "b_matrix", "beta_series", "discrete_monodromy", "harris_lutz_Q1",
    "harris_lutz_bound", "interchange_check", "leading_defect", "leading_term", "levinson_limit",
    "limit_ode_solve", "max_product_norm", "model_density", "monodromy_sequence", "oscillatory_tail",
    "reduce_to_model", "run_recursion", "slow_limit", "theta_map", "volterra_solve", "z_equation_residual",
]
