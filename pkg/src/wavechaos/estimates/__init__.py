"""Numerical verification engines for the analytic estimates."""

from ..reports import CSV_HEADER, EstimateReport, MCConfig, QuadratureConfig
from .chain import (
    PsiChainGrid,
    cosine_moment_constant,
    get_chain_grid,
    psi_mixed_order1,
    psi_tilde_diagonal,
    wave_lemma_closed_center,
)
from .moments import (
    ModelParams,
    alpha_tilde_mc,
    alpha_tilde_quadrature,
    factorial_exponent,
    hypercontractive_bound,
    increment_second_moment,
    series_S,
)
from .oscillatory import (
    heat_lemma_closed,
    lemma_integral,
    lemma_sup_constant,
    sphere_area,
    uniform_beta_integral,
)

__all__ = [
    "CSV_HEADER",
    "EstimateReport",
    "MCConfig",
    "QuadratureConfig",
    "ModelParams",
    "PsiChainGrid",
    "alpha_tilde_mc",
    "alpha_tilde_quadrature",
    "cosine_moment_constant",
    "factorial_exponent",
    "get_chain_grid",
    "heat_lemma_closed",
    "hypercontractive_bound",
    "increment_second_moment",
    "lemma_integral",
    "lemma_sup_constant",
    "psi_mixed_order1",
    "psi_tilde_diagonal",
    "series_S",
    "sphere_area",
    "uniform_beta_integral",
    "wave_lemma_closed_center",
]
