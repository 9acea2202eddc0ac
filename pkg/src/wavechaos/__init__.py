"""wavechaos: exact chaos calculus and estimate verification on a noise lattice.

A desk-scale numerical laboratory for the stochastic wave equation driven by
multiplicative noise that is fractional in time and Riesz-correlated in
space.  The noise is modelled exactly on a space-time lattice; functionals
of it are polynomials with exact Wiener-chaos, Malliavin-derivative and
Skorohod-divergence calculus; the analytic estimates behind existence,
moment bounds and Holder continuity are verified numerically.
"""

from . import (
    chaos_algebra,
    estimates,
    lattice_gaussian,
    malliavin_ops,
    propagators,
    solver,
)
from .chaos_algebra import (
    ChaosVector,
    PolynomialFunctional,
    SymmetricKernel,
    chaos_project,
    hp_inner_product,
    isometry_check,
    multiple_wiener_integral,
    symmetrize,
    wick_expectation,
)
from .lattice_gaussian import (
    Cell,
    CovarianceOperator,
    LatticeSpec,
    NoiseSample,
    build_covariance,
    rh_covariance,
    riesz_cell_integral,
    sample_noise,
)
from .malliavin_ops import (
    HP2ValuedFunctional,
    HPValuedFunctional,
    derivative,
    derivative_of_In,
    divergence,
    duality_check,
    hilbert_divergence,
    second_derivative,
)
from .reports import EstimateReport, MCConfig, QuadratureConfig
from .solver import chaos_truncation, holder_fit, picard_iterate, sample_field

__version__ = "0.1.0"
