"""Malliavin derivative, Skorohod divergence, and the Hilbert-valued divergence.

All three operators act on polynomial functionals of the lattice Gaussians,
where they are finitely computable: the derivative is the formal gradient in
the basis variables, and the divergence follows the smooth-elementary rule

    delta(F * 1_cell) = F * W(cell) - <DF, 1_cell>

extended linearly.  The chaos-shift property (divergence of an order-n
integrand equals the order-(n+1) integral) and the duality with the
derivative are then theorems that the test suite verifies against the
pairing oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chaos_algebra import (
    ZERO,
    DegreeCapError,
    DEGREE_CAP,
    PolynomialFunctional,
    SymmetricKernel,
    _as_poly,
    _cov_matrix,
    multiple_wiener_integral,
    wick_expectation,
)
from .reports import EstimateReport

__all__ = [
    "HPValuedFunctional",
    "HP2ValuedFunctional",
    "derivative",
    "derivative_of_In",
    "divergence",
    "duality_check",
    "second_derivative",
    "hilbert_divergence",
    "hilbert_duality_check",
    "hilbert_energy_check",
    "sobolev_norm_series",
]


@dataclass(frozen=True)
class HPValuedFunctional:
    """Random element of the noise Hilbert space, in the cell-indicator basis.

    ``components[cell]`` is the polynomial coefficient of the indicator of
    that cell; only finitely many are nonzero.
    """

    components: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for cell, poly in self.components.items():
            poly = _as_poly(poly)
            if poly.terms:
                clean[int(cell)] = poly
        object.__setattr__(self, "components", clean)

    def component(self, cell: int) -> PolynomialFunctional:
        return self.components.get(int(cell), ZERO)

    def cells(self) -> list[int]:
        return sorted(self.components)

    def __add__(self, other: "HPValuedFunctional") -> "HPValuedFunctional":
        out = dict(self.components)
        for cell, poly in other.components.items():
            out[cell] = out.get(cell, ZERO) + poly
        return HPValuedFunctional(out)

    def __sub__(self, other: "HPValuedFunctional") -> "HPValuedFunctional":
        return self + other.scale(-1.0)

    def scale(self, factor: float) -> "HPValuedFunctional":
        return HPValuedFunctional(
            {cell: poly * factor for cell, poly in self.components.items()}
        )

    def max_degree(self) -> int:
        return max((p.degree() for p in self.components.values()), default=0)

    def max_coeff_diff(self, other: "HPValuedFunctional") -> float:
        cells = set(self.components) | set(other.components)
        return max(
            (self.component(c).max_coeff_diff(other.component(c)) for c in cells),
            default=0.0,
        )


@dataclass(frozen=True)
class HP2ValuedFunctional:
    """Random element of the tensor square, indexed by cell pairs.

    The first slot is the one a Hilbert-valued divergence integrates out; the
    second slot survives.
    """

    components: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, poly in self.components.items():
            i, j = (int(key[0]), int(key[1]))
            poly = _as_poly(poly)
            if poly.terms:
                clean[(i, j)] = poly
        object.__setattr__(self, "components", clean)

    def component(self, i: int, j: int) -> PolynomialFunctional:
        return self.components.get((int(i), int(j)), ZERO)

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.components)

    def max_degree(self) -> int:
        return max((p.degree() for p in self.components.values()), default=0)

    def max_coeff_diff(self, other: "HP2ValuedFunctional") -> float:
        keys = set(self.components) | set(other.components)
        return max(
            (
                self.component(*k).max_coeff_diff(other.component(*k))
                for k in keys
            ),
            default=0.0,
        )


def derivative(p: PolynomialFunctional) -> HPValuedFunctional:
    """Formal gradient: component at cell i is dp/dW(i).

    Satisfies the Leibniz rule identically and D W(cell) = 1_cell.
    """
    comps: dict[int, dict] = {}
    for mono, coeff in p.terms.items():
        seen = set()
        for pos, cell in enumerate(mono):
            if cell in seen:
                continue
            seen.add(cell)
            mult = mono.count(cell)
            reduced = list(mono)
            reduced.remove(cell)
            bucket = comps.setdefault(cell, {})
            key = tuple(reduced)
            bucket[key] = bucket.get(key, 0.0) + coeff * mult
    return HPValuedFunctional(
        {cell: PolynomialFunctional(terms) for cell, terms in comps.items()}
    )


def derivative_of_In(f: SymmetricKernel, cov) -> HPValuedFunctional:
    """Chaos form of the derivative: D I_n(f) = n I_{n-1}(f(., cell)) per cell."""
    n = f.order
    if n == 0:
        return HPValuedFunctional({})
    comps = {}
    for cell in sorted(f.cells()):
        sliced = f.slice_last(cell)
        comps[cell] = float(n) * multiple_wiener_integral(sliced, cov)
    return HPValuedFunctional(comps)


def _contract_derivative(p: PolynomialFunctional, cell: int, mat: np.ndarray):
    """<Dp, 1_cell> in the noise Hilbert space: sum_j (Dp)_j cov(j, cell)."""
    out = ZERO
    for j, comp in derivative(p).components.items():
        out = out + mat[j, cell] * comp
    return out


def divergence(
    u: HPValuedFunctional, cov, degree_cap: int = DEGREE_CAP
) -> PolynomialFunctional:
    """Skorohod integral by the smooth-elementary rule, extended linearly:

    delta(u) = sum_i u_i W(cell_i) - sum_i <D u_i, 1_cell_i>.
    """
    if u.max_degree() > degree_cap - 1:
        raise DegreeCapError(
            f"component degree {u.max_degree()} exceeds cap {degree_cap} - 1"
        )
    mat = _cov_matrix(cov)
    out = ZERO
    for cell in u.cells():
        poly = u.component(cell)
        out = out + poly * PolynomialFunctional.gaussian(cell)
        out = out - _contract_derivative(poly, cell, mat)
    return out


def duality_check(
    F: PolynomialFunctional, u: HPValuedFunctional, cov, tol: float = 1e-10
) -> EstimateReport:
    """E[F delta(u)] versus E<DF, u>, both through the pairing oracle."""
    mat = _cov_matrix(cov)
    lhs = wick_expectation(F * divergence(u, cov), cov)
    dF = derivative(F)
    pairing = ZERO
    for i, dcomp in dF.components.items():
        for j, ucomp in u.components.items():
            pairing = pairing + mat[i, j] * (dcomp * ucomp)
    rhs = wick_expectation(pairing, cov)
    err = abs(lhs - rhs)
    bound = tol * (1.0 + abs(lhs))
    return EstimateReport(
        value=err,
        bound=bound,
        error_estimate=0.0,
        passed=err <= bound,
        meta={"check": "duality", "lhs": lhs, "rhs": rhs},
    )


def second_derivative(p: PolynomialFunctional) -> HP2ValuedFunctional:
    """Iterated formal gradient; symmetric in the two cell slots."""
    comps = {}
    first = derivative(p)
    for i, comp in first.components.items():
        for j, inner in derivative(comp).components.items():
            comps[(j, i)] = inner
    return HP2ValuedFunctional(comps)


def hilbert_divergence(
    U: HP2ValuedFunctional, cov, degree_cap: int = DEGREE_CAP
) -> HPValuedFunctional:
    """Hilbert-valued divergence, slot-wise by the smooth-elementary rule.

    The first slot is integrated; the second survives:

    delta*(U)_j = sum_i [ U_(i,j) W(cell_i) - <D U_(i,j), 1_cell_i> ].
    """
    if U.max_degree() > degree_cap - 1:
        raise DegreeCapError(
            f"component degree {U.max_degree()} exceeds cap {degree_cap} - 1"
        )
    mat = _cov_matrix(cov)
    comps: dict[int, PolynomialFunctional] = {}
    for (i, j), poly in sorted(U.components.items()):
        contrib = poly * PolynomialFunctional.gaussian(i)
        contrib = contrib - _contract_derivative(poly, i, mat)
        comps[j] = comps.get(j, ZERO) + contrib
    return HPValuedFunctional(comps)


def hilbert_duality_check(
    F: HPValuedFunctional, U: HP2ValuedFunctional, cov, tol: float = 1e-10
) -> EstimateReport:
    """E<F, delta*(U)> versus E<DF, U> for a Hilbert-space-valued F."""
    mat = _cov_matrix(cov)
    dstar = hilbert_divergence(U, cov)
    lhs_poly = ZERO
    for j, fj in F.components.items():
        for j2, gj in dstar.components.items():
            lhs_poly = lhs_poly + mat[j, j2] * (fj * gj)
    lhs = wick_expectation(lhs_poly, cov)
    rhs_poly = ZERO
    for j, fj in F.components.items():
        dfj = derivative(fj)
        for i, dcomp in dfj.components.items():
            for (i2, j2), ucomp in U.components.items():
                rhs_poly = rhs_poly + mat[i, i2] * mat[j, j2] * (dcomp * ucomp)
    rhs = wick_expectation(rhs_poly, cov)
    err = abs(lhs - rhs)
    bound = tol * (1.0 + abs(lhs))
    return EstimateReport(
        value=err,
        bound=bound,
        error_estimate=0.0,
        passed=err <= bound,
        meta={"check": "hilbert_duality", "lhs": lhs, "rhs": rhs},
    )


def hilbert_energy_check(
    U: HP2ValuedFunctional, cov, tol: float = 1e-10
) -> EstimateReport:
    """Energy inequality E||delta*(U)||^2 <= E||U||^2 + E||DU||^2, Wick-exact."""
    mat = _cov_matrix(cov)
    dstar = hilbert_divergence(U, cov)
    lhs_poly = ZERO
    for j, pj in dstar.components.items():
        for j2, pj2 in dstar.components.items():
            lhs_poly = lhs_poly + mat[j, j2] * (pj * pj2)
    lhs = wick_expectation(lhs_poly, cov)

    norm_u = ZERO
    for (i, j), p in U.components.items():
        for (i2, j2), q in U.components.items():
            norm_u = norm_u + mat[i, i2] * mat[j, j2] * (p * q)
    # DU has components (k, i, j) = d U_(i,j) / d W(k)
    du = {
        (k, i, j): comp
        for (i, j), p in U.components.items()
        for k, comp in derivative(p).components.items()
    }
    norm_du = ZERO
    for (k, i, j), p in du.items():
        for (k2, i2, j2), q in du.items():
            norm_du = norm_du + mat[k, k2] * mat[i, i2] * mat[j, j2] * (p * q)
    rhs = wick_expectation(norm_u, cov) + wick_expectation(norm_du, cov)
    slack = tol * (1.0 + abs(rhs))
    return EstimateReport(
        value=lhs,
        bound=rhs,
        error_estimate=slack,
        passed=lhs <= rhs + slack,
        meta={"check": "hilbert_energy", "lhs": lhs, "rhs": rhs},
    )


def sobolev_norm_series(
    t: float, k: int, params, N: int, mc=None, quad=None, kind: str = "wave"
) -> EstimateReport:
    """Partial sums of sum_n n^k alpha_n(t) / n! against the comparison series.

    The comparison is sum_n [2^k C]^n / (n!)^(alpha - d + 3) with C measured
    from the estimated terms; membership of the solution in the order-k
    Sobolev-Watanabe space corresponds to the full series being finite.
    k = 0 reduces to the second-moment series.
    """
    from . import estimates

    mc = mc or estimates.MCConfig(samples=20_000, seed=7)
    quad = quad or estimates.QuadratureConfig()
    terms = [1.0 if k == 0 else 0.0]  # n = 0 contributes only when k = 0
    alphas = [1.0]
    mc_errors = [0.0]
    for n in range(1, N + 1):
        rep = estimates.alpha_tilde_mc(kind, n, t, params, mc, quad)
        alphas.append(rep.value)
        mc_errors.append(rep.error_estimate)
        terms.append(n**k * rep.value / math.factorial(n))
    partial = np.cumsum(terms)

    expo = params.alpha - params.d + 2.0
    c_measured = max(
        (alphas[n] * math.factorial(n) ** expo) ** (1.0 / n)
        for n in range(1, N + 1)
    )
    comparison_terms = [1.0 if k == 0 else 0.0] + [
        (2.0**k * c_measured) ** n / math.factorial(n) ** (expo + 1.0)
        for n in range(1, N + 1)
    ]
    comparison = np.cumsum(comparison_terms)
    ok = bool(np.all(partial <= comparison + 1e-12 * np.abs(comparison)))
    mc_err = float(
        sum(n**k * e / math.factorial(n) for n, e in enumerate(mc_errors))
    )
    return EstimateReport(
        value=float(partial[-1]),
        bound=float(comparison[-1]),
        error_estimate=mc_err,
        passed=ok and float(partial[-1]) <= float(comparison[-1]) + mc_err,
        meta={
            "check": "sobolev_series",
            "k": k,
            "t": t,
            "N": N,
            "partial_sums": [float(x) for x in partial],
            "comparison_sums": [float(x) for x in comparison],
            "alpha_terms": alphas,
            "C_measured": c_measured,
        },
    )
