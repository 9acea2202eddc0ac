"""Exact discrete Wiener-chaos calculus over lattice cells.

Functionals of the noise are polynomials in the basis Gaussians W(cell).
Multiple Wiener integrals of elementary off-diagonal kernels are realized as
Wick (Hermite) products, which is the unique choice under which the defining
identities hold exactly on correlated cells: centered integrals, the isometry
E[I_n(f) I_n(g)] = n! <f~, g~>, chaos orthogonality, and the adjointness of
derivative and divergence.  An Isserlis pairing oracle for expectations keeps
every identity checkable by an independent route.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .reports import EstimateReport

__all__ = [
    "PolynomialFunctional",
    "SymmetricKernel",
    "ChaosVector",
    "DEGREE_CAP",
    "DegreeCapError",
    "DiagonalKernelError",
    "symmetrize",
    "hp_inner_product",
    "multiple_wiener_integral",
    "wick_expectation",
    "isometry_check",
    "chaos_project",
    "reconstruct",
    "substitute_cells",
    "kernel_to_json",
    "kernel_from_json",
    "poly_to_json",
    "poly_from_json",
]

# Pairing enumeration stays exact and fast up to this total monomial degree
# (10395 pairings at degree 12).
DEGREE_CAP = 12


class DegreeCapError(ValueError):
    """Monomial degree exceeds the pairing-enumeration guard."""


class DiagonalKernelError(ValueError):
    """A kernel tuple repeats a cell index."""


def _cov_matrix(cov) -> np.ndarray:
    entries = getattr(cov, "entries", cov)
    return np.asarray(entries, dtype=float)


class PolynomialFunctional:
    """Polynomial in the basis Gaussians, stored as {monomial: coefficient}.

    A monomial is a sorted tuple of cell indices with multiplicity; the empty
    tuple is the constant term.  Instances are treated as immutable; all
    arithmetic returns new objects.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        clean: dict[tuple[int, ...], float] = {}
        for mono, coeff in (terms or {}).items():
            key = tuple(sorted(int(i) for i in mono))
            c = float(coeff)
            if c != 0.0:
                clean[key] = clean.get(key, 0.0) + c
        self.terms = {k: v for k, v in clean.items() if v != 0.0}

    @classmethod
    def constant(cls, value: float) -> "PolynomialFunctional":
        return cls({(): value})

    @classmethod
    def gaussian(cls, cell: int) -> "PolynomialFunctional":
        return cls({(int(cell),): 1.0})

    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    def coefficient(self, mono) -> float:
        return self.terms.get(tuple(sorted(int(i) for i in mono)), 0.0)

    def cells(self) -> set[int]:
        out: set[int] = set()
        for mono in self.terms:
            out.update(mono)
        return out

    def __add__(self, other):
        other = _as_poly(other)
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out.get(mono, 0.0) + coeff
        return PolynomialFunctional(out)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialFunctional({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return PolynomialFunctional(
                {m: c * float(other) for m, c in self.terms.items()}
            )
        other = _as_poly(other)
        out: dict[tuple[int, ...], float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                key = tuple(sorted(m1 + m2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return PolynomialFunctional(out)

    __rmul__ = __mul__

    def evaluate(self, samples: np.ndarray) -> np.ndarray:
        """Evaluate on draws; ``samples`` has shape (n_draws, n_cells)."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        out = np.zeros(samples.shape[0])
        for mono, coeff in self.terms.items():
            if not mono:
                out += coeff
            else:
                out += coeff * np.prod(samples[:, list(mono)], axis=1)
        return out

    def max_coeff_diff(self, other) -> float:
        other = _as_poly(other)
        keys = set(self.terms) | set(other.terms)
        return max(
            (abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) for k in keys),
            default=0.0,
        )

    def __eq__(self, other):
        try:
            other = _as_poly(other)
        except TypeError:
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        if not self.terms:
            return "PolynomialFunctional(0)"
        bits = []
        for mono in sorted(self.terms):
            coeff = self.terms[mono]
            mono_s = "*".join(f"W({i})" for i in mono) if mono else "1"
            bits.append(f"{coeff:+.6g}*{mono_s}")
        return "PolynomialFunctional(" + " ".join(bits) + ")"


def _as_poly(obj) -> PolynomialFunctional:
    if isinstance(obj, PolynomialFunctional):
        return obj
    if isinstance(obj, (int, float, np.floating)):
        return PolynomialFunctional.constant(float(obj))
    raise TypeError(f"cannot coerce {type(obj).__name__} to PolynomialFunctional")


ZERO = PolynomialFunctional()
ONE = PolynomialFunctional.constant(1.0)


@dataclass(frozen=True)
class SymmetricKernel:
    """Order-n coefficient tensor over cell tuples, vanishing on diagonals.

    Storage is canonical on sorted tuples of distinct indices; the stored
    coefficient is the value the symmetrized kernel takes on every ordering
    of that tuple.
    """

    order: int
    coeffs: dict

    def __post_init__(self):
        clean: dict[tuple[int, ...], float] = {}
        for key, coeff in self.coeffs.items():
            tup = tuple(int(i) for i in key)
            if len(tup) != self.order:
                raise ValueError(
                    f"tuple {tup} has length {len(tup)}, expected order {self.order}"
                )
            if len(set(tup)) != len(tup):
                raise DiagonalKernelError(f"tuple {tup} repeats a cell index")
            if tuple(sorted(tup)) != tup:
                raise ValueError(f"tuple {tup} is not sorted")
            c = float(coeff)
            if c != 0.0:
                clean[tup] = c
        object.__setattr__(self, "coeffs", clean)

    def value(self, ordered_tuple) -> float:
        """Kernel value on an arbitrary ordered tuple (zero on diagonals)."""
        tup = tuple(int(i) for i in ordered_tuple)
        if len(set(tup)) != len(tup):
            return 0.0
        return self.coeffs.get(tuple(sorted(tup)), 0.0)

    def slice_last(self, cell: int) -> "SymmetricKernel":
        """The order-(n-1) kernel f(., cell) obtained by pinning one slot."""
        if self.order == 0:
            raise ValueError("cannot slice an order-0 kernel")
        out: dict[tuple[int, ...], float] = {}
        for tup, coeff in self.coeffs.items():
            if cell in tup:
                rest = tuple(i for i in tup if i != cell)
                out[rest] = coeff
        return SymmetricKernel(self.order - 1, out)

    def cells(self) -> set[int]:
        out: set[int] = set()
        for tup in self.coeffs:
            out.update(tup)
        return out

    def __eq__(self, other):
        if not isinstance(other, SymmetricKernel):
            return NotImplemented
        return self.order == other.order and self.coeffs == other.coeffs

    def max_coeff_diff(self, other: "SymmetricKernel") -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max(
            (abs(self.coeffs.get(k, 0.0) - other.coeffs.get(k, 0.0)) for k in keys),
            default=0.0,
        )


@dataclass(frozen=True)
class ChaosVector:
    """Chaos decomposition (J_0, J_1, ..., J_N), one kernel per order."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        for k, kern in enumerate(comps):
            if kern.order != k:
                raise ValueError(
                    f"component {k} has order {kern.order}; orders must be 0..N"
                )
        object.__setattr__(self, "components", comps)

    @property
    def max_order(self) -> int:
        return len(self.components) - 1


def symmetrize(raw: dict, order: int, on_diagonal: str = "reject") -> SymmetricKernel:
    """Symmetrize a coefficient map over arbitrary ordered tuples.

    The resulting kernel takes, on each ordering of a sorted tuple t, the
    value (1/n!) * sum of raw coefficients over all orderings of t.
    Diagonal tuples are rejected (error on nonzero coefficient) or dropped,
    per ``on_diagonal``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if on_diagonal not in ("reject", "drop"):
        raise ValueError(f"unknown on_diagonal mode {on_diagonal!r}")
    fact = math.factorial(order)
    out: dict[tuple[int, ...], float] = {}
    for key, coeff in raw.items():
        tup = tuple(int(i) for i in key)
        if len(tup) != order:
            raise ValueError(f"tuple {tup} has length {len(tup)}, expected {order}")
        c = float(coeff)
        if len(set(tup)) != len(tup):
            if c != 0.0 and on_diagonal == "reject":
                raise DiagonalKernelError(
                    f"diagonal tuple {tup} carries nonzero coefficient {c}"
                )
            continue
        skey = tuple(sorted(tup))
        out[skey] = out.get(skey, 0.0) + c / fact
    return SymmetricKernel(order, out)


def hp_inner_product(f: SymmetricKernel, g: SymmetricKernel, cov) -> float:
    """Tensor-power inner product <f~, g~> of two symmetrized kernels.

    Sums coeff_f * coeff_g * prod_k cov(i_k, j_k) over all index alignments
    implied by symmetrization; per sorted tuple pair this is n! times the
    permanent of the covariance submatrix.
    """
    if f.order != g.order:
        raise ValueError(f"order mismatch: {f.order} != {g.order}")
    mat = _cov_matrix(cov)
    n = f.order
    if n == 0:
        return f.coeffs.get((), 0.0) * g.coeffs.get((), 0.0)
    fact = math.factorial(n)
    total = 0.0
    for s, cf in sorted(f.coeffs.items()):
        for t, cg in sorted(g.coeffs.items()):
            perm = 0.0
            for rho in itertools.permutations(range(n)):
                prod = 1.0
                for k in range(n):
                    prod *= mat[s[k], t[rho[k]]]
                perm += prod
            total += cf * cg * fact * perm
    return total


def _wick_monomial(indices: tuple[int, ...], mat: np.ndarray, memo: dict):
    """Wick product :W_{i1} ... W_{in}: as a polynomial, via the recursion

    :W_x P: = W_x * :P: - sum_y cov(x, y) * :P without y:.
    """
    if indices in memo:
        return memo[indices]
    if not indices:
        return ONE
    x = indices[0]
    rest = indices[1:]
    inner = _wick_monomial(rest, mat, memo)
    out = PolynomialFunctional.gaussian(x) * inner
    for j, y in enumerate(rest):
        reduced = rest[:j] + rest[j + 1 :]
        out = out - mat[x, y] * _wick_monomial(reduced, mat, memo)
    memo[indices] = out
    return out


def multiple_wiener_integral(f: SymmetricKernel, cov) -> PolynomialFunctional:
    """I_n(f) = n! * sum over sorted tuples of coeff * :W(c_1)...W(c_n):.

    The Wick product makes every integral of order n >= 1 centered and the
    isometry exact even though distinct cells are correlated.
    """
    mat = _cov_matrix(cov)
    n = f.order
    if n == 0:
        return PolynomialFunctional.constant(f.coeffs.get((), 0.0))
    fact = math.factorial(n)
    memo: dict = {}
    out = ZERO
    for tup, coeff in sorted(f.coeffs.items()):
        out = out + fact * coeff * _wick_monomial(tup, mat, memo)
    return out


def _pairing_sum(indices: tuple[int, ...], mat: np.ndarray, memo: dict) -> float:
    if not indices:
        return 1.0
    if len(indices) % 2 == 1:
        return 0.0
    if indices in memo:
        return memo[indices]
    x = indices[0]
    total = 0.0
    for j in range(1, len(indices)):
        rest = indices[1:j] + indices[j + 1 :]
        total += mat[x, indices[j]] * _pairing_sum(rest, mat, memo)
    memo[indices] = total
    return total


def wick_expectation(p: PolynomialFunctional, cov, degree_cap: int = DEGREE_CAP) -> float:
    """E[p(W)] by exact Isserlis pairing enumeration.

    Independent of the chaos machinery; this is the oracle side of every
    exactness test.  Raises :class:`DegreeCapError` above ``degree_cap``.
    """
    mat = _cov_matrix(cov)
    memo: dict = {}
    total = 0.0
    for mono in sorted(p.terms):
        if len(mono) > degree_cap:
            raise DegreeCapError(
                f"monomial degree {len(mono)} exceeds cap {degree_cap}"
            )
        total += p.terms[mono] * _pairing_sum(mono, mat, memo)
    return total


def isometry_check(
    f: SymmetricKernel, g: SymmetricKernel, cov, tol: float = 1e-10
) -> EstimateReport:
    """Compare E[I_n(f) I_n(g)] (pairing oracle) with n! <f~, g~>."""
    if f.order != g.order:
        raise ValueError(f"order mismatch: {f.order} != {g.order}")
    lhs = wick_expectation(
        multiple_wiener_integral(f, cov) * multiple_wiener_integral(g, cov), cov
    )
    rhs = math.factorial(f.order) * hp_inner_product(f, g, cov)
    scale = max(abs(lhs), abs(rhs), 1.0)
    rel = abs(lhs - rhs) / scale
    return EstimateReport(
        value=rel,
        bound=tol,
        error_estimate=0.0,
        passed=rel <= tol,
        meta={"check": "isometry", "order": f.order, "lhs": lhs, "rhs": rhs},
    )


def _wick_decompose(p: PolynomialFunctional, mat: np.ndarray) -> dict:
    """Expansion of p in the Wick basis: {multiset: coeff}.

    Uses W_x * :T: = :T + x: + sum_{y in T} cov(x, y) * :T - y:.
    """
    rep: dict[tuple[int, ...], float] = {}
    for mono in sorted(p.terms):
        coeff = p.terms[mono]
        current: dict[tuple[int, ...], float] = {(): coeff}
        for x in mono:
            nxt: dict[tuple[int, ...], float] = {}
            for tset, c in current.items():
                grown = tuple(sorted(tset + (x,)))
                nxt[grown] = nxt.get(grown, 0.0) + c
                for j, y in enumerate(tset):
                    reduced = tset[:j] + tset[j + 1 :]
                    nxt[reduced] = nxt.get(reduced, 0.0) + c * mat[x, y]
            current = nxt
        for tset, c in current.items():
            rep[tset] = rep.get(tset, 0.0) + c
    return {k: v for k, v in rep.items() if v != 0.0}


def chaos_project(
    p: PolynomialFunctional,
    cov,
    degree_cap: int = DEGREE_CAP,
    on_diagonal: str = "error",
) -> ChaosVector:
    """Decompose a polynomial into chaos components J_0, ..., J_N.

    J_0 equals the expectation of p, and sum_k I_k(J_k) reproduces p exactly
    as a polynomial identity.  A Wick component on a multiset with repeated
    cells cannot be represented by an off-diagonal kernel on this lattice;
    such inputs raise :class:`DiagonalKernelError` ("requires refinement")
    unless ``on_diagonal="drop"``.
    """
    if p.degree() > degree_cap:
        raise DegreeCapError(f"degree {p.degree()} exceeds cap {degree_cap}")
    if on_diagonal not in ("error", "drop"):
        raise ValueError(f"unknown on_diagonal mode {on_diagonal!r}")
    mat = _cov_matrix(cov)
    rep = _wick_decompose(p, mat)
    max_order = max((len(t) for t in rep), default=0)
    raw: list[dict] = [dict() for _ in range(max_order + 1)]
    for tset, coeff in rep.items():
        k = len(tset)
        if len(set(tset)) != k:
            if on_diagonal == "error":
                raise DiagonalKernelError(
                    f"requires refinement: Wick component on diagonal multiset "
                    f"{tset} (coefficient {coeff:.6g}) is not representable by "
                    f"an off-diagonal kernel on a fixed lattice"
                )
            continue
        raw[k][tset] = coeff / math.factorial(k)
    comps = [SymmetricKernel(k, raw[k]) for k in range(max_order + 1)]
    return ChaosVector(tuple(comps))


def reconstruct(vec: ChaosVector, cov) -> PolynomialFunctional:
    """sum_k I_k(J_k) as a polynomial."""
    out = ZERO
    for kern in vec.components:
        out = out + multiple_wiener_integral(kern, cov)
    return out


def substitute_cells(p: PolynomialFunctional, mapping: dict) -> PolynomialFunctional:
    """Rewrite W(c) as the sum of W over ``mapping[c]`` (cell refinement)."""
    out = ZERO
    for mono, coeff in sorted(p.terms.items()):
        term = PolynomialFunctional.constant(coeff)
        for idx in mono:
            children = mapping.get(idx, [idx])
            factor = ZERO
            for child in children:
                factor = factor + PolynomialFunctional.gaussian(child)
            term = term * factor
        out = out + term
    return out


# ---------------------------------------------------------------------------
# JSON serialization (golden-file format)
# ---------------------------------------------------------------------------

def kernel_to_json(f: SymmetricKernel) -> str:
    entries = [
        {"cells": list(tup), "coeff": coeff}
        for tup, coeff in sorted(f.coeffs.items())
    ]
    return json.dumps({"order": f.order, "entries": entries}, sort_keys=True)


def kernel_from_json(text: str) -> SymmetricKernel:
    doc = json.loads(text)
    return SymmetricKernel(
        doc["order"],
        {tuple(e["cells"]): e["coeff"] for e in doc["entries"]},
    )


def poly_to_json(p: PolynomialFunctional) -> str:
    terms = [
        {"cells": list(mono), "coeff": coeff}
        for mono, coeff in sorted(p.terms.items())
    ]
    return json.dumps({"terms": terms}, sort_keys=True)


def poly_from_json(text: str) -> PolynomialFunctional:
    doc = json.loads(text)
    return PolynomialFunctional(
        {tuple(t["cells"]): t["coeff"] for t in doc["terms"]}
    )
