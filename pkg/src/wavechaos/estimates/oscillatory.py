"""Singular oscillatory frequency integrals in d = 1, 2, 3.

The central object is

    I(t, eta) = int_{R^d} S(t, |xi|) |xi - eta|^(-alpha) dxi,

with S the squared wave transform sin^2(t r) / r^2 or the heat transform
exp(-t r^2 / 2).  Centering the coordinates at the singularity turns the
weight into a pure radial power, which a Gauss-Jacobi head panel integrates
exactly; the oscillatory bulk is covered by panels no wider than a quarter
half-period; the far tail is bounded in closed form.  The cutoff radius
adapts as R = R0/t + 2|eta| (wave; sqrt(t) for heat), which makes the whole
node structure equivariant under the exact scaling of the integral, so the
scaling identity is preserved by the quadrature rather than approximated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre, gamma

from ..propagators import PropagatorKind, _kind
from ..reports import EstimateReport, QuadratureConfig

__all__ = [
    "lemma_integral",
    "lemma_sup_constant",
    "uniform_beta_integral",
    "heat_lemma_closed",
    "sphere_area",
]

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_GJ_CACHE: dict[tuple[int, float], tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    return _GL_CACHE[n]


def _gj(n: int, beta: float):
    key = (n, round(beta, 12))
    if key not in _GJ_CACHE:
        _GJ_CACHE[key] = roots_jacobi(n, 0.0, beta)
    return _GJ_CACHE[key]


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


def heat_lemma_closed(t: float, alpha: float, d: int) -> float:
    """Closed form of int exp(-t |xi|^2 / 2) |xi|^(-alpha) dxi."""
    lam = d - alpha
    return sphere_area(d) * 0.5 * (2.0 / t) ** (lam / 2.0) * gamma(lam / 2.0)


def _profile(kind: PropagatorKind, t: float, r: np.ndarray) -> np.ndarray:
    """S(t, r): squared wave transform, or the heat transform."""
    if kind is PropagatorKind.WAVE:
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, (np.sin(t * r) / safe) ** 2, t * t)
    return np.exp(-0.5 * t * r * r)


def _angular_mean(
    kind: PropagatorKind, t: float, rho: np.ndarray, e: float, d: int
) -> np.ndarray:
    """int_{S^(d-1)} S(t, |eta - rho w|) dsigma(w), vectorized over rho."""
    rho = np.asarray(rho, dtype=float)
    if d == 1:
        return _profile(kind, t, np.abs(e - rho)) + _profile(kind, t, e + rho)
    # node count follows the phase swept as the angle turns
    osc = t * min(float(rho.max(initial=0.0)), e) if kind is PropagatorKind.WAVE else 0.0
    n_ang = int(min(24 + 3 * osc, 800))
    xs, ws = _gl(n_ang)
    if d == 2:
        theta = 0.5 * math.pi * (xs + 1.0)
        radii = np.sqrt(
            rho[:, None] ** 2 + e * e - 2.0 * rho[:, None] * e * np.cos(theta)[None, :]
        )
        vals = _profile(kind, t, radii)
        return 2.0 * (0.5 * math.pi) * vals @ ws
    # d == 3: axial symmetry in c = cos(phi)
    c = xs
    radii = np.sqrt(rho[:, None] ** 2 + e * e - 2.0 * rho[:, None] * e * c[None, :])
    vals = _profile(kind, t, radii)
    return 2.0 * math.pi * vals @ ws


def _radial_panels(kind: PropagatorKind, t: float, R: float):
    """(head_end, [panel edges]) resolving the oscillation of S(t, .)."""
    if kind is PropagatorKind.WAVE:
        width = math.pi / (4.0 * t)
        head = min(width, R)
        n_panels = max(int(math.ceil((R - head) / width)), 0)
        edges = np.linspace(head, R, n_panels + 1) if n_panels else np.array([head])
        return head, edges
    head = R * 2.0**-12
    edges = head * 2.0 ** np.arange(0, 13)
    edges[-1] = R
    return head, edges


def _wave_tail_bound(R: float, e: float, alpha: float, d: int) -> float:
    """Tail of the wave integral beyond R, using sin^2 <= 1."""
    expo = alpha - d + 2.0
    return sphere_area(d) * (1.0 - e / R) ** -2.0 * R**-expo / expo


def _heat_tail_bound(R: float, e: float, t: float, alpha: float, d: int) -> float:
    arg = 0.5 * t * (R - e) ** 2
    return (
        sphere_area(d)
        * max(R, 1.0) ** (d - 1.0 - alpha)
        * math.exp(-arg)
        * 2.0
        * math.sqrt(2.0 * math.pi / t)
    )


def _bulk(
    kind: PropagatorKind,
    t: float,
    e: float,
    alpha: float,
    d: int,
    R: float,
    gauss_n: int,
) -> float:
    """int_0^R rho^(d-1-alpha) * angular_mean(rho) drho."""
    beta = d - 1.0 - alpha
    head, edges = _radial_panels(kind, t, R)
    total = 0.0
    # Gauss-Jacobi head carries the radial power weight exactly.
    xj, wj = _gj(max(gauss_n, 24), beta)
    scale = 0.5 * head
    rho = scale * (xj + 1.0)
    vals = _angular_mean(kind, t, rho, e, d)
    total += scale ** (beta + 1.0) * float(np.dot(wj, vals))
    # plain Gauss-Legendre panels beyond the head
    xs, ws = _gl(gauss_n)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        rho = mid + half * xs
        vals = _angular_mean(kind, t, rho, e, d) * rho**beta
        total += half * float(np.dot(ws, vals))
    return total


def lemma_integral(
    kind,
    t: float,
    eta,
    alpha: float,
    d: int,
    q: QuadratureConfig | None = None,
) -> float:
    """int S(t, |xi|) |xi - eta|^(-alpha) dxi over R^d.

    Admissible orders: d-2 < alpha < d for the wave profile (the tail decays
    like rho^(d-3-alpha)), 0 < alpha < d for the heat profile.  The tail
    beyond the adaptive cutoff is added as a closed-form bound
    ("analytic_bound") or pushed below ``q.rel_tol`` by doubling the cutoff
    ("extended").
    """
    kind = _kind(kind)
    q = q or QuadratureConfig()
    if t <= 0:
        raise ValueError("t must be positive")
    if kind is PropagatorKind.WAVE:
        if not (d - 2.0 < alpha < d):
            raise ValueError(
                f"wave profile needs d-2 < alpha < d, got alpha={alpha}, d={d}"
            )
    else:
        if not (0.0 < alpha < d):
            raise ValueError(f"heat profile needs 0 < alpha < d, got {alpha}")
    e = float(np.linalg.norm(np.atleast_1d(np.asarray(eta, dtype=float))))
    t_scale = t if kind is PropagatorKind.WAVE else math.sqrt(t)
    R = q.cutoff / t_scale + 2.0 * e

    def tail(Rv: float) -> float:
        if kind is PropagatorKind.WAVE:
            return _wave_tail_bound(Rv, e, alpha, d)
        return _heat_tail_bound(Rv, e, t, alpha, d)

    bulk = _bulk(kind, t, e, alpha, d, R, q.panels)
    tb = tail(R)
    if q.tail_mode == "extended":
        doublings = 0
        while tb > q.rel_tol * max(bulk, 1e-300) and doublings < 20:
            R2 = 2.0 * R
            bulk += _bulk_between(kind, t, e, alpha, d, R, R2, q.panels)
            R = R2
            tb = tail(R)
            doublings += 1
    return bulk + tb


def _bulk_between(
    kind: PropagatorKind,
    t: float,
    e: float,
    alpha: float,
    d: int,
    R1: float,
    R2: float,
    gauss_n: int,
) -> float:
    beta = d - 1.0 - alpha
    if kind is PropagatorKind.WAVE:
        width = math.pi / (4.0 * t)
        n_panels = max(int(math.ceil((R2 - R1) / width)), 1)
    else:
        n_panels = 16
    edges = np.linspace(R1, R2, n_panels + 1)
    xs, ws = _gl(gauss_n)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        rho = mid + half * xs
        vals = _angular_mean(kind, t, rho, e, d) * rho**beta
        total += half * float(np.dot(ws, vals))
    return total


def _eta_norms(eta_grid, d: int) -> np.ndarray:
    arr = np.asarray(eta_grid, dtype=float)
    if arr.ndim == 1:
        return np.abs(arr)
    if arr.ndim == 2 and arr.shape[1] == d:
        return np.linalg.norm(arr, axis=1)
    raise ValueError("eta_grid must be 1-d norms or an (m, d) array of vectors")


def _sup_report(norms: np.ndarray, values: np.ndarray, meta: dict) -> EstimateReport:
    order = np.argsort(norms)
    norms = norms[order]
    values = values[order]
    idx = int(np.argmax(values))
    boundary = idx == len(values) - 1 or (
        len(values) >= 3 and values[-1] > values[-2] > values[-3]
    )
    status = "warning" if boundary else "pass"
    meta = dict(meta)
    meta.update(
        {
            "status": status,
            "eta_star": float(norms[idx]),
            "grid_min": float(norms[0]),
            "grid_max": float(norms[-1]),
        }
    )
    sup = float(values[idx])
    return EstimateReport(
        value=sup, bound=sup, error_estimate=0.0, passed=True, meta=meta
    )


def lemma_sup_constant(
    kind, alpha: float, d: int, eta_grid, q: QuadratureConfig | None = None
) -> EstimateReport:
    """Sup over the eta grid of the unit-time integral.

    By the scaling identity this estimates the constant in the uniform
    bound; the report is flagged when the boundary values of the grid are
    still rising, i.e. the sup did not localize inside the grid.
    """
    q = q or QuadratureConfig()
    norms = _eta_norms(eta_grid, d)
    values = np.array(
        [lemma_integral(kind, 1.0, [e] + [0.0] * (d - 1), alpha, d, q) for e in norms]
    )
    return _sup_report(
        norms, values, {"check": "lemma_sup", "kind": str(kind), "alpha": alpha, "d": d}
    )


def uniform_beta_integral(
    alpha: float,
    d: int,
    beta: float,
    eta_grid,
    q: QuadratureConfig | None = None,
) -> EstimateReport:
    """sup_eta int |xi|^(-alpha) (1 + |xi + eta|^2)^(-beta) dxi.

    Finite precisely for beta above (d - alpha)/2; the grid sweep checks
    finiteness and interior stabilization the same way as the sup constant.
    """
    q = q or QuadratureConfig()
    if not ((d - alpha) / 2.0 < beta < 1.0):
        raise ValueError(
            f"beta must lie in ((d-alpha)/2, 1) = ({(d-alpha)/2}, 1), got {beta}"
        )
    norms = _eta_norms(eta_grid, d)
    pow_beta = d - 1.0 - alpha

    def one(e: float) -> float:
        R = q.cutoff * (1.0 + e)
        xj, wj = _gj(32, pow_beta)
        xs, ws = _gl(q.panels)

        def angular(rho: np.ndarray) -> np.ndarray:
            if d == 1:
                return (1.0 + (rho + e) ** 2) ** -beta + (1.0 + (rho - e) ** 2) ** -beta
            nodes, wts = _gl(48)
            if d == 2:
                theta = 0.5 * math.pi * (nodes + 1.0)
                rr = rho[:, None] ** 2 + e * e + 2.0 * rho[:, None] * e * np.cos(theta)[None, :]
                return 2.0 * (0.5 * math.pi) * ((1.0 + rr) ** -beta) @ wts
            rr = rho[:, None] ** 2 + e * e + 2.0 * rho[:, None] * e * nodes[None, :]
            return 2.0 * math.pi * ((1.0 + rr) ** -beta) @ wts

        head = min(1.0, R)
        scale = 0.5 * head
        rho = scale * (xj + 1.0)
        total = scale ** (pow_beta + 1.0) * float(np.dot(wj, angular(rho)))
        edges = head * (R / head) ** np.linspace(0.0, 1.0, 33)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            r = mid + half * xs
            total += half * float(np.dot(ws, angular(r) * r**pow_beta))
        tail = (
            sphere_area(d)
            * (1.0 - min(e / R, 0.5)) ** (-2.0 * beta)
            * R ** (d - alpha - 2.0 * beta)
            / (alpha + 2.0 * beta - d)
        )
        return total + tail

    values = np.array([one(e) for e in norms])
    return _sup_report(
        norms,
        values,
        {"check": "uniform_beta", "alpha": alpha, "beta": beta, "d": d},
    )
