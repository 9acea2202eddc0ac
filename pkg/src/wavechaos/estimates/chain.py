"""Nested frequency integrals in d = 1 via product-integration sweeps.

The diagonal of the order-n kernel norm is a chain of one-dimensional
integrals: each level convolves the running profile against the weakly
singular kernel |r - c|^(-alpha) under the squared propagator transform of
that level's time gap.  On a fixed grid the convolution becomes a
precomputed weight matrix (piecewise-quadratic product integration with
exact kernel moments), so one chain evaluation is a handful of
matrix-vector products and batches cheaply over Monte Carlo samples.

Closed forms: for the wave profile all order-1 inner products reduce to
cosine moments int_0^inf (1 - cos(p x)) x^(-1-s) dx, giving

    Psi(a, b) = const * [ (a+b)^s - |a-b|^s ],   s = 2 + alpha - d,

and the heat profile reduces to a Gamma function.  These are the oracles
the grid machinery is checked against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from ..propagators import PropagatorKind, _kind
from ..reports import QuadratureConfig
from .oscillatory import heat_lemma_closed, sphere_area

__all__ = [
    "cosine_moment_constant",
    "psi_mixed_order1",
    "wave_lemma_closed_center",
    "PsiChainGrid",
    "get_chain_grid",
    "psi_tilde_diagonal",
]

MAX_CHAIN_ORDER = 4


def cosine_moment_constant(s: float) -> float:
    """C(s) = int_0^inf (1 - cos x) x^(-1-s) dx = pi / (2 Gamma(1+s) sin(pi s/2))."""
    if not 0.0 < s < 2.0:
        raise ValueError(f"s must lie in (0, 2), got {s}")
    return math.pi / (2.0 * gamma(1.0 + s) * math.sin(0.5 * math.pi * s))


def psi_mixed_order1(kind, a: float, b: float, alpha: float, d: int = 1) -> float:
    """int FG(a)(xi) FG(b)(xi) |xi|^(-alpha) dxi, closed form.

    Wave (d - 2 < alpha < d): expanding sin(a r) sin(b r) into cosines
    reduces the integral to cosine moments of order 2 + alpha - d.
    Heat: exp(-(a+b) r^2 / 2) integrates to a Gamma function.
    """
    if a < 0 or b < 0:
        raise ValueError("time gaps must be nonnegative")
    if a == 0 or b == 0:
        return 0.0 if _kind(kind) is PropagatorKind.WAVE else heat_lemma_closed(
            a + b, alpha, d
        )
    if _kind(kind) is PropagatorKind.HEAT:
        return heat_lemma_closed(a + b, alpha, d)
    s = 2.0 + alpha - d
    c = cosine_moment_constant(s)
    return 0.5 * sphere_area(d) * c * ((a + b) ** s - abs(a - b) ** s)


def wave_lemma_closed_center(t: float, alpha: float, d: int) -> float:
    """Closed form of the centered wave integral int sin^2(t r)/r^2 |r|^(-alpha)."""
    return psi_mixed_order1("wave", t, t, alpha, d)


def _profile_batch(kind: PropagatorKind, u: np.ndarray, r: np.ndarray) -> np.ndarray:
    """|FG(u)(r)|^2 for a batch of gaps; shape (len(u), len(r)).

    Wave: sin^2(u r)/r^2 with value u^2 at r = 0.  Heat: exp(-u r^2)
    (the squared transform, i.e. the norm-chain profile).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if kind is PropagatorKind.WAVE:
        safe = np.where(r > 0, r, 1.0)[None, :]
        out = (np.sin(u[:, None] * r[None, :]) / safe) ** 2
        if r[0] == 0.0:
            out[:, 0] = u * u
        zero_cols = np.where(r == 0.0)[0]
        for col in zero_cols:
            out[:, col] = u * u
        return out
    return np.exp(-u[:, None] * (r * r)[None, :])


class PsiChainGrid:
    """Grid plus singular-convolution weights for chain sweeps in d = 1.

    ``weights[c_index, j]`` approximates

        int_0^R [ |r - c|^(-alpha) + (r + c)^(-alpha) ] g(r) dr

    for g sampled at the nodes, using piecewise-quadratic product
    integration: on each pair of adjacent panels g is replaced by its
    Lagrange quadratic and the kernel moments are integrated exactly.  The
    kernel is the even folding of |.|^(-alpha), so chains over the full line
    reduce to the half line; the c = 0 row realizes the outermost level.
    """

    def __init__(
        self,
        alpha: float,
        t_max: float,
        R: float = 120.0,
        f_res: float = 8.0,
    ):
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"chain grids require 0 < alpha < 1, got {alpha}")
        self.alpha = alpha
        self.t_max = t_max
        self.R = R
        spacing = math.pi / (f_res * max(t_max, 1.0))
        fine = np.geomspace(spacing * 1e-3, spacing, 13)[:-1]
        coarse = np.arange(spacing, R + spacing, spacing)
        nodes = np.concatenate(([0.0], fine, coarse))
        if (len(nodes) - 1) % 2 == 1:  # quadratic rule needs an even panel count
            nodes = np.append(nodes, nodes[-1] + spacing)
        nodes[-1] = max(nodes[-1], R)
        self.nodes = nodes
        self._weights = self._build_weights()

    def _raw_moments(self, p: float, q: float, c: np.ndarray):
        """R_m = int_p^q r^m |r - c|^(-alpha) dr for m = 0, 1, 2 (vector in c)."""
        a = self.alpha

        def m0(x):
            z = x - c
            return np.sign(z) * np.abs(z) ** (1.0 - a) / (1.0 - a)

        def m1(x):
            z = x - c
            return np.abs(z) ** (2.0 - a) / (2.0 - a)

        def m2(x):
            z = x - c
            return np.sign(z) * np.abs(z) ** (3.0 - a) / (3.0 - a)

        M0 = m0(q) - m0(p)
        M1 = m1(q) - m1(p)
        M2 = m2(q) - m2(p)
        R0 = M0
        R1 = M1 + c * M0
        R2 = M2 + 2.0 * c * M1 + c * c * M0
        return R0, R1, R2

    def _build_weights(self) -> np.ndarray:
        nodes = self.nodes
        m = len(nodes)
        weights = np.zeros((m, m))
        cs = nodes
        for k in range(0, m - 2, 2):
            ra, rb, rc = nodes[k], nodes[k + 1], nodes[k + 2]
            # exact moments of the folded kernel over [ra, rc]
            R0p, R1p, R2p = self._raw_moments(ra, rc, cs)
            R0m, R1m, R2m = self._raw_moments(ra, rc, -cs)
            R0, R1, R2 = R0p + R0m, R1p + R1m, R2p + R2m
            for idx, (ri, rj, rk) in enumerate(
                ((ra, rb, rc), (rb, ra, rc), (rc, ra, rb))
            ):
                den = (ri - rj) * (ri - rk)
                w = (R2 - (rj + rk) * R1 + rj * rk * R0) / den
                weights[:, k + (0, 1, 2)[idx]] += w
        return weights

    def convolve(self, values: np.ndarray) -> np.ndarray:
        """Apply the singular convolution; last axis indexes the nodes."""
        return values @ self._weights.T

    def chain_diagonal(self, kind, gaps) -> np.ndarray | float:
        """Diagonal chain values for one gap vector or a batch.

        ``gaps`` has shape (n,) or (n_samples, n); gap 0 belongs to the
        outermost level (kernel centered at zero) and gap n-1 to the
        innermost.  Returns a scalar or a length-n_samples vector.
        """
        kind = _kind(kind)
        gaps = np.atleast_2d(np.asarray(gaps, dtype=float))
        n_samples, n = gaps.shape
        if n > MAX_CHAIN_ORDER:
            raise ValueError(f"chain order {n} exceeds {MAX_CHAIN_ORDER}")
        r = self.nodes
        phi = np.ones((n_samples, len(r)))
        for level in range(n - 1, 0, -1):
            phi = self.convolve(_profile_batch(kind, gaps[:, level], r) * phi)
        outer = _profile_batch(kind, gaps[:, 0], r) * phi
        result = self.convolve(outer)[:, 0]
        return result if result.size > 1 else float(result[0])


_GRID_CACHE: dict[tuple, PsiChainGrid] = {}


def get_chain_grid(alpha: float, t_max: float, R: float = 120.0) -> PsiChainGrid:
    key = (round(alpha, 12), round(max(t_max, 1.0), 6), round(R, 3))
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = PsiChainGrid(alpha, max(t_max, 1.0), R)
    return _GRID_CACHE[key]


def psi_tilde_diagonal(
    kind,
    sorted_times,
    t: float,
    alpha: float,
    d: int,
    q: QuadratureConfig | None = None,
) -> float:
    """Diagonal of the nested kernel-norm integral for ordered interior times.

    The gaps are the successive differences of the sorted times, closed by
    the horizon t.  Each level carries the squared propagator transform of
    its gap (for the wave this is exactly the lemma integrand; for the heat
    profile the squared transform doubles the time).  Order 1 uses the
    closed form in any dimension; the full nesting is available in d = 1 up
    to order 4 via the chain grid.
    """
    q = q or QuadratureConfig()
    times = np.asarray(sorted_times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("sorted_times must be a nonempty 1-d array")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if not (0.0 < times[0] and times[-1] < t):
        raise ValueError("times must lie strictly inside (0, t)")
    gaps = np.diff(np.append(times, t))
    n = gaps.size
    if n == 1:
        return psi_mixed_order1(kind, gaps[0], gaps[0], alpha, d)
    if d != 1:
        raise ValueError("full nesting beyond order 1 requires d = 1")
    grid = get_chain_grid(alpha, t_max=t)
    return float(grid.chain_diagonal(kind, gaps))
