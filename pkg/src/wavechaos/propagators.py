"""Fundamental solutions of the wave and heat equations, and chaos kernels.

Frequency side: the wave propagator has transform sin(t|xi|)/|xi| and the
heat propagator exp(-t|xi|^2 / 2).  Physical side: closed forms exist for
d <= 2, which is all the lattice solver needs; the frequency-side formulas
cover every dimension for the estimate engines.  The order-n chaos kernel of
the solution is a time-ordered product of propagator factors, discretized
here at cell midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .chaos_algebra import SymmetricKernel, symmetrize
from .lattice_gaussian import LatticeSpec

__all__ = [
    "PropagatorKind",
    "OrderedTimes",
    "fourier_G",
    "fourier_G_radial",
    "fourier_fn",
    "fourier_gt_sym",
    "green_physical",
    "midpoint_green",
    "discretize_fn",
]


class PropagatorKind(str, Enum):
    WAVE = "wave"
    HEAT = "heat"


def _kind(kind) -> PropagatorKind:
    if isinstance(kind, PropagatorKind):
        return kind
    return PropagatorKind(str(kind).lower())


@dataclass(frozen=True)
class OrderedTimes:
    """Strictly increasing interior times 0 < t_1 < ... < t_n < t."""

    t: float
    times: tuple

    def __post_init__(self):
        times = tuple(float(s) for s in self.times)
        object.__setattr__(self, "times", times)
        if self.t <= 0:
            raise ValueError("horizon t must be positive")
        if not times:
            raise ValueError("at least one interior time required")
        prev = 0.0
        for s in times:
            if not prev < s:
                raise ValueError(f"times must be strictly increasing, got {times}")
            prev = s
        if not times[-1] < self.t:
            raise ValueError(f"times must stay below the horizon {self.t}")

    @property
    def n(self) -> int:
        return len(self.times)

    def gaps(self) -> np.ndarray:
        """Successive gaps (t_2 - t_1, ..., t - t_n)."""
        ext = np.append(self.times, self.t)
        return np.diff(ext)


def fourier_G_radial(kind, t: float, r) -> np.ndarray:
    """Propagator transform as a function of |xi|; vectorized in r.

    wave: sin(t r) / r with the removable value t at r = 0;
    heat: exp(-t r^2 / 2).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    r = np.asarray(r, dtype=float)
    if _kind(kind) is PropagatorKind.WAVE:
        out = np.where(r > 0, np.sin(t * r) / np.where(r > 0, r, 1.0), t)
        return out
    return np.exp(-0.5 * t * r * r)


def fourier_G(kind, t: float, xi) -> float:
    """Propagator transform at a frequency vector."""
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(xi, dtype=float))))
    return float(fourier_G_radial(kind, t, r))


def fourier_fn(kind, times: OrderedTimes, x, xi_list) -> complex:
    """Transform of the order-n chaos kernel at frequencies (xi_1..xi_n):

    exp(-i (xi_1+...+xi_n) . x) * prod_j conj(FG(t_{j+1} - t_j)(xi_1+...+xi_j))

    with t_{n+1} equal to the horizon.  Modulus bounded by C_T^n.
    """
    xi_arr = np.atleast_2d(np.asarray(xi_list, dtype=float))
    if xi_arr.shape[0] != times.n:
        raise ValueError(
            f"expected {times.n} frequency vectors, got {xi_arr.shape[0]}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gaps = times.gaps()
    acc = np.zeros_like(xi_arr[0])
    value = complex(1.0, 0.0)
    for j in range(times.n):
        acc = acc + xi_arr[j]
        value *= np.conj(fourier_G(kind, gaps[j], acc))
    phase = np.exp(-1j * float(np.dot(acc, x)))
    return complex(phase * value)


def fourier_gt_sym(kind, t: float, times, x, xi_list) -> complex:
    """Transform of the symmetrized kernel rescaled by n! at unordered times.

    Only the ordering indicator matching the sorted times survives, so this
    equals :func:`fourier_fn` after sorting the times and accumulating the
    frequencies in the matching order.  Symmetric under simultaneous
    permutation of (times, xi_list).
    """
    times_arr = np.asarray(times, dtype=float)
    xi_arr = np.atleast_2d(np.asarray(xi_list, dtype=float))
    if len(set(times_arr.tolist())) != times_arr.size:
        raise ValueError("times must be pairwise distinct")
    order = np.argsort(times_arr)
    sorted_times = OrderedTimes(t, tuple(times_arr[order]))
    return fourier_fn(kind, sorted_times, x, xi_arr[order])


def green_physical(kind, d: int, t: float, x) -> float:
    """Fundamental solution in physical space, d in {1, 2}.

    wave, d=1: half the light-cone indicator; wave, d=2:
    1/(2 pi sqrt(t^2 - |x|^2)) inside the cone.  heat: Gaussian density with
    variance t per axis.
    """
    if d not in (1, 2):
        raise ValueError("green_physical supports d in {1, 2} only")
    if t <= 0:
        raise ValueError("t must be positive")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    if _kind(kind) is PropagatorKind.WAVE:
        if d == 1:
            return 0.5 if r <= t else 0.0
        if r >= t:
            return 0.0
        return 1.0 / (2.0 * math.pi * math.sqrt(t * t - r * r))
    return math.exp(-0.5 * r * r / t) / (2.0 * math.pi * t) ** (d / 2.0)


def _green_on_cell(kind, d: int, gap: float, dx: np.ndarray, half_diag: float) -> float:
    """Midpoint propagator value with light-cone clipping in d = 2.

    Cells straddling the cone are evaluated at a radius pulled inside it,
    which keeps the inverse square root finite; first-order accurate.
    """
    if gap <= 0:
        return 0.0
    r = float(np.linalg.norm(dx))
    if _kind(kind) is PropagatorKind.WAVE and d == 2:
        if r >= gap:
            return 0.0
        r_eff = min(r, max(gap - half_diag, 0.5 * gap))
        return 1.0 / (2.0 * math.pi * math.sqrt(gap * gap - r_eff * r_eff))
    return green_physical(kind, d, gap, dx)


def midpoint_green(kind, spec: LatticeSpec, t: float, x, cell) -> float:
    """Propagator factor from a cell midpoint to the point (t, x).

    Zero unless the cell's time interval lies fully before t.  This is the
    shared evaluation atom of the chaos kernels and the Picard integrands.
    """
    if (cell.time_index + 1) * spec.dt > t + 1e-12:
        return 0.0
    gap = t - (cell.time_index + 0.5) * spec.dt
    dx = np.atleast_1d(np.asarray(x, dtype=float)) - spec.space_midpoint(
        cell.space_index
    )
    half_diag = 0.5 * spec.dx * math.sqrt(spec.d)
    return _green_on_cell(kind, spec.d, gap, dx, half_diag)


def discretize_fn(kind, spec: LatticeSpec, t: float, x, n: int) -> SymmetricKernel:
    """Order-n chaos kernel of the solution at (t, x), on the lattice.

    The raw coefficient on a tuple of cells with strictly increasing time
    indices is the product of midpoint propagator values along the chain
    ending at (t, x); tuples with any coincident time index vanish.  Only
    cells whose time interval lies fully before t contribute.  Cell measure
    is carried by the covariance operator, not by the kernel.
    """
    if spec.d > 2:
        raise ValueError("physical-space kernels require d <= 2")
    if n < 1:
        raise ValueError("kernel order must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dt = spec.dt
    half_diag = 0.5 * spec.dx * math.sqrt(spec.d)
    # cells fully before t, grouped by time level
    max_level = int(np.floor(t / dt + 1e-12))
    max_level = min(max_level, spec.n_t)
    if max_level < n:
        return SymmetricKernel(n, {})
    cells = spec.cells()
    by_level: dict[int, list[int]] = {}
    for idx, cell in enumerate(cells):
        if cell.time_index < max_level:
            by_level.setdefault(cell.time_index, []).append(idx)
    mids_t = {idx: (cells[idx].time_index + 0.5) * dt for lvl in by_level for idx in by_level[lvl]}
    mids_x = {
        idx: spec.space_midpoint(cells[idx].space_index)
        for lvl in by_level
        for idx in by_level[lvl]
    }

    raw: dict[tuple[int, ...], float] = {}

    def extend(chain: tuple[int, ...], level: int, partial: float):
        if partial == 0.0:
            return
        if len(chain) == n:
            # final factor connects the last cell to (t, x)
            last = chain[-1]
            g = _green_on_cell(
                kind, spec.d, t - mids_t[last], x - mids_x[last], half_diag
            )
            if g != 0.0:
                raw[chain] = partial * g
            return
        remaining = n - len(chain)
        for lvl in range(level, max_level - remaining + 1):
            for idx in by_level.get(lvl, []):
                if chain:
                    prev = chain[-1]
                    g = _green_on_cell(
                        kind,
                        spec.d,
                        mids_t[idx] - mids_t[prev],
                        mids_x[idx] - mids_x[prev],
                        half_diag,
                    )
                else:
                    g = 1.0
                extend(chain + (idx,), lvl + 1, partial * g)

    extend((), 0, 1.0)
    return symmetrize(raw, n, on_diagonal="reject")
