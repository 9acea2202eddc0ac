"""Finite-dimensional Gaussian model of the driving noise.

The noise is indexed by space-time lattice cells.  Its covariance couples a
fractional-Brownian temporal factor (Hurst index H > 1/2) with a Riesz-kernel
spatial factor |x - y|^{-(d-alpha)}, so the covariance matrix of the cell
indicators is the Kronecker product of a temporal Gram matrix and a spatial
Gram matrix.  Everything downstream (chaos algebra, Malliavin operators,
solution fields) consumes the :class:`CovarianceOperator` built here.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erf, gammaln

__all__ = [
    "LatticeSpec",
    "Cell",
    "CovarianceOperator",
    "NoiseSample",
    "rh_covariance",
    "rh_increment",
    "riesz_cell_integral",
    "build_covariance",
    "sample_noise",
    "sample_noise_array",
    "noise_chunks",
    "parse_key_value_config",
    "lattice_spec_from_config",
    "save_covariance",
    "load_covariance",
    "PSDError",
]

# Eigenvalues in [-PSD_RTOL * max_eig, 0) are clipped to zero; anything lower
# is treated as a modelling bug, not roundoff.
PSD_RTOL = 1e-10


class PSDError(ValueError):
    """Covariance failed the positive-semidefiniteness check."""


@dataclass(frozen=True)
class LatticeSpec:
    """Discretization of [0, T] x [-L, L]^d plus the model parameters.

    d : spatial dimension (1, 2 or 3)
    hurst : Hurst index of the temporal factor, in (1/2, 1)
    alpha : order of the spatial Riesz kernel, in (0, d)
    T : time horizon
    L : spatial half-width
    n_t : number of time cells
    n_x : number of cells per spatial axis
    """

    d: int
    hurst: float
    alpha: float
    T: float
    L: float
    n_t: int
    n_x: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if not 0.0 < self.alpha < self.d:
            raise ValueError(
                f"alpha must lie in (0, d) = (0, {self.d}), got {self.alpha}"
            )
        if self.n_t < 1 or self.n_x < 1:
            raise ValueError("n_t and n_x must be at least 1")
        if self.T <= 0 or self.L <= 0:
            raise ValueError("T and L must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n_x

    @property
    def n_space(self) -> int:
        return self.n_x**self.d

    @property
    def n_cells(self) -> int:
        return self.n_t * self.n_space

    def space_midpoint(self, space_index) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(space_index, dtype=float))
        return -self.L + (idx + 0.5) * self.dx

    def time_interval(self, time_index: int) -> tuple[float, float]:
        return time_index * self.dt, (time_index + 1) * self.dt

    def space_box(self, space_index) -> tuple[np.ndarray, np.ndarray]:
        idx = np.atleast_1d(np.asarray(space_index, dtype=float))
        lo = -self.L + idx * self.dx
        return lo, lo + self.dx

    def cells(self) -> list["Cell"]:
        """All cells in flat order: time index outer, space index inner."""
        space = [
            tuple(ix)
            for ix in np.ndindex(*(self.n_x,) * self.d)
        ]
        return [
            Cell(t, s) for t in range(self.n_t) for s in space
        ]

    def flat_index(self, cell: "Cell") -> int:
        flat_space = 0
        for ix in cell.space_index:
            flat_space = flat_space * self.n_x + ix
        return cell.time_index * self.n_space + flat_space

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "hurst": self.hurst,
            "alpha": self.alpha,
            "T": self.T,
            "L": self.L,
            "n_t": self.n_t,
            "n_x": self.n_x,
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class Cell:
    """One space-time lattice cell, addressed by integer indices."""

    time_index: int
    space_index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "space_index", tuple(self.space_index))
        if self.time_index < 0 or any(i < 0 for i in self.space_index):
            raise ValueError("cell indices must be nonnegative")


def rh_covariance(t: float, s: float, hurst: float) -> float:
    """Covariance of fractional Brownian motion with index ``hurst`` > 1/2.

    Equals H(2H-1) * int_0^t int_0^s |u-v|^(2H-2) du dv, evaluated in the
    closed form (t^(2H) + s^(2H) - |t-s|^(2H)) / 2.
    """
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (1/2, 1), got {hurst}")
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    two_h = 2.0 * hurst
    return 0.5 * (t**two_h + s**two_h - abs(t - s) ** two_h)


def rh_increment(a: float, b: float, c: float, e: float, hurst: float) -> float:
    """H(2H-1) * int_a^b int_c^e |u-v|^(2H-2) du dv by inclusion-exclusion."""
    return (
        rh_covariance(b, e, hurst)
        - rh_covariance(a, e, hurst)
        - rh_covariance(b, c, hurst)
        + rh_covariance(a, c, hurst)
    )


def _overlap_pieces(a: float, b: float, c: float, e: float):
    """Linear pieces of z -> length([a,b] ∩ [c+z, e+z]).

    Returns a list of (lo, hi, const, slope) with the overlap equal to
    const + slope * z on [lo, hi].  The overlap is a trapezoid supported on
    [a-e, b-c].
    """
    p = b - a
    q = e - c
    lo = a - e
    mid1 = min(a - c, b - e)
    mid2 = max(a - c, b - e)
    hi = b - c
    pieces = []
    if mid1 > lo:
        # rising edge: overlap = z - (a - e)
        pieces.append((lo, mid1, -(a - e), 1.0))
    if mid2 > mid1:
        pieces.append((mid1, mid2, min(p, q), 0.0))
    if hi > mid2:
        # falling edge: overlap = (b - c) - z
        pieces.append((mid2, hi, b - c, -1.0))
    return pieces


def _overlap_gauss_moment(pieces, s: float) -> float:
    """int w(z) exp(-s z^2) dz for piecewise-linear w given by ``pieces``."""
    rs = np.sqrt(s)
    total = 0.0
    for lo, hi, const, slope in pieces:
        total += const * np.sqrt(np.pi) / (2.0 * rs) * (erf(rs * hi) - erf(rs * lo))
        if slope != 0.0:
            total += slope * (-0.5 / s) * (np.exp(-s * hi * hi) - np.exp(-s * lo * lo))
    return total


def _riesz_singular_boxes(lo_a, hi_a, lo_b, hi_b, alpha: float, d: int) -> float:
    """Box-Riesz integral via the Gaussian representation of |z|^(-lambda).

    With lambda = d - alpha,

        |z|^(-lambda) = (1 / Gamma(lambda/2)) *
                        int_0^inf s^(lambda/2 - 1) exp(-s |z|^2) ds,

    the difference-coordinate reduction factorizes per axis into closed-form
    erf/Gaussian moments of the piecewise-linear overlap profiles, leaving a
    single smooth 1-d integral in s.  Accurate for overlapping and nearby
    cells in any dimension.
    """
    lam = d - alpha
    beta = 0.5 * lam
    pieces = [
        _overlap_pieces(lo_a[i], hi_a[i], lo_b[i], hi_b[i]) for i in range(d)
    ]

    def g(s: float) -> float:
        out = 1.0
        for pc in pieces:
            out *= _overlap_gauss_moment(pc, s)
        return out

    # s in (0, 1]: substitute s = u^(1/beta) so the weight becomes flat.
    def head(u: float) -> float:
        return g(u ** (1.0 / beta)) / beta

    # s in [1, inf): substitute s = 1/v; integrable endpoint at v = 0.
    def tail(v: float) -> float:
        return v ** (-beta - 1.0) * g(1.0 / v)

    val_head, _ = integrate.quad(head, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    val_tail, _ = integrate.quad(tail, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    return (val_head + val_tail) * np.exp(-gammaln(beta))


def riesz_cell_integral(cell_a, cell_b, alpha: float, d: int) -> float:
    """int_A int_B |x - y|^(-(d - alpha)) dx dy for axis-aligned boxes.

    ``cell_a`` and ``cell_b`` are (lo, hi) pairs of length-d coordinate
    arrays.  Exact antiderivative in d = 1; in higher dimensions a midpoint
    rule is used once the boxes are separated by more than twice their
    largest diameter, and the singular/nearby regime goes through a smooth
    one-dimensional reduction.
    """
    if not 0.0 < alpha < d:
        raise ValueError(f"alpha must lie in (0, d) = (0, {d}), got {alpha}")
    lo_a = np.atleast_1d(np.asarray(cell_a[0], dtype=float))
    hi_a = np.atleast_1d(np.asarray(cell_a[1], dtype=float))
    lo_b = np.atleast_1d(np.asarray(cell_b[0], dtype=float))
    hi_b = np.atleast_1d(np.asarray(cell_b[1], dtype=float))
    if not (len(lo_a) == len(hi_a) == len(lo_b) == len(hi_b) == d):
        raise ValueError("box coordinate arrays must have length d")
    if np.any(hi_a <= lo_a) or np.any(hi_b <= lo_b):
        raise ValueError("boxes must have positive volume")

    if d == 1:
        c = alpha * (alpha + 1.0)

        def phi(x, y):
            return -abs(x - y) ** (alpha + 1.0) / c

        return (
            phi(hi_a[0], hi_b[0])
            - phi(lo_a[0], hi_b[0])
            - phi(hi_a[0], lo_b[0])
            + phi(lo_a[0], lo_b[0])
        )

    mid_a = 0.5 * (lo_a + hi_a)
    mid_b = 0.5 * (lo_b + hi_b)
    diam = max(np.linalg.norm(hi_a - lo_a), np.linalg.norm(hi_b - lo_b))
    sep = np.linalg.norm(mid_a - mid_b)
    if sep > 2.0 * diam:
        vol_a = float(np.prod(hi_a - lo_a))
        vol_b = float(np.prod(hi_b - lo_b))
        return vol_a * vol_b * sep ** (-(d - alpha))
    return _riesz_singular_boxes(lo_a, hi_a, lo_b, hi_b, alpha, d)


@dataclass
class CovarianceOperator:
    """Dense symmetric PSD matrix of cell-indicator inner products.

    ``time_gram`` and ``space_gram`` are kept when the operator was assembled
    as their Kronecker product; eigen-decompositions then factor cheaply.
    """

    entries: np.ndarray
    cells: list[Cell]
    spec: LatticeSpec | None = None
    time_gram: np.ndarray | None = None
    space_gram: np.ndarray | None = None
    _factor: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.entries[i, j])

    def _eigh_clipped(self, mat: np.ndarray):
        vals, vecs = np.linalg.eigh(mat)
        eps = PSD_RTOL * max(vals[-1], 0.0)
        if vals[0] < -eps:
            raise PSDError(
                f"eigenvalue {vals[0]:.3e} below -{eps:.3e}; matrix is not PSD"
            )
        return np.clip(vals, 0.0, None), vecs

    def validate_psd(self) -> None:
        """Raise :class:`PSDError` unless all eigenvalues are >= -eps_psd."""
        if self.time_gram is not None and self.space_gram is not None:
            self._eigh_clipped(self.time_gram)
            self._eigh_clipped(self.space_gram)
        else:
            self._eigh_clipped(self.entries)

    def sampling_factor(self) -> np.ndarray:
        """Symmetric factor F with F F^T equal to the (clipped) matrix."""
        if self._factor is None:
            if self.time_gram is not None and self.space_gram is not None:
                vt, wt = self._eigh_clipped(self.time_gram)
                vs, ws = self._eigh_clipped(self.space_gram)
                ft = wt * np.sqrt(vt)
                fs = ws * np.sqrt(vs)
                self._factor = np.kron(ft, fs)
            else:
                vals, vecs = self._eigh_clipped(self.entries)
                self._factor = vecs * np.sqrt(vals)
        return self._factor


@dataclass(frozen=True)
class NoiseSample:
    """One draw of the cell-indexed Gaussian vector."""

    values: np.ndarray
    seed: tuple


def _space_gram(spec: LatticeSpec) -> np.ndarray:
    """Spatial Gram matrix; entries depend only on the cell index offset."""
    n = spec.n_x
    d = spec.d
    base_lo, base_hi = spec.space_box((0,) * d)
    cache: dict[tuple[int, ...], float] = {}
    for off in np.ndindex(*(n,) * d):
        lo_b = base_lo + np.asarray(off, dtype=float) * spec.dx
        hi_b = lo_b + spec.dx
        cache[tuple(off)] = riesz_cell_integral(
            (base_lo, base_hi), (lo_b, hi_b), spec.alpha, d
        )
    space_indices = [np.asarray(ix) for ix in np.ndindex(*(n,) * d)]
    m = len(space_indices)
    gram = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            off = tuple(np.abs(space_indices[i] - space_indices[j]))
            gram[i, j] = gram[j, i] = cache[off]
    return gram


def build_covariance(spec: LatticeSpec) -> CovarianceOperator:
    """Assemble the cell covariance as kron(temporal Gram, spatial Gram)."""
    n_t = spec.n_t
    tg = np.empty((n_t, n_t))
    for i in range(n_t):
        a, b = spec.time_interval(i)
        for j in range(i, n_t):
            c, e = spec.time_interval(j)
            tg[i, j] = tg[j, i] = rh_increment(a, b, c, e, spec.hurst)
    sg = _space_gram(spec)
    entries = np.kron(tg, sg)
    cov = CovarianceOperator(
        entries=entries,
        cells=spec.cells(),
        spec=spec,
        time_gram=tg,
        space_gram=sg,
    )
    cov.validate_psd()
    return cov


def noise_chunks(
    cov: CovarianceOperator, seed: int, count: int, chunk_size: int = 20000
):
    """Yield (start, draws) blocks of the noise sample stream.

    Each chunk draws from an independent stream seeded by (seed, chunk
    index), so the stream is deterministic for a fixed chunk plan regardless
    of scheduling, and consumers can process blocks without holding the full
    sample array.
    """
    factor = cov.sampling_factor()
    start = 0
    chunk_idx = 0
    while start < count:
        stop = min(start + chunk_size, count)
        rng = np.random.default_rng(np.random.SeedSequence((seed, chunk_idx)))
        z = rng.standard_normal((stop - start, cov.dim))
        yield start, z @ factor.T
        start = stop
        chunk_idx += 1


def sample_noise_array(
    cov: CovarianceOperator, seed: int, count: int, chunk_size: int = 20000
) -> np.ndarray:
    """(count, dim) array of i.i.d. centered Gaussian draws with covariance cov."""
    out = np.empty((count, cov.dim))
    for start, block in noise_chunks(cov, seed, count, chunk_size):
        out[start : start + block.shape[0]] = block
    return out


def sample_noise(
    cov: CovarianceOperator, seed: int, count: int, chunk_size: int = 20000
) -> list[NoiseSample]:
    """List of :class:`NoiseSample` draws; see :func:`sample_noise_array`."""
    values = sample_noise_array(cov, seed, count, chunk_size)
    return [
        NoiseSample(values=values[i], seed=(seed, i)) for i in range(count)
    ]


# ---------------------------------------------------------------------------
# configuration files and covariance export
# ---------------------------------------------------------------------------

def parse_key_value_config(text: str) -> dict:
    """Parse the ``key = value`` configuration grammar.

    One assignment per line.  ``#`` starts a comment.  Values are parsed as
    int, then float, then bool (``true``/``false``), falling back to a bare
    string.  Keys may be dotted (e.g. ``mc.samples``); the result is a flat
    dict keyed by the full dotted name.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        for caster in (int, float):
            try:
                out[key] = caster(value)
                break
            except ValueError:
                continue
        else:
            if value.lower() in ("true", "false"):
                out[key] = value.lower() == "true"
            else:
                out[key] = value
    return out


def lattice_spec_from_config(source) -> LatticeSpec:
    """Build a :class:`LatticeSpec` from a config file path or text."""
    text = source
    try:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, TypeError):
        pass
    cfg = parse_key_value_config(text)
    try:
        return LatticeSpec(
            d=int(cfg["d"]),
            hurst=float(cfg["hurst"]),
            alpha=float(cfg["alpha"]),
            T=float(cfg["T"]),
            L=float(cfg["L"]),
            n_t=int(cfg["n_t"]),
            n_x=int(cfg["n_x"]),
        )
    except KeyError as exc:
        raise ValueError(f"config missing required key {exc.args[0]!r}") from exc


_COV_MAGIC = b"WCOV"


def save_covariance(cov: CovarianceOperator, path) -> None:
    """Dense binary export: magic, JSON header, then float64 row-major data."""
    header = {
        "dim": cov.dim,
        "dtype": "float64",
        "spec_hash": cov.spec.content_hash() if cov.spec else None,
        "spec": cov.spec.as_dict() if cov.spec else None,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_COV_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(cov.entries, dtype=np.float64).tobytes())


def load_covariance(path) -> CovarianceOperator:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _COV_MAGIC:
            raise ValueError("not a covariance file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        dim = header["dim"]
        data = np.frombuffer(fh.read(dim * dim * 8), dtype=np.float64)
    entries = data.reshape(dim, dim).copy()
    spec = LatticeSpec(**header["spec"]) if header.get("spec") else None
    if spec is not None and header.get("spec_hash") != spec.content_hash():
        raise ValueError("spec hash mismatch in covariance file")
    cells = spec.cells() if spec is not None else []
    cov = CovarianceOperator(entries=entries, cells=cells, spec=spec)
    cov.validate_psd()
    return cov
