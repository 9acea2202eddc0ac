"""Structured records for numerical verification runs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the frequency-domain quadrature engines.

    cutoff : base frequency radius R0 (the effective radius also adapts to
        the evaluation point so that scaling identities hold exactly)
    panels : Gauss points per oscillation panel
    tail_mode : "analytic_bound" adds the closed-form tail bound to the
        value; "extended" doubles the radius until the tail bound is
        negligible relative to the bulk
    rel_tol : target relative accuracy of the bulk quadrature
    """

    cutoff: float = 60.0
    panels: int = 16
    tail_mode: str = "analytic_bound"
    rel_tol: float = 1e-7

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if not 0.0 < self.rel_tol <= 1e-2:
            raise ValueError("rel_tol must lie in (0, 1e-2]")
        if self.tail_mode not in ("analytic_bound", "extended"):
            raise ValueError(f"unknown tail_mode {self.tail_mode!r}")


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo controls: sample count, seed, importance exponent."""

    samples: int = 100_000
    seed: int = 0
    importance_beta: float | None = None

    def __post_init__(self):
        if self.samples < 1_000:
            raise ValueError("samples must be at least 1000")


@dataclass
class EstimateReport:
    """Outcome of one numerical verification.

    Invariant: ``passed`` implies ``value <= bound + error_estimate``.
    For equality-style checks ``value`` is the (relative) discrepancy and
    ``bound`` the tolerance.
    """

    value: float
    bound: float
    error_estimate: float
    passed: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed and not (
            self.value <= self.bound + self.error_estimate + 1e-300
        ):
            raise ValueError(
                "inconsistent report: passed but value exceeds bound + error"
            )

    @property
    def status(self) -> str:
        return str(self.meta.get("status", "pass" if self.passed else "fail"))

    def params_hash(self) -> str:
        payload = json.dumps(self.meta, sort_keys=True, default=str).encode()
        return hashlib.sha256(payload).hexdigest()[:12]

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "bound": self.bound,
                "error_estimate": self.error_estimate,
                "pass": self.passed,
                "meta": self.meta,
            },
            sort_keys=True,
            default=str,
        )

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="")
        writer.writerow(
            [
                f"{self.value:.12g}",
                f"{self.bound:.12g}",
                f"{self.error_estimate:.12g}",
                "pass" if self.passed else "fail",
                self.params_hash(),
            ]
        )
        return buf.getvalue()


CSV_HEADER = "value,bound,error_estimate,status,params_hash"
