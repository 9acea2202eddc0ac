"""Command-line entry point: verification suites and simulations.

Subcommands: ``verify-lemma`` (scaling identity and sup-constant sweeps),
``chaos`` (randomized exact-identity suites), ``simulate`` (field
construction, moment checks, Holder fits), ``series`` (moment-series terms
and scaling).  Every command reads an optional ``key = value`` config file,
writes JSON/CSV reports into the output directory under params-hash
filenames (append-only), and exits 0 on success, 1 on a numerical failure,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import estimates, solver
from .chaos_algebra import (
    DEGREE_CAP,
    SymmetricKernel,
    isometry_check,
    multiple_wiener_integral,
    symmetrize,
    wick_expectation,
)
from .lattice_gaussian import LatticeSpec, build_covariance, parse_key_value_config
from .malliavin_ops import (
    HP2ValuedFunctional,
    HPValuedFunctional,
    derivative,
    derivative_of_In,
    divergence,
    duality_check,
    hilbert_energy_check,
)
from .reports import CSV_HEADER, EstimateReport, MCConfig, QuadratureConfig

DEFAULTS = {
    "d": 1,
    "hurst": 0.75,
    "alpha": 0.5,
    "T": 1.0,
    "L": 0.5,
    "n_t": 3,
    "n_x": 2,
    "chaos.max_order": 3,
    "chaos.trials": 40,
    "mc.samples": 20_000,
    "quad.cutoff": 60.0,
    "quad.panels": 16,
    "quad.rel_tol": 1e-7,
    "sim.n_t": 32,
    "sim.n_x": 32,
    "sim.L": 0.5,
    "sim.truncation": 2,
    "sim.samples": 100_000,
    "sim.holder_samples": 4000,
    "series.N": 3,
    "series.t": 1.0,
}


@dataclass
class RunConfig:
    """Validated bundle of command parameters."""

    command: str
    kind: str
    seed: int
    out: str
    threads: int
    values: dict = field(default_factory=dict)

    def get(self, key):
        return self.values.get(key, DEFAULTS.get(key))

    def params(self) -> estimates.ModelParams:
        return estimates.ModelParams(
            d=int(self.get("d")),
            alpha=float(self.get("alpha")),
            hurst=float(self.get("hurst")),
        )

    def lattice_spec(self) -> LatticeSpec:
        return LatticeSpec(
            d=int(self.get("d")),
            hurst=float(self.get("hurst")),
            alpha=float(self.get("alpha")),
            T=float(self.get("T")),
            L=float(self.get("L")),
            n_t=int(self.get("n_t")),
            n_x=int(self.get("n_x")),
        )

    def quad(self) -> QuadratureConfig:
        return QuadratureConfig(
            cutoff=float(self.get("quad.cutoff")),
            panels=int(self.get("quad.panels")),
            rel_tol=float(self.get("quad.rel_tol")),
        )

    def mc(self, samples_key: str = "mc.samples") -> MCConfig:
        return MCConfig(samples=int(self.get(samples_key)), seed=self.seed)


def _write_reports(cfg: RunConfig, reports: dict) -> None:
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    rows = [CSV_HEADER]
    for name, rep in reports.items():
        stem = f"{cfg.command}-{name}-{rep.params_hash()}"
        json_path = os.path.join(out_dir, stem + ".json")
        if not os.path.exists(json_path):  # append-only per run directory
            with open(json_path, "w", encoding="utf-8") as fh:
                fh.write(rep.to_json() + "\n")
        rows.append(rep.to_csv_row())
    combined = "\n".join(rows) + "\n"
    digest = __import__("hashlib").sha256(combined.encode()).hexdigest()[:12]
    csv_path = os.path.join(out_dir, f"{cfg.command}-{digest}.csv")
    if not os.path.exists(csv_path):
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(combined)


def _print_reports(reports: dict) -> None:
    for name, rep in reports.items():
        status = rep.status.upper()
        print(f"[{status:8s}] {name}: value={rep.value:.6g} bound={rep.bound:.6g}")


def _scaling_report(kind: str, params, q: QuadratureConfig) -> EstimateReport:
    """Scaling identity of the central integral over a (t, eta) grid."""
    d, alpha = params.d, params.alpha
    if kind == "wave":
        expo = alpha - d + 2.0
    else:
        expo = -(d - alpha) / 2.0
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        for e in (0.0, 0.5, 1.0, 5.0, 20.0):
            eta = [e] + [0.0] * (d - 1)
            lhs = estimates.lemma_integral(kind, t, eta, alpha, d, q)
            scale = t if kind == "wave" else math.sqrt(t)
            eta2 = [e * scale] + [0.0] * (d - 1)
            rhs = t**expo * estimates.lemma_integral(kind, 1.0, eta2, alpha, d, q)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return EstimateReport(
        value=worst,
        bound=1e-6,
        error_estimate=0.0,
        passed=worst <= 1e-6,
        meta={"check": "scaling", "kind": kind, "alpha": alpha, "d": d,
              "exponent": expo},
    )


def cmd_verify_lemma(cfg: RunConfig) -> dict:
    params = cfg.params()
    if cfg.kind == "wave" and not params.alpha > params.d - 2.0:
        raise ValueError(
            f"wave admissibility requires alpha > d - 2, got alpha={params.alpha}"
        )
    q = cfg.quad()
    reports = {"scaling": _scaling_report(cfg.kind, params, q)}
    if params.d == 1:
        grid = np.linspace(0.0, 100.0, 201)
    else:
        grid = np.linspace(0.0, 20.0, 41)
    reports["sup_constant"] = estimates.lemma_sup_constant(
        cfg.kind, params.alpha, params.d, grid, q
    )
    beta = 0.5 * ((params.d - params.alpha) / 2.0 + 1.0)
    if (params.d - params.alpha) / 2.0 < beta < 1.0:
        reports["uniform_beta"] = estimates.uniform_beta_integral(
            params.alpha, params.d, beta, np.linspace(0.0, 20.0, 21), q
        )
    return reports


def _random_kernel(rng, order: int, n_cells: int) -> SymmetricKernel:
    raw = {}
    for _ in range(max(2, n_cells // 2)):
        tup = tuple(rng.choice(n_cells, size=order, replace=False))
        raw[tup] = float(rng.normal())
    return symmetrize(raw, order, on_diagonal="drop")


def _random_poly(rng, degree: int, n_cells: int):
    from .chaos_algebra import PolynomialFunctional

    terms = {(): float(rng.normal())}
    for _ in range(4):
        k = int(rng.integers(1, degree + 1))
        mono = tuple(sorted(rng.integers(0, n_cells, size=k).tolist()))
        terms[mono] = float(rng.normal())
    return PolynomialFunctional(terms)


def cmd_chaos(cfg: RunConfig) -> dict:
    max_order = int(cfg.get("chaos.max_order"))
    if not 1 <= max_order <= 3:
        raise ValueError(f"chaos.max_order must lie in [1, 3], got {max_order}")
    if 4 * max_order > DEGREE_CAP:
        raise ValueError("requested orders exceed the pairing degree cap")
    spec = cfg.lattice_spec()
    cov = build_covariance(spec)
    rng = np.random.default_rng(cfg.seed)
    n_cells = cov.dim
    trials = int(cfg.get("chaos.trials"))

    worst_iso = 0.0
    worst_orth = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, max_order + 1))
        f = _random_kernel(rng, n, n_cells)
        g = _random_kernel(rng, n, n_cells)
        worst_iso = max(worst_iso, isometry_check(f, g, cov).value)
        m = int(rng.integers(1, max_order + 1))
        if m != n:
            lhs = wick_expectation(
                multiple_wiener_integral(f, cov)
                * multiple_wiener_integral(_random_kernel(rng, m, n_cells), cov),
                cov,
            )
            worst_orth = max(worst_orth, abs(lhs))

    worst_dual = 0.0
    for _ in range(trials):
        F = _random_poly(rng, 3, n_cells)
        u = HPValuedFunctional(
            {int(c): _random_poly(rng, 2, n_cells) for c in rng.choice(n_cells, 3)}
        )
        rep = duality_check(F, u, cov)
        worst_dual = max(worst_dual, rep.value / (1.0 + abs(rep.meta["lhs"])))

    worst_deriv = 0.0
    worst_shift = 0.0
    for n in range(1, max_order + 1):
        f = _random_kernel(rng, n, n_cells)
        direct = derivative(multiple_wiener_integral(f, cov))
        chaos_form = derivative_of_In(f, cov)
        worst_deriv = max(worst_deriv, direct.max_coeff_diff(chaos_form))
        # the slice field of a symmetric order-n kernel integrates back to I_n
        u = HPValuedFunctional(
            {
                c: multiple_wiener_integral(f.slice_last(c), cov)
                for c in sorted(f.cells())
            }
        )
        shifted = divergence(u, cov)
        target = multiple_wiener_integral(f, cov)
        worst_shift = max(worst_shift, shifted.max_coeff_diff(target))

    worst_energy_violation = 0.0
    for _ in range(max(trials // 2, 10)):
        U = HP2ValuedFunctional(
            {
                (int(rng.integers(n_cells)), int(rng.integers(n_cells))): _random_poly(
                    rng, 2, n_cells
                )
                for _ in range(3)
            }
        )
        rep = hilbert_energy_check(U, cov)
        worst_energy_violation = max(
            worst_energy_violation, rep.value - rep.bound if not rep.passed else 0.0
        )

    def eq_report(name, worst, tol=1e-10):
        return EstimateReport(
            value=worst,
            bound=tol,
            error_estimate=0.0,
            passed=worst <= tol,
            meta={"check": name, "trials": trials, "seed": cfg.seed},
        )

    return {
        "isometry": eq_report("isometry", worst_iso),
        "orthogonality": eq_report("orthogonality", worst_orth),
        "duality": eq_report("duality", worst_dual),
        "derivative_rule": eq_report("derivative_rule", worst_deriv),
        "divergence_shift": eq_report("divergence_shift", worst_shift),
        "energy_inequality": eq_report("energy_inequality", worst_energy_violation),
    }


def cmd_simulate(cfg: RunConfig, malliavin: bool = False) -> dict:
    spec = LatticeSpec(
        d=int(cfg.get("d")),
        hurst=float(cfg.get("hurst")),
        alpha=float(cfg.get("alpha")),
        T=float(cfg.get("T")),
        L=float(cfg.get("sim.L")),
        n_t=int(cfg.get("sim.n_t")),
        n_x=int(cfg.get("sim.n_x")),
    )
    if spec.d > 2:
        raise ValueError("simulation requires d <= 2")
    N = int(cfg.get("sim.truncation"))
    if not 0 <= N <= solver.MAX_TRUNCATION:
        raise ValueError(f"sim.truncation must lie in [0, {solver.MAX_TRUNCATION}]")
    cov = build_covariance(spec)
    reports: dict[str, EstimateReport] = {}

    # Picard / chaos identity on a reduced lattice (exact, polynomial)
    small = LatticeSpec(
        d=spec.d, hurst=spec.hurst, alpha=spec.alpha, T=spec.T, L=spec.L,
        n_t=min(spec.n_t, 3), n_x=min(spec.n_x, 3),
    )
    small_cov = build_covariance(small)
    x_mid = np.zeros(spec.d)
    diff = 0.0
    for n in range(min(N, 2) + 1):
        chaos_poly = solver.chaos_truncation(small, small.T, x_mid, n, small_cov, cfg.kind)
        picard_poly = solver.picard_iterate(small, small.T, x_mid, n, small_cov, cfg.kind)
        diff = max(diff, chaos_poly.max_coeff_diff(picard_poly))
    reports["picard_identity"] = EstimateReport(
        value=diff, bound=1e-10, error_estimate=0.0, passed=diff <= 1e-10,
        meta={"check": "picard_identity", "N": min(N, 2)},
    )

    # moment checks at three points, streaming over noise chunks
    from .lattice_gaussian import noise_chunks
    from .propagators import discretize_fn

    n_samples = int(cfg.get("sim.samples"))
    depth = min(N, 2)
    points = [
        (spec.T, np.zeros(spec.d)),
        (spec.T / 2.0, np.zeros(spec.d)),
        (spec.T, spec.space_midpoint((spec.n_x // 4,) * spec.d)),
    ]
    exact = []
    gvecs = []
    amats = []
    for t, x in points:
        kernels = [discretize_fn(cfg.kind, spec, t, x, n) for n in range(1, depth + 1)]
        sums = solver.truncation_norm_sums(
            spec, t, x, depth, cov, cfg.kind, kernels=kernels
        )
        exact.append(sum(sums))
        gvecs.append(solver._kernel_vector(kernels[0], cov.dim))
        amats.append(
            solver._kernel_matrix(kernels[1], cov.dim) if depth >= 2 else None
        )
    acc = np.zeros((len(points), 4))  # sums of u, u^2, u^4, count
    for _, draws in noise_chunks(cov, cfg.seed, n_samples, chunk_size=10_000):
        for i in range(len(points)):
            vals = 1.0 + draws @ gvecs[i]
            if amats[i] is not None:
                vals = vals + np.einsum("si,ij,sj->s", draws, amats[i], draws) - float(
                    np.sum(amats[i] * cov.entries)
                )
            acc[i, 0] += vals.sum()
            acc[i, 1] += (vals**2).sum()
            acc[i, 2] += (vals**4).sum()
            acc[i, 3] += vals.shape[0]
    worst_sigma = 0.0
    for i in range(len(points)):
        count = acc[i, 3]
        mean = acc[i, 0] / count
        m2 = acc[i, 1] / count
        m4 = acc[i, 2] / count
        se_mean = math.sqrt(max(m2 - mean * mean, 0.0) / count)
        se_m2 = math.sqrt(max(m4 - m2 * m2, 0.0) / count)
        worst_sigma = max(worst_sigma, abs(mean - 1.0) / max(se_mean, 1e-300))
        worst_sigma = max(worst_sigma, abs(m2 - exact[i]) / max(se_m2, 1e-300))
    reports["moments"] = EstimateReport(
        value=worst_sigma, bound=3.0, error_estimate=0.0, passed=worst_sigma <= 3.0,
        meta={"check": "moments", "samples": n_samples,
              "exact": [float(v) for v in exact]},
    )

    # Holder fits on the depth-1 field
    holder_mc = MCConfig(samples=int(cfg.get("sim.holder_samples")), seed=cfg.seed)
    field_sample = solver.sample_field(spec, min(N, 1), cov, holder_mc, cfg.kind)
    reports["holder_time"] = solver.holder_fit(field_sample, "time")
    reports["holder_space"] = solver.holder_fit(field_sample, "space")

    os.makedirs(cfg.out, exist_ok=True)
    solver.save_field(field_sample, os.path.join(cfg.out, "field.bin"))
    with open(os.path.join(cfg.out, "field_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(solver.field_summary_csv(field_sample))

    if malliavin:
        reports["derivative_equation"] = solver.derivative_equation_check(
            small, small.T, np.zeros(spec.d), min(max(N, 1), 2), small_cov, cfg.kind
        )
    return reports


def cmd_series(cfg: RunConfig) -> dict:
    params = cfg.params()
    t = float(cfg.get("series.t"))
    N = int(cfg.get("series.N"))
    if N > 3:
        raise ValueError("series.N must be at most 3")
    mc = cfg.mc()
    q = cfg.quad()
    reports: dict[str, EstimateReport] = {}
    reports["series_S"] = estimates.series_S(cfg.kind, t, params, N, mc, q)

    r1 = estimates.alpha_tilde_mc(cfg.kind, 1, t, params, mc, q)
    r2 = estimates.alpha_tilde_mc(cfg.kind, 1, 2.0 * t, params, mc, q)
    if cfg.kind == "wave":
        target = 2.0 ** (2.0 * params.hurst + params.alpha - params.d + 2.0)
    else:
        target = 2.0 ** (2.0 * params.hurst - (params.d - params.alpha) / 2.0)
    ratio = r2.value / r1.value
    se = ratio * math.hypot(
        r1.error_estimate / r1.value, r2.error_estimate / r2.value
    )
    reports["scaling_ratio"] = EstimateReport(
        value=abs(ratio - target), bound=3.0 * se, error_estimate=se,
        passed=abs(ratio - target) <= 3.0 * se,
        meta={"check": "alpha1_scaling", "ratio": ratio, "target": target},
    )

    from .malliavin_ops import sobolev_norm_series

    reports["sobolev_k2"] = sobolev_norm_series(
        t, 2, params, N, mc, q, kind=cfg.kind
    )
    return reports


COMMANDS = {
    "verify-lemma": cmd_verify_lemma,
    "chaos": cmd_chaos,
    "simulate": cmd_simulate,
    "series": cmd_series,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavechaos",
        description="verification suites and simulations on the noise lattice",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out", default="runs")
        p.add_argument("--kind", choices=("wave", "heat"), default="wave")
        p.add_argument("--threads", type=int, default=1)
        if name == "simulate":
            p.add_argument(
                "--malliavin", action="store_true",
                help="also check the derivative integral equation",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                values = parse_key_value_config(fh.read())
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    cfg = RunConfig(
        command=args.command,
        kind=args.kind,
        seed=args.seed,
        out=args.out,
        threads=args.threads,
        values=values,
    )
    try:
        if args.command == "simulate":
            reports = cmd_simulate(cfg, malliavin=args.malliavin)
        else:
            reports = COMMANDS[args.command](cfg)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    _write_reports(cfg, reports)
    _print_reports(reports)
    return 0 if all(r.passed for r in reports.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
