"""Command-line orchestration: check -> solve -> certify -> report.

Subcommands: check, solve, oracle, converge, certify, sweep.  Every run
writes report.json (hypothesis verdicts, eigenvalues, residuals, fitted
rates, certificate constants, timings) plus CSV side files; SVG line plots
are optional.  Exit codes: 0 success, 1 invalid configuration, 2 numerical
failure, 3 hypothesis hard-fail under --require-hypotheses.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import harris, io_utils, spectral
from .grid import GridField, TruncatedBox
from .harris import CertificateUnavailable
from .model import SamplingPlan, build_model, check_hypotheses, derived_constants
from .semiflow import PropagatorConfig, get_propagator
from .spectral import DenseOracleSizeError

TASKS = ("check", "solve", "oracle", "converge", "certify", "sweep")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_HYPOTHESES = 3


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


class HypothesisHardFail(RuntimeError):
    def __init__(self, failures):
        super().__init__("hypothesis hard-fail: " + ", ".join(failures))
        self.failures = failures


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path, overrides) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be an object")
    config = copy.deepcopy(config)
    config.setdefault("seed", 0)
    config.setdefault("propagator", {})
    if overrides.get("seed") is not None:
        config["seed"] = int(overrides["seed"])
    if overrides.get("cells") is not None:
        config.setdefault("box", {})["cells_per_dim"] = int(overrides["cells"])
    if overrides.get("dt") is not None:
        config["propagator"]["dt"] = float(overrides["dt"])
    box_spec = config.get("box")
    if not isinstance(box_spec, dict):
        raise ConfigError("config needs a box: {half_width, cells_per_dim}")
    return config


def resolve(config):
    """Build (model, box, propagator config, plan) from a config mapping."""
    try:
        model = build_model(config)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc
    box_spec = config["box"]
    try:
        box = TruncatedBox(float(box_spec["half_width"]),
                           int(box_spec["cells_per_dim"]),
                           int(config.get("dimension", 1)))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid box config: {exc}") from exc
    prop_spec = dict(config.get("propagator", {}))
    steps = int(prop_spec.pop("steps_per_period", 0))
    dt = prop_spec.pop("dt", None)
    if dt is None:
        dt = model.period_T / (steps if steps else 128)
    try:
        prop_config = PropagatorConfig(dt=float(dt), **prop_spec)
        if abs(round(model.period_T / prop_config.dt) * prop_config.dt
               - model.period_T) > 1e-9 * model.period_T:
            raise ValueError("dt must divide the period")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid propagator config: {exc}") from exc
    plan = SamplingPlan(seed=int(config.get("seed", 0)))
    return model, box, prop_config, plan


# ---------------------------------------------------------------------------
# task implementations
# ---------------------------------------------------------------------------


def _timed(timings, name, fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    timings[name] = time.perf_counter() - t0
    return out


def _tolerances(config):
    tols = dict(config.get("tolerances", {}))
    return float(tols.get("power_tol", 1e-12)), int(tols.get("max_iter", 10_000))


def _hypothesis_block(model, box, plan, config, timings, strong=False):
    constants = _timed(timings, "constants", derived_constants, model, box, plan)
    report = _timed(timings, "hypotheses", check_hypotheses,
                    model, constants, box, plan, strong)
    return constants, report


def _solve_block(model, box, prop_config, config, timings):
    tol, max_iter = _tolerances(config)
    steps = int(round(model.period_T / prop_config.dt))
    ladder = sorted({max(8, steps // 2), steps, 2 * steps})
    result = _timed(timings, "solve", spectral.solve_floquet,
                    model, box, prop_config, tol, max_iter, tuple(ladder))
    sol = result.solution
    if not (sol.residual_f < 1e-6 and sol.residual_phi < 1e-6):
        raise NumericalFailure(
            f"power iteration residuals too large: {sol.residual_f:.3g}, "
            f"{sol.residual_phi:.3g}")
    return result


def _converge_block(S, solution, box, timings, n_periods=10, burn_in=3):
    # first-moment test field: excites the subdominant (odd) mode cleanly
    x = box.nodes
    vals = x[:, 0] * np.exp(-np.sum(x * x, axis=1))
    f_test = GridField(vals, box)
    return _timed(timings, "converge", spectral.convergence_rate,
                  S, solution, f_test, n_periods, burn_in)


def run_single(config, task, outdir: Path, require_hypotheses=False,
               svg=False) -> dict:
    """Execute one task; returns the report dict (also written to disk)."""
    timings = {}
    model, box, prop_config, plan = resolve(config)
    hashable = {k: v for k, v in config.items() if k not in ("out",)}
    report = {
        "task": task,
        "config_hash": io_utils.config_hash(hashable),
        "family": model.family_id,
        "dimension": model.dimension_d,
        "period": model.period_T,
        "seed": config.get("seed", 0),
        "box": {"half_width": box.half_width, "cells_per_dim": box.cells_per_dim},
        "propagator": {
            "dt": prop_config.dt,
            "steps_per_period": int(round(model.period_T / prop_config.dt)),
            "interpolation_order": prop_config.interpolation_order,
            "splitting": prop_config.splitting,
            "duhamel": prop_config.duhamel,
        },
    }

    strong = task == "certify" or bool(config.get("strong_hypotheses", False))
    constants, hyp = _hypothesis_block(model, box, plan, config, timings, strong)
    report["constants"] = constants.to_dict()
    report["hypotheses"] = hyp.to_dict()
    if require_hypotheses and not hyp.ok():
        report["timings"] = timings
        _write_outputs(outdir, report)
        raise HypothesisHardFail(hyp.failures())

    try:
        _run_task_body(config, task, outdir, report, timings,
                       model, box, prop_config, constants, svg)
    except (NumericalFailure, DenseOracleSizeError, CertificateUnavailable) as exc:
        # a report is always written; numerical failures are recorded in it
        report["error"] = str(exc)
        report["timings"] = timings
        _write_outputs(outdir, report)
        raise

    report["timings"] = timings
    _write_outputs(outdir, report)
    return report


def _run_task_body(config, task, outdir, report, timings, model, box,
                   prop_config, constants, svg):
    if task in ("solve", "converge", "certify"):
        result = _solve_block(model, box, prop_config, config, timings)
        sol = result.solution
        report["eigen"] = result.to_dict()
        S = spectral.PeriodOperator(get_propagator(model, box, prop_config))
        io_utils.write_field_csv(outdir / "eigen_f0.csv", sol.f0)
        io_utils.write_field_csv(outdir / "eigen_phi0.csv", sol.phi0)

        if task in ("converge", "certify"):
            conv = _converge_block(S, sol, box, timings)
            report["convergence"] = conv.to_dict()
            io_utils.write_decay_csv(outdir / "decay.csv", conv.decay)

        if task == "certify":
            try:
                sub = _timed(timings, "sub_eigen", harris.sub_eigen_certificate,
                             model, constants, S)
                report["sub_eigen"] = sub.to_dict()
            except CertificateUnavailable as exc:
                report["sub_eigen"] = {"unavailable": str(exc)}
            lyap = _timed(timings, "lyapunov", harris.lyapunov_pair,
                          model, constants, sol, S, 200, config.get("seed", 0))
            report["lyapunov"] = lyap.to_dict()
            cert = _timed(timings, "harris", harris.harris_certificate,
                          model, constants, sol, S, lyap,
                          report["convergence"]["zeta_observed"],
                          200, config.get("seed", 0))
            report["certificate"] = cert.to_dict()
            print(cert.summary_table())

        if svg:
            _write_svg(outdir, model, sol, report)

    elif task == "oracle":
        oracle = _timed(timings, "oracle", spectral.dense_oracle,
                        model, box, prop_config)
        report["oracle"] = oracle.to_dict()

    elif task != "check":
        raise ConfigError(f"unknown task {task!r}")


def _write_outputs(outdir: Path, report: dict):
    io_utils.write_report(outdir / "report.json", report)


def _write_svg(outdir, model, sol, report):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    box = sol.box
    if box.dimension != 1:
        return
    x = box.nodes_1d
    m = len(sol.times) - 1
    fig, axes = plt.subplots(1, 3 if "convergence" in report else 2,
                             figsize=(11, 3.2))
    for k in range(0, m + 1, max(1, m // 4)):
        axes[0].plot(x, sol.f_samples[k], label=f"t={sol.times[k]:.2f}")
        axes[1].plot(x, sol.phi_samples[k], label=f"t={sol.times[k]:.2f}")
    axes[0].set_title("density eigenfamily f_t")
    axes[1].set_title("dual eigenfamily phi_t")
    axes[0].legend(fontsize=6)
    if "convergence" in report:
        decay = [d for d in report["convergence"]["decay"]
                 if isinstance(d, (int, float)) and d > 0]
        axes[2].semilogy(range(1, len(decay) + 1), decay, "o-")
        axes[2].set_title("decay toward the eigenline")
        axes[2].set_xlabel("periods")
    fig.tight_layout()
    fig.savefig(outdir / "solution.svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _set_by_path(config, path, value):
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"sweep parameter path {path!r} not found")
        node = node[key]
    leaf = keys[-1]
    if leaf not in node or not isinstance(node[leaf], (int, float)):
        raise ConfigError(f"sweep parameter {path!r} must address a numeric field")
    node[leaf] = value


def _sweep_one(config, value, param, outdir, index):
    sub = copy.deepcopy(config)
    _set_by_path(sub, param, value)
    subdir = outdir / f"sweep_{index:03d}"
    subdir.mkdir(parents=True, exist_ok=True)
    row = {"value": value, "lambda_F": "", "rho_hat": "",
           "zeta_constructive": "", "zeta_observed": "", "exit": EXIT_OK}
    try:
        report = run_single(sub, "converge", subdir)
        row["lambda_F"] = report["eigen"]["lambda_F_extrapolated"]
        row["rho_hat"] = report["convergence"]["rho_hat"]
        row["zeta_observed"] = report["convergence"]["zeta_observed"]
    except (ConfigError,) as exc:
        print(f"sweep value {value}: {exc}", file=sys.stderr)
        row["exit"] = EXIT_CONFIG
        return row
    except (NumericalFailure, DenseOracleSizeError, CertificateUnavailable) as exc:
        print(f"sweep value {value}: {exc}", file=sys.stderr)
        row["exit"] = EXIT_NUMERICAL
        return row
    # certificate is best effort: absence is a reported outcome, not an error
    try:
        model, box, prop_config, plan = resolve(sub)
        constants = derived_constants(model, box, plan)
        S = spectral.PeriodOperator(get_propagator(model, box, prop_config))
        tol, max_iter = _tolerances(sub)
        fwd = spectral.power_iteration(S, tol=tol, max_iter=max_iter)
        dual = spectral.dual_power_iteration(S, tol=tol, max_iter=max_iter)
        sol = spectral.assemble_solution(S, fwd.vector, dual.vector, fwd.eigenvalue)
        lyap = harris.lyapunov_pair(model, constants, sol, S, 50, sub.get("seed", 0))
        cert = harris.harris_certificate(model, constants, sol, S, lyap,
                                         row["zeta_observed"], 50, sub.get("seed", 0))
        row["zeta_constructive"] = cert.zeta_constructive
    except CertificateUnavailable:
        pass
    return row


def run_sweep(config, param, values, outdir: Path) -> int:
    if not values:
        raise ConfigError("sweep needs a nonempty value list")
    with ThreadPoolExecutor(max_workers=min(4, len(values))) as pool:
        rows = list(pool.map(
            lambda iv: _sweep_one(config, iv[1], param, outdir, iv[0]),
            enumerate(values)))
    import csv as _csv

    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["value", "lambda_F", "rho_hat",
                    "zeta_constructive", "zeta_observed"])
        for row in rows:
            w.writerow([row["value"], row["lambda_F"], row["rho_hat"],
                        row["zeta_constructive"], row["zeta_observed"]])
    return max(row["exit"] for row in rows)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floquet",
        description="Floquet eigenvalue solver and contraction certifier for "
                    "periodic transport equations with integral source term")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default="floquet_out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--cells", type=int, default=None)
        p.add_argument("--require-hypotheses", action="store_true")
        p.add_argument("--svg", action="store_true")
        p.add_argument("--force", action="store_true",
                       help="allow writing into an existing output directory")
        if task == "sweep":
            p.add_argument("--param", required=True,
                           help="dotted path of a numeric config field")
            p.add_argument("--values", required=True,
                           help="JSON list of parameter values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, vars(args))
        outdir = Path(args.out)
        if outdir.exists() and not args.force and any(outdir.iterdir()):
            raise ConfigError(
                f"output directory {outdir} is not empty (use --force)")
        outdir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.task == "sweep":
            try:
                values = json.loads(args.values)
                assert isinstance(values, list)
            except (json.JSONDecodeError, AssertionError):
                raise ConfigError("--values must be a JSON list") from None
            return run_sweep(config, args.param, values, outdir)
        run_single(config, args.task, outdir,
                   require_hypotheses=args.require_hypotheses, svg=args.svg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisHardFail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESES
    except (NumericalFailure, DenseOracleSizeError, CertificateUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
