"""Principal eigenvalue machinery on the period map.

Forward/dual power iteration produce the Perron triple (Lambda0, f0, phi0)
of the one-period operator; the Floquet exponent is log(Lambda0)/T and the
periodic eigenfamilies are obtained by propagating f0 forward and phi0
backward through one period with the Floquet rescaling.  A dense
eigendecomposition of the assembled period matrix serves as the oracle for
eigenvalue agreement, simplicity, peripheral count, and the spectral gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .grid import DualGridField, GridField, TruncatedBox
from .semiflow import Propagator, PropagatorConfig, default_config, get_propagator

__all__ = [
    "PeriodOperator",
    "PowerResult",
    "EigenSolution",
    "SpectrumReport",
    "ConvergenceReport",
    "FloquetResult",
    "DenseOracleSizeError",
    "period_map",
    "power_iteration",
    "dual_power_iteration",
    "assemble_solution",
    "dense_oracle",
    "convergence_rate",
    "solve_floquet",
]

DENSE_ORACLE_MAX_NODES = 4096


class DenseOracleSizeError(RuntimeError):
    """Raised when a dense eigensolve is requested beyond the size guard."""


class PeriodOperator:
    """Reusable handle applying S = S_{T,0} and its exact transpose."""

    def __init__(self, propagator: Propagator):
        self.propagator = propagator
        self.box = propagator.box
        self.period = propagator.model.period_T
        self._matrix = None

    def apply_values(self, values) -> np.ndarray:
        return self.propagator.evolve_values(values, 0.0, self.period)

    def apply_dual_values(self, values) -> np.ndarray:
        return self.propagator.evolve_dual_values(values, self.period, 0.0)

    def norm_l1(self, values) -> float:
        return self.box.cell_volume * float(np.sum(np.abs(values)))

    def matrix(self) -> np.ndarray:
        if self.box.num_nodes > DENSE_ORACLE_MAX_NODES:
            raise DenseOracleSizeError(
                f"dense period matrix needs {self.box.num_nodes} nodes; "
                f"the guard allows at most {DENSE_ORACLE_MAX_NODES}")
        if self._matrix is None:
            self._matrix = self.propagator.period_matrix()
        return self._matrix


def period_map(model, box: TruncatedBox, config: PropagatorConfig = None) -> PeriodOperator:
    if config is None:
        config = default_config(model)
    return PeriodOperator(get_propagator(model, box, config))


@dataclass
class PowerResult:
    eigenvalue: float
    vector: np.ndarray
    iterations: int
    last_diff: float
    residual: float
    converged: bool


def power_iteration(S: PeriodOperator, f_init=None, tol=1e-12,
                    max_iter=10_000) -> PowerResult:
    """Perron pair of S by plain power iteration in the L1 geometry.

    Iterates f <- Sf / ||Sf||_1 from a strictly positive start and stops
    when successive normalized iterates differ by less than tol in L1.
    """
    if f_init is None:
        f = np.full(S.box.num_nodes, 1.0)
    else:
        f = np.asarray(f_init.values if hasattr(f_init, "values") else f_init,
                       dtype=float).copy()
    if np.any(f < 0) or not np.any(f > 0):
        raise ValueError("power iteration needs a nonnegative, nonzero start")
    f = f / S.norm_l1(f)
    lam = 0.0
    diff = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = S.apply_values(f)
        lam = S.norm_l1(g)
        if lam == 0.0:
            raise RuntimeError("period map sent the iterate to zero; "
                               "the model violates positivity")
        g /= lam
        diff = S.norm_l1(g - f)
        f = g
        if diff < tol:
            converged = True
            break
    residual = S.norm_l1(S.apply_values(f) - lam * f) / S.norm_l1(f)
    return PowerResult(lam, f, it, diff, residual, converged)


def dual_power_iteration(S: PeriodOperator, phi_init=None, tol=1e-12,
                         max_iter=10_000) -> PowerResult:
    """Same scheme on the transpose, normalized in the sup norm."""
    if phi_init is None:
        phi = np.full(S.box.num_nodes, 1.0)
    else:
        phi = np.asarray(phi_init.values if hasattr(phi_init, "values") else phi_init,
                         dtype=float).copy()
    if np.any(phi < 0) or not np.any(phi > 0):
        raise ValueError("dual power iteration needs a nonnegative, nonzero start")
    phi = phi / np.max(np.abs(phi))
    lam = 0.0
    diff = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = S.apply_dual_values(phi)
        lam = float(np.max(np.abs(g)))
        if lam == 0.0:
            raise RuntimeError("dual period map sent the iterate to zero")
        g /= lam
        diff = float(np.max(np.abs(g - phi)))
        phi = g
        if diff < tol:
            converged = True
            break
    residual = float(np.max(np.abs(S.apply_dual_values(phi) - lam * phi))) / \
        float(np.max(np.abs(phi)))
    return PowerResult(lam, phi, it, diff, residual, converged)


@dataclass
class EigenSolution:
    """Floquet eigendata: exponent, periodic families, normalization defects."""

    Lambda0: float
    lambda_F: float
    times: np.ndarray
    f_samples: np.ndarray      # shape (m+1, N), f_t at times 0, dt, ..., T
    phi_samples: np.ndarray    # shape (m+1, N), phi_t at the same times
    box: TruncatedBox
    config: PropagatorConfig
    pairing_defect: float      # max_t |<phi_t, f_t> - 1|
    phi0_sup_defect: float     # | ||phi_0||_inf - 1 |
    f_period_defect: float     # ||f_T - f_0||_1
    phi_period_defect: float   # ||phi_T - phi_0||_inf
    residual_f: float
    residual_phi: float
    iterations_f: int
    iterations_phi: int

    @property
    def f0(self) -> GridField:
        return GridField(self.f_samples[0].copy(), self.box, 0.0)

    @property
    def phi0(self) -> DualGridField:
        return DualGridField(self.phi_samples[-1].copy(), self.box, self.times[-1])

    def f_at(self, k: int) -> GridField:
        return GridField(self.f_samples[k].copy(), self.box, float(self.times[k]))

    def phi_at(self, k: int) -> DualGridField:
        return DualGridField(self.phi_samples[k].copy(), self.box, float(self.times[k]))

    def to_dict(self) -> dict:
        return {
            "Lambda0": self.Lambda0,
            "lambda_F": self.lambda_F,
            "pairing_defect": self.pairing_defect,
            "phi0_sup_defect": self.phi0_sup_defect,
            "f_period_defect": self.f_period_defect,
            "phi_period_defect": self.phi_period_defect,
            "residual_f": self.residual_f,
            "residual_phi": self.residual_phi,
            "iterations_f": self.iterations_f,
            "iterations_phi": self.iterations_phi,
        }


def assemble_solution(S: PeriodOperator, f0_values, phi0_values,
                      Lambda0: float) -> EigenSolution:
    """Normalize the Perron pair and sample the periodic eigenfamilies.

    phi0 is rescaled to sup norm one, f0 so that <phi0, f0> = 1; then f is
    propagated forward and phi backward through one period, with the
    Floquet rescaling applied at every step time.
    """
    prop = S.propagator
    box = S.box
    m = prop.steps_per_period
    T = prop.model.period_T
    lam_F = math.log(Lambda0) / T

    phi0 = np.asarray(phi0_values, dtype=float).copy()
    phi0_sup = float(np.max(np.abs(phi0)))
    phi0 /= phi0_sup
    f0 = np.asarray(f0_values, dtype=float).copy()
    overlap = box.cell_volume * float(np.dot(phi0, f0))
    if overlap <= 0:
        raise RuntimeError("<phi0, f0> <= 0: power iterations did not deliver "
                           "a positive Perron pair")
    f0 /= overlap

    times = np.array([k * prop.dt for k in range(m + 1)])
    f_samples = np.empty((m + 1, box.num_nodes))
    phi_samples = np.empty((m + 1, box.num_nodes))

    raw = f0.copy()
    f_samples[0] = f0
    for k in range(m):
        raw = prop.step_values(raw, k)
        f_samples[k + 1] = math.exp(-lam_F * times[k + 1]) * raw

    raw = phi0.copy()
    phi_samples[m] = phi0
    for k in reversed(range(m)):
        raw = prop.step_dual_values(raw, k)
        phi_samples[k] = math.exp(-lam_F * (T - times[k])) * raw

    pairings = box.cell_volume * np.einsum("kn,kn->k", phi_samples, f_samples)
    pairing_defect = float(np.max(np.abs(pairings - 1.0)))
    f_period_defect = box.cell_volume * float(np.sum(np.abs(f_samples[m] - f_samples[0])))
    phi_period_defect = float(np.max(np.abs(phi_samples[m] - phi_samples[0])))

    return EigenSolution(
        Lambda0=Lambda0, lambda_F=lam_F, times=times,
        f_samples=f_samples, phi_samples=phi_samples,
        box=box, config=prop.config,
        pairing_defect=pairing_defect,
        phi0_sup_defect=abs(phi0_sup / phi0_sup - 1.0),
        f_period_defect=f_period_defect,
        phi_period_defect=phi_period_defect,
        residual_f=np.nan, residual_phi=np.nan,
        iterations_f=0, iterations_phi=0,
    )


@dataclass
class SpectrumReport:
    """Dense-oracle view of the period matrix spectrum."""

    eigenvalues: np.ndarray        # sorted by decreasing modulus
    leading: complex
    gap_ratio: float               # |lambda_2| / |lambda_1|
    multiplicity: int              # eigenvalues within 1e-8 |l1| of l1
    peripheral_count: int          # eigenvalues with modulus within 1e-8 |l1|
    matrix_size: int

    def leading_is_real_simple(self) -> bool:
        return (abs(self.leading.imag) <= 1e-8 * abs(self.leading)
                and self.leading.real > 0
                and self.multiplicity == 1)

    def to_dict(self) -> dict:
        return {
            "leading_real": float(self.leading.real),
            "leading_imag": float(self.leading.imag),
            "gap_ratio": self.gap_ratio,
            "multiplicity": self.multiplicity,
            "peripheral_count": self.peripheral_count,
            "matrix_size": self.matrix_size,
        }


def dense_oracle(model, box: TruncatedBox, config: PropagatorConfig = None) -> SpectrumReport:
    """Full dense eigendecomposition of the assembled period matrix."""
    S = period_map(model, box, config)
    A = S.matrix()
    eigs = scipy.linalg.eig(A, right=False)
    order = np.argsort(-np.abs(eigs))
    eigs = eigs[order]
    lead = eigs[0]
    mod1 = abs(lead)
    multiplicity = int(np.sum(np.abs(eigs - lead) <= 1e-8 * mod1))
    peripheral = int(np.sum(np.abs(np.abs(eigs) - mod1) <= 1e-8 * mod1))
    gap = float(abs(eigs[1]) / mod1) if len(eigs) > 1 else 0.0
    return SpectrumReport(eigenvalues=eigs, leading=complex(lead), gap_ratio=gap,
                          multiplicity=multiplicity, peripheral_count=peripheral,
                          matrix_size=A.shape[0])


@dataclass
class ConvergenceReport:
    """Observed decay of the Floquet-rescaled iterates toward the eigenline."""

    decay: np.ndarray            # e_n for n = 1..n_periods
    rho_hat: float
    C_hat: float
    r_squared: float
    zeta_observed: float
    fit_window: tuple
    floor_limited: bool
    ratios: np.ndarray

    def to_dict(self) -> dict:
        return {
            "rho_hat": self.rho_hat,
            "C_hat": self.C_hat,
            "r_squared": self.r_squared,
            "zeta_observed": self.zeta_observed,
            "fit_window": list(self.fit_window),
            "floor_limited": self.floor_limited,
            "decay": [float(v) for v in self.decay],
        }


def convergence_rate(S: PeriodOperator, solution: EigenSolution, f_test,
                     n_periods=10, burn_in=3) -> ConvergenceReport:
    """Fit the geometric decay of e_n = ||Lambda0^-n S^n f - <phi0,f> f0||_1.

    The log-linear fit runs over the post-burn-in tail; points at the
    roundoff floor are excluded and flagged.
    """
    if n_periods < 6:
        raise ValueError("need at least 6 periods for a meaningful fit")
    box = S.box
    f = np.asarray(f_test.values if hasattr(f_test, "values") else f_test,
                   dtype=float).copy()
    phi0 = solution.phi_samples[-1]
    f0 = solution.f_samples[0]
    target = (box.cell_volume * float(np.dot(phi0, f))) * f0

    decay = np.empty(n_periods)
    g = f.copy()
    for n in range(1, n_periods + 1):
        g = S.apply_values(g) / solution.Lambda0
        decay[n - 1] = box.cell_volume * float(np.sum(np.abs(g - target)))

    # below ~1e4 eps the curve is eigen-residual noise, not geometric decay
    floor = 1e4 * np.finfo(float).eps * box.cell_volume * float(np.sum(np.abs(target)))
    ns = np.arange(1, n_periods + 1)
    usable = (ns >= burn_in) & (decay > floor)
    floor_limited = bool(np.any((ns >= burn_in) & (decay <= floor)))
    if np.sum(usable) < 3:
        return ConvergenceReport(decay=decay, rho_hat=np.inf, C_hat=1.0,
                                 r_squared=1.0, zeta_observed=0.0,
                                 fit_window=(int(burn_in), int(n_periods)),
                                 floor_limited=True,
                                 ratios=decay[1:] / np.maximum(decay[:-1], 1e-300))

    x = ns[usable].astype(float)
    y = np.log(decay[usable])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    T = S.period
    rho_hat = -slope / T
    return ConvergenceReport(
        decay=decay, rho_hat=float(rho_hat), C_hat=float(np.exp(intercept)),
        r_squared=float(r2), zeta_observed=float(np.exp(slope)),
        fit_window=(int(x[0]), int(x[-1])), floor_limited=floor_limited,
        ratios=decay[1:] / np.maximum(decay[:-1], 1e-300),
    )


@dataclass
class FloquetResult:
    """A solved eigenproblem plus the step-refinement view of lambda_F."""

    solution: EigenSolution
    lambda_F_raw: float
    lambda_F_by_steps: dict
    lambda_F_extrapolated: float
    order_estimate: float

    def to_dict(self) -> dict:
        d = self.solution.to_dict()
        d.update({
            "lambda_F_raw": self.lambda_F_raw,
            "lambda_F_extrapolated": self.lambda_F_extrapolated,
            "richardson_order": self.order_estimate,
            "lambda_F_by_steps": {str(k): v for k, v in sorted(self.lambda_F_by_steps.items())},
        })
        return d


def _solve_at(model, box, config, tol, max_iter):
    S = period_map(model, box, config)
    fwd = power_iteration(S, tol=tol, max_iter=max_iter)
    dual = dual_power_iteration(S, tol=tol, max_iter=max_iter)
    sol = assemble_solution(S, fwd.vector, dual.vector, fwd.eigenvalue)
    sol.residual_f = fwd.residual
    sol.residual_phi = dual.residual
    sol.iterations_f = fwd.iterations
    sol.iterations_phi = dual.iterations
    return S, sol


def richardson_extrapolate(values):
    """Aitken extrapolation of three step-halved values; order estimate."""
    l1, l2, l3 = values
    d1, d2 = l2 - l1, l3 - l2
    if d2 == 0 or d1 * d2 <= 0 or abs(d1 - d2) < 1e-14 * max(1.0, abs(l3)):
        return l3, float("nan")
    order = math.log2(abs(d1 / d2))
    return l3 + d2 * d2 / (d1 - d2), order


def solve_floquet(model, box: TruncatedBox, config: PropagatorConfig = None,
                  tol=1e-12, max_iter=10_000,
                  richardson_steps=(64, 128, 256)) -> FloquetResult:
    """Solve the eigenproblem at config.dt and extrapolate lambda_F over a
    dt-refinement ladder (dt isolated from iteration error by the fixed tol).
    """
    if config is None:
        config = default_config(model)
    _, sol = _solve_at(model, box, config, tol, max_iter)

    lam_by_steps = {}
    for steps in richardson_steps:
        cfg = replace(config, dt=model.period_T / steps)
        if abs(cfg.dt - config.dt) < 1e-15:
            lam_by_steps[steps] = sol.lambda_F
            continue
        S_i = period_map(model, box, cfg)
        pr = power_iteration(S_i, tol=tol, max_iter=max_iter)
        lam_by_steps[steps] = math.log(pr.eigenvalue) / model.period_T
    ladder = [lam_by_steps[s] for s in sorted(lam_by_steps)]
    if len(ladder) >= 3:
        lam_ext, order = richardson_extrapolate(ladder[-3:])
    else:
        lam_ext, order = ladder[-1], float("nan")
    return FloquetResult(solution=sol, lambda_F_raw=sol.lambda_F,
                         lambda_F_by_steps=lam_by_steps,
                         lambda_F_extrapolated=lam_ext, order_estimate=order)
