"""Quantitative contraction certificates for the period map.

Four ingredients are produced and cross-checked on the grid:

  * a sub-eigenfunction bump g0 with S g0 >= kappa0 g0, giving the lower
    half of the bracket log(kappa0)/T <= lambda_F;
  * a Lyapunov pair (gamma, Theta) with ||S~ f||_1 <= gamma ||f||_1
    + Theta <phi0, |f|>;
  * minorization constants, both by the constructive small-ball chain and
    by direct grid evaluation;
  * the combined Harris certificate (A, g_A, eta) with a constructive
    contraction factor per period, compared against the observed one.

Constants are statements about the discrete operator: every esssup/essinf
over a ball becomes a max/min over sampled points, and the sampling
resolution is recorded.  Factors that underflow double precision are
carried in log form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridField, TruncatedBox
from .spectral import EigenSolution, PeriodOperator

__all__ = [
    "CertificateUnavailable",
    "SubEigenCertificate",
    "LyapunovPair",
    "MinorizationResult",
    "HarrisCertificate",
    "SplittingDiagnostic",
    "sub_eigen_certificate",
    "lyapunov_pair",
    "minorization",
    "harris_certificate",
    "splitting_diagnostic",
    "phi_upper_envelope",
    "ball_intersection_volume",
]


class CertificateUnavailable(RuntimeError):
    """A certificate precondition cannot be realized at this resolution/box."""


# ---------------------------------------------------------------------------
# geometry and sampling helpers
# ---------------------------------------------------------------------------


def ball_intersection_volume(R1: float, R2: float, dist: float, d: int) -> float:
    """|B(0, R1) n B(c, R2)| with |c| = dist, in dimension d in {1, 2}."""
    if R1 <= 0 or R2 <= 0:
        return 0.0
    if dist >= R1 + R2:
        return 0.0
    if d == 1:
        lo = max(-R1, dist - R2)
        hi = min(R1, dist + R2)
        return max(0.0, hi - lo)
    if dist <= abs(R1 - R2):
        rmin = min(R1, R2)
        return math.pi * rmin * rmin
    # circular lens
    alpha = math.acos((dist * dist + R1 * R1 - R2 * R2) / (2 * dist * R1))
    beta = math.acos((dist * dist + R2 * R2 - R1 * R1) / (2 * dist * R2))
    tri = 0.5 * math.sqrt(max(0.0, (-dist + R1 + R2) * (dist + R1 - R2)
                               * (dist - R1 + R2) * (dist + R1 + R2)))
    return R1 * R1 * alpha + R2 * R2 * beta - tri


def _ball_cloud(x0, radius, d, n=65):
    """Deterministic sample cloud of the closed ball B(x0, radius)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if d == 1:
        return x0[None, :] + radius * np.linspace(-1.0, 1.0, n)[:, None]
    rr = np.linspace(0.0, 1.0, 17)
    th = np.linspace(0.0, 2 * math.pi, 25)
    pts = [x0 + radius * r * np.array([math.cos(a), math.sin(a)])
           for r in rr for a in th]
    return np.array(pts)


def _sup_over_ball(model, func, x0, radius, times, box):
    """Max of |func(t, x)| over sampled times and a ball sample cloud."""
    cloud = _ball_cloud(x0, radius, model.dimension_d)
    in_ball = box.ball_mask(x0, radius * (1 + 1e-12))
    pts = cloud if not in_ball.any() else np.vstack([cloud, box.nodes[in_ball]])
    worst = -np.inf
    for t in times:
        worst = max(worst, float(np.max(np.abs(func(t, pts)))))
    return worst


def _inf_fitness_over_ball(model, x0, radius, times, box):
    cloud = _ball_cloud(x0, radius, model.dimension_d)
    in_ball = box.ball_mask(x0, radius * (1 + 1e-12))
    pts = cloud if not in_ball.any() else np.vstack([cloud, box.nodes[in_ball]])
    best = np.inf
    for t in times:
        best = min(best, float(np.min(model.fitness(t, pts))))
    return best


def _abar_cumulative(model, constants, points, horizon, n_sub):
    """Cumulative trapezoid integrals of abar along forward trajectories.

    Returns (cum, positions): cum[j] approximates
    int_0^{j h} abar(X_{u,0}(x)) du at substep boundaries.
    """
    pts = np.asarray(points, dtype=float).copy()
    h = horizon / n_sub
    cum = np.zeros((n_sub + 1, pts.shape[0]))
    prev = np.asarray(constants.abar(np.linalg.norm(pts, axis=-1)))
    vel = model.velocity
    t = 0.0
    for j in range(n_sub):
        k1 = vel(t, pts)
        k2 = vel(t + 0.5 * h, pts + 0.5 * h * k1)
        k3 = vel(t + 0.5 * h, pts + 0.5 * h * k2)
        k4 = vel(t + h, pts + h * k3)
        pts = pts + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (j + 1) * h
        cur = np.asarray(constants.abar(np.linalg.norm(pts, axis=-1)))
        cum[j + 1] = cum[j] + 0.5 * h * (prev + cur)
        prev = cur
    return cum, pts


# ---------------------------------------------------------------------------
# sub-eigenfunction certificate
# ---------------------------------------------------------------------------


@dataclass
class SubEigenCertificate:
    g0: GridField
    inner_radius: float     # r in (r1, r0) passing the gradient condition
    alpha0: float
    kappa0: float           # exp(-alpha0 T); may underflow, see log_kappa0
    log_kappa0: float
    defect: float           # min over nodes of S g0 - kappa0 g0
    x0: np.ndarray
    r0: float

    def to_dict(self) -> dict:
        return {
            "inner_radius": self.inner_radius,
            "alpha0": self.alpha0,
            "kappa0": self.kappa0,
            "log_kappa0": self.log_kappa0,
            "defect": self.defect,
            "r0": self.r0,
        }


def _bump_profile(s, r0):
    """Radial cosine-taper bump: 1 at the center, C1 zero at r0."""
    s = np.asarray(s, dtype=float)
    out = np.where(s < r0, np.cos(0.5 * math.pi * np.minimum(s, r0) / r0) ** 2, 0.0)
    return out


def _bump_gradient_max(lo, hi, r0):
    """max over s in [lo, hi] of |d/ds cos^2(pi s / (2 r0))|."""
    peak = 0.5 * math.pi / r0
    lo, hi = max(0.0, lo), min(hi, r0)
    if lo <= 0.5 * r0 <= hi:
        return peak
    s = lo if abs(lo - 0.5 * r0) < abs(hi - 0.5 * r0) else hi
    return peak * abs(math.sin(math.pi * s / r0))


def sub_eigen_certificate(model, constants, S: PeriodOperator,
                          scan_points=512) -> SubEigenCertificate:
    """Build the compact bump g0 and verify S g0 >= exp(-alpha0 T) g0.

    Scans the inner radius r downward from r0 until the gradient-vs-q0
    condition holds, then evaluates alpha0 and checks the discrete
    inequality entrywise.
    """
    if not constants.q0 > 0:
        raise CertificateUnavailable(
            "integrated kernel positivity (q0) not witnessed; "
            "sub-eigenfunction certificate needs it")
    box = S.box
    x0, r0, r1 = constants.x0, constants.r0, constants.r1
    times = constants.plan.times(model.period_T)

    def speed(t, x):
        return np.linalg.norm(model.velocity(t, x), axis=-1)

    v_sup_r0 = _sup_over_ball(model, speed, x0, r0, times, box)
    g_at_r1 = float(_bump_profile(r1, r0))

    chosen = None
    for r in np.linspace(r0 * (1 - 1.0 / scan_points), r1, scan_points, endpoint=False):
        grad_band = _bump_gradient_max(r, r0, r0)
        if constants.q0 * g_at_r1 - grad_band * v_sup_r0 >= 0.0:
            chosen = float(r)
            break
    if chosen is None:
        raise CertificateUnavailable(
            "no admissible inner radius r in (r1, r0) at this resolution")

    grad_ball = _bump_gradient_max(0.0, chosen, r0)
    min_g = float(_bump_profile(chosen, r0))
    v_sup_r = _sup_over_ball(model, speed, x0, chosen, times, box)
    adiv_sup = _sup_over_ball(
        model, lambda t, x: model.fitness(t, x) - model.velocity_divergence(t, x),
        x0, chosen, times, box)
    alpha0 = (grad_ball / min_g) * v_sup_r + adiv_sup

    T = model.period_T
    log_kappa0 = -alpha0 * T
    kappa0 = math.exp(log_kappa0) if log_kappa0 > -745 else 0.0

    dist = np.linalg.norm(box.nodes - np.atleast_1d(x0)[None, :], axis=1)
    g0_vals = _bump_profile(dist, r0)
    Sg0 = S.apply_values(g0_vals)
    defect = float(np.min(Sg0 - kappa0 * g0_vals))
    return SubEigenCertificate(
        g0=GridField(g0_vals, box), inner_radius=chosen, alpha0=alpha0,
        kappa0=kappa0, log_kappa0=log_kappa0, defect=defect,
        x0=np.atleast_1d(x0), r0=r0)


# ---------------------------------------------------------------------------
# Lyapunov pair
# ---------------------------------------------------------------------------


@dataclass
class LyapunovPair:
    gamma: float
    Theta: float
    R_lyap: float
    theta: float
    c_R: float
    verification: dict

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "Theta": self.Theta, "R_lyap": self.R_lyap,
                "theta": self.theta, "c_R": self.c_R,
                "verification": self.verification}


def _verify_lyapunov(S, solution, gamma, Theta, n_fields, seed):
    box = S.box
    phi0 = solution.phi_samples[-1]
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_fields):
        f = rng.standard_normal(box.num_nodes)
        sf = S.apply_values(f) / solution.Lambda0
        lhs = box.cell_volume * float(np.sum(np.abs(sf)))
        rhs = (gamma * box.cell_volume * float(np.sum(np.abs(f)))
               + Theta * box.cell_volume * float(np.dot(phi0, np.abs(f))))
        worst = max(worst, lhs - rhs)
    return {"fields": n_fields, "max_defect": worst, "passed": bool(worst <= 0.0)}


def lyapunov_pair(model, constants, solution: EigenSolution, S: PeriodOperator,
                  n_fields=200, seed=0) -> LyapunovPair:
    """Constructive (gamma, Theta): one-period L1 contraction up to a
    phi0-weighted remainder, with empirical verification on random fields.

    The phi floor c_R is evaluated on the whole periodic family phi_t (the
    Gronwall step compares intermediate masses against <phi_t, u_t>).
    """
    lam = solution.lambda_F
    threshold = -1.0 - abs(lam)
    vals = constants.abar_values + constants.q_hat
    hit = np.nonzero(vals <= threshold)[0]
    if len(hit) == 0:
        raise CertificateUnavailable(
            f"box too small: abar + q_hat never reaches {threshold:.3f}; enlarge it")
    R = float(constants.abar_radii[hit[0]])
    theta = constants.a_sup + constants.q_hat + 1.0 + abs(lam)

    box = S.box
    ball = box.ball_mask(np.zeros(box.dimension), R)
    if not ball.any():
        raise CertificateUnavailable("no grid nodes inside the Lyapunov ball")
    c_R = float(np.min(solution.phi_samples[:, ball]))
    if c_R <= 0:
        raise CertificateUnavailable("phi floor on the Lyapunov ball is not positive")

    T = model.period_T
    gamma = math.exp(-T)
    gronwall = T * math.exp((abs(lam) - lam) * T)
    Theta = (theta / c_R) * gronwall
    verification = _verify_lyapunov(S, solution, gamma, Theta, n_fields, seed)
    return LyapunovPair(gamma=gamma, Theta=Theta, R_lyap=R, theta=theta,
                        c_R=c_R, verification=verification)


# ---------------------------------------------------------------------------
# minorization
# ---------------------------------------------------------------------------


@dataclass
class MinorizationResult:
    c_constructive: float
    log_c_constructive: float
    c_direct: float
    radii: list
    substeps: int
    span: tuple
    direction: str

    def sound(self, tol=1e-12) -> bool:
        if self.c_direct <= 0:
            return False
        return self.log_c_constructive <= math.log(self.c_direct) + tol

    def to_dict(self) -> dict:
        return {"c_constructive": self.c_constructive,
                "log_c_constructive": self.log_c_constructive,
                "c_direct": self.c_direct, "substeps": self.substeps,
                "radii": self.radii, "direction": self.direction}


def _epsilon_radius(r, r0, n_inf):
    """Largest dt with |X_{t,s}(x)| < |x| + r0/8 on B(0, r + r0/2)."""
    if n_inf <= 0:
        return math.inf
    return math.log1p(r0 / (8.0 * (r + 0.5 * r0 + 1.0))) / n_inf


def _chain_constants(model, constants, r, R, span, d):
    """Radii and admissible substep length of the small-ball chain.

    The certified ball grows by r0/2 per substep until it covers R; extra
    substeps (forced by the epsilon constraint) keep the final radius.
    """
    r0 = constants.r0
    if r <= r0 / 8.0:
        raise CertificateUnavailable("start radius too small for the chain geometry")
    j_grow = max(1, int(math.ceil(max(0.0, R - r) / (0.5 * r0))))
    eps = _epsilon_radius(r + 0.5 * r0 * (j_grow - 1), r0, constants.n_inf)
    j = max(j_grow, int(math.ceil(span / (0.95 * eps))) if math.isfinite(eps) else j_grow)
    radii = [r + 0.5 * r0 * min(i, j_grow - 1) for i in range(j)]
    return radii, span / j


def minorization(model, constants, S: PeriodOperator, r: float, R: float,
                 s: float, t: float, direction="dual") -> MinorizationResult:
    """Constant c with S*_{s,t} 1_{B(0,r)} >= c 1_{B(0,R)} (or the forward
    variant), computed by the constructive chain and by direct evaluation.

    The chain grows the certified ball by r0/2 per sub-interval, each
    factor q0 * b_r * dt * exp(dt * a_r); the direct value is the entrywise
    minimum of the grid evaluation over B(0, R).
    """
    if not constants.q0_strong > 0:
        raise CertificateUnavailable("strong kernel positivity (Hq+) not witnessed")
    if t <= s:
        raise CertificateUnavailable("need t > s")
    span = t - s
    d = model.dimension_d
    q0 = constants.q0_strong
    r0 = constants.r0
    times = constants.plan.times(model.period_T)
    box = S.box

    radii, dt_sub = _chain_constants(model, constants, r, R, span, d)
    log_c = 0.0
    for ri in radii:
        b_r = ball_intersection_volume(ri - r0 / 8.0, r0, ri + 5.0 * r0 / 8.0, d)
        if b_r <= 0:
            raise CertificateUnavailable(f"empty lens at radius {ri}")
        a_r = _inf_fitness_over_ball(model, np.zeros(d), ri + r0, times, box)
        log_c += math.log(q0) + math.log(b_r) + math.log(dt_sub) + dt_sub * a_r
    c_constructive = math.exp(log_c) if log_c > -745 else 0.0

    ind = box.indicator(np.zeros(d), r)
    if direction == "dual":
        out = S.propagator.evolve_dual_values(ind, t, s)
    else:
        out = S.propagator.evolve_values(ind, s, t)
    target = box.ball_mask(np.zeros(d), R)
    if not target.any():
        raise CertificateUnavailable("no grid nodes inside the target ball")
    c_direct = float(np.min(out[target]))
    return MinorizationResult(
        c_constructive=c_constructive, log_c_constructive=log_c,
        c_direct=c_direct, radii=[float(x) for x in radii],
        substeps=len(radii), span=(s, t), direction=direction)


# ---------------------------------------------------------------------------
# the combined Harris certificate
# ---------------------------------------------------------------------------


def phi_upper_envelope(model, constants, box: TruncatedBox, lambda_F: float,
                       n_sub=256) -> np.ndarray:
    """Upper envelope for phi0 from the dual Duhamel formula:
    exp(-lF T + int abar) plus the kernel tail with the coarse growth bound.
    """
    T = model.period_T
    cum, _ = _abar_cumulative(model, constants, box.nodes, T, n_sub)
    term1 = np.exp(-lambda_F * T + cum[-1])
    h = T / n_sub
    inner = np.exp(cum)  # e^{int_0^s abar}, sampled on the substep grid
    integral = h * (0.5 * inner[0] + inner[1:-1].sum(axis=0) + 0.5 * inner[-1])
    term2 = math.exp((constants.q_hat + constants.a_sup - lambda_F) * T) \
        * constants.q_hat * integral
    return term1 + term2


@dataclass
class HarrisCertificate:
    gamma: float
    Theta: float
    A: float
    R_harris: float
    envelope_used: str          # "Phi" or "phi0_tail"
    c: float                    # minorization constant entering g_A
    c_constructive: float
    log_c_constructive: float
    c_direct: float
    g_A: GridField
    eta: float                  # <phi0, g_A>
    eta_lower_bound: float
    zeta_constructive: float
    zeta_gap: float             # exact 1 - zeta (kept separately: eta can
                                # be far below the float spacing at 1)
    branch_doeblin: float       # 1 - eta/2
    branch_lyapunov: float      # (2 + A gamma') / (2 + A)
    zeta_observed: float
    verification: dict
    epsilon_mid: float

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "Theta": self.Theta, "A": self.A,
            "R_harris": self.R_harris, "envelope_used": self.envelope_used,
            "c": self.c, "c_constructive": self.c_constructive,
            "log_c_constructive": self.log_c_constructive,
            "c_direct": self.c_direct, "eta": self.eta,
            "eta_lower_bound": self.eta_lower_bound,
            "zeta_constructive": self.zeta_constructive,
            "zeta_gap": self.zeta_gap,
            "branch_doeblin": self.branch_doeblin,
            "branch_lyapunov": self.branch_lyapunov,
            "zeta_observed": self.zeta_observed,
            "verification": self.verification,
            "epsilon_mid": self.epsilon_mid,
        }

    def summary_table(self) -> str:
        rows = [
            ("gamma (Lyapunov factor)", f"{self.gamma:.6g}"),
            ("Theta (Lyapunov offset)", f"{self.Theta:.6g}"),
            ("A (Harris set size)", f"{self.A:.6g}"),
            ("R (tail radius)", f"{self.R_harris:.6g}  [{self.envelope_used}]"),
            ("c (minorization)", f"{self.c:.6g}"),
            ("log c (constructive)", f"{self.log_c_constructive:.6g}"),
            ("eta = <phi0, g_A>", f"{self.eta:.6g}"),
            ("zeta (constructive)", f"{self.zeta_constructive:.17g}"),
            ("1 - zeta (exact gap)", f"{self.zeta_gap:.6g}"),
            ("zeta (observed)", f"{self.zeta_observed:.6g}"),
            ("minorization checks", f"{self.verification['passed']}/"
                                    f"{self.verification['fields']}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _harris_set_minorization(model, constants, S, R2, lambda_F):
    """Compose the mid-block Doeblin step with two chain legs into the
    constant of S f >= c <1_B(0,R2), f> 1_B(0,R1), R1 covering the box."""
    T = model.period_T
    d = model.dimension_d
    r0 = constants.r0
    prop = S.propagator
    dt = prop.dt
    box = S.box

    if constants.n_inf > 0:
        eps = math.log1p(r0 / (4.0 * (r0 + 1.0))) / constants.n_inf
    else:
        eps = 0.25 * T
    eps = min(eps, 0.49 * T)
    eps_steps = int(math.floor(eps / dt))
    if eps_steps < 1:
        raise CertificateUnavailable(
            "dt too coarse to represent the Doeblin window epsilon")
    eps_snap = eps_steps * dt

    times = constants.plan.times(T)
    a_loc = _inf_fitness_over_ball(model, np.zeros(d), r0, times, box)
    log_tilde_c = (math.log(constants.q0_strong) + math.log(eps_snap)
                   + eps_snap * (a_loc - constants.div_inf))

    mid_start_steps = prop.steps_per_period // 2
    t_mid0 = mid_start_steps * dt
    t_mid1 = t_mid0 + eps_snap

    R_box = float(np.max(box.node_radii)) + 1e-12
    leg_fwd = minorization(model, constants, S, r0 / 4.0, R_box,
                           t_mid1, T, direction="forward")
    leg_dual = minorization(model, constants, S, r0 / 4.0, R2,
                            0.0, t_mid0, direction="dual")
    log_c = log_tilde_c + leg_fwd.log_c_constructive + leg_dual.log_c_constructive

    # direct: entrywise minimum of the period-matrix block over columns in
    # B(0, R2), rows everywhere (B(0, A) truncates to the whole box)
    cols = np.nonzero(box.ball_mask(np.zeros(d), R2))[0]
    basis = np.zeros((box.num_nodes, len(cols)))
    basis[cols, np.arange(len(cols))] = 1.0
    block = prop.evolve_values(basis, 0.0, T)
    c_direct = float(np.min(block)) / box.cell_volume
    return log_c, c_direct, eps_snap


def _verify_harris(S, solution, A, g_A_vals, n_fields, seed):
    box = S.box
    phi0 = solution.phi_samples[-1]
    rng = np.random.default_rng(seed)
    passed = 0
    worst = np.inf
    admissible = 0
    for _ in range(n_fields):
        f = rng.random(box.num_nodes)
        mass = box.cell_volume * float(np.sum(f))
        overlap = box.cell_volume * float(np.dot(phi0, f))
        if mass > A * overlap:
            continue  # outside the Harris set; the condition does not apply
        admissible += 1
        out = S.apply_values(f) / solution.Lambda0
        defect = float(np.min(out - overlap * g_A_vals))
        worst = min(worst, defect)
        if defect >= 0:
            passed += 1
    return {"fields": admissible, "passed": passed,
            "min_defect": worst, "all_passed": bool(passed == admissible)}


def harris_certificate(model, constants, solution: EigenSolution,
                       S: PeriodOperator, lyapunov: LyapunovPair,
                       zeta_observed=float("nan"), n_fields=200,
                       seed=0) -> HarrisCertificate:
    """Assemble the full certificate and its constructive contraction factor.

    The factor per period is max(1 - eta/2, (2 + A gamma')/(2 + A)) with
    gamma' = gamma + Theta/A (see docs/harris_contraction_note.md); its
    soundness is enforced by comparing against the observed factor rather
    than by trusting the closed form.
    """
    box = S.box
    T = model.period_T
    lam = solution.lambda_F
    gamma, Theta = lyapunov.gamma, lyapunov.Theta
    A = 2.0 * Theta / (1.0 - gamma)

    # tail radius: A * sup_{|x|>R} Phi <= 1/2, falling back to the direct
    # phi0 tail when the box truncates Phi
    phi0 = solution.phi_samples[-1]
    radii = box.node_radii
    envelope = phi_upper_envelope(model, constants, box, lam)
    R_harris = None
    used = "Phi"
    for R in constants.abar_radii:
        outside = radii > R
        if not outside.any():
            continue
        if A * float(np.max(envelope[outside])) <= 0.5:
            R_harris = float(R)
            break
    if R_harris is None:
        used = "phi0_tail"
        for R in constants.abar_radii:
            outside = radii > R
            if not outside.any():
                continue
            if A * float(np.max(phi0[outside])) <= 0.5:
                R_harris = float(R)
                break
    if R_harris is None:
        need = 2.0 * A * float(np.min(phi0))
        raise CertificateUnavailable(
            f"box cannot realize the tail condition A*sup Phi <= 1/2 "
            f"(would need the tail below {0.5 / A:.3g}, over-estimate of "
            f"required half-width ~ {need:.3g})")

    log_c, c_direct, eps_snap = _harris_set_minorization(
        model, constants, S, R_harris, lam)
    c_constructive = math.exp(log_c) if log_c > -745 else 0.0
    c = c_direct if c_direct > 0 else c_constructive
    if c <= 0:
        raise CertificateUnavailable("minorization constant underflows; "
                                     "certificate would be vacuous")

    inside = box.ball_mask(np.zeros(box.dimension), A)  # whole box when A > L
    g_A_vals = 0.5 * c * math.exp(-lam * T) * inside.astype(float)
    eta = box.cell_volume * float(np.dot(phi0, g_A_vals))
    c_A = float(np.min(phi0[inside]))
    ball_measure = box.cell_volume * float(np.sum(inside))
    eta_lower = 0.5 * c * c_A * math.exp(-lam * T) * ball_measure

    gamma_prime = gamma + Theta / A
    branch_lyap = (2.0 + A * gamma_prime) / (2.0 + A)
    branch_doeblin = 1.0 - 0.5 * eta
    zeta = max(branch_doeblin, branch_lyap)
    zeta_gap = min(0.5 * eta, 1.0 - branch_lyap)

    verification = _verify_harris(S, solution, A, g_A_vals, n_fields, seed)
    return HarrisCertificate(
        gamma=gamma, Theta=Theta, A=A, R_harris=R_harris, envelope_used=used,
        c=c, c_constructive=c_constructive, log_c_constructive=log_c,
        c_direct=c_direct, g_A=GridField(g_A_vals, box), eta=eta,
        eta_lower_bound=eta_lower, zeta_constructive=zeta, zeta_gap=zeta_gap,
        branch_doeblin=branch_doeblin, branch_lyapunov=branch_lyap,
        zeta_observed=zeta_observed, verification=verification,
        epsilon_mid=eps_snap)


# ---------------------------------------------------------------------------
# transport-norm splitting diagnostic
# ---------------------------------------------------------------------------


@dataclass
class SplittingDiagnostic:
    kappa: float
    k: int                      # least admissible k, or 0 when none found
    delta: float
    log_delta: float
    log_bounds: list            # log of the transport-norm bound per k
    found: bool

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "k": self.k, "delta": self.delta,
                "log_delta": self.log_delta, "found": self.found,
                "log_bounds": self.log_bounds}


def splitting_diagnostic(model, constants, box: TruncatedBox, kappa: float,
                         k_max: int, n_sub_per_period=64) -> SplittingDiagnostic:
    """Scan k for ||V_{kT,0}|| <= kappa^k e^{-1} via the along-trajectory
    abar integral, then size the Duhamel tail window delta.

    Confining drifts park trajectories where abar > 0, so the bound grows
    with k and no admissible k exists; that outcome is reported, not an
    error.
    """
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    T = model.period_T
    cum, pts = _abar_cumulative(model, constants, box.nodes, T, n_sub_per_period)
    total = cum[-1].copy()
    log_bounds = [float(np.max(total))]
    for _ in range(2, k_max + 1):
        # trajectories continue from the previous period's endpoints
        cum_k, pts = _abar_cumulative(model, constants, pts, T, n_sub_per_period)
        total += cum_k[-1]
        log_bounds.append(float(np.max(total)))

    omega = max(1.0, constants.q_hat + constants.a_sup)
    for k, lb in enumerate(log_bounds, start=1):
        if lb <= k * math.log(kappa) - 1.0:
            log_delta = (k * math.log(kappa) + math.log(1.0 - math.exp(-1.0))
                         - math.log(constants.q_hat) - omega * k * T)
            delta = math.exp(log_delta) if log_delta > -745 else 0.0
            return SplittingDiagnostic(kappa=kappa, k=k, delta=delta,
                                       log_delta=log_delta,
                                       log_bounds=log_bounds, found=True)
    return SplittingDiagnostic(kappa=kappa, k=0, delta=0.0,
                               log_delta=-math.inf,
                               log_bounds=log_bounds, found=False)
