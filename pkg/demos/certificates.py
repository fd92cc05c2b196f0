"""Quantified contraction certificates on the confined model.

Builds, in order: the compactly supported sub-eigenfunction (lower bracket
for the Floquet exponent), the Lyapunov pair, a small-ball minorization
chain, and the combined Harris certificate with its constructive
contraction factor.

Desk-scale certificates are sound but weak: the Doeblin mass eta is tiny,
so the meaningful quantity is the defect 1 - zeta, carried exactly even
when the float zeta rounds to 1.
"""

import math

import numpy as np

from floquet_transport import (GridField, PropagatorConfig, TruncatedBox,
                               assemble_solution, convergence_rate,
                               derived_constants, dual_power_iteration,
                               period_map, power_iteration)
from floquet_transport.harris import (harris_certificate, lyapunov_pair,
                                      minorization, splitting_diagnostic,
                                      sub_eigen_certificate)
from floquet_transport.model import build_model

model = build_model({"family": "gaussian_confined", "period": 1.0,
                     "dimension": 1, "params": {}})
box = TruncatedBox(6.0, 64, 1)
S = period_map(model, box, PropagatorConfig(dt=1.0 / 128))
constants = derived_constants(model, box)
fwd = power_iteration(S)
sol = assemble_solution(S, fwd.vector, dual_power_iteration(S).vector,
                        fwd.eigenvalue)

print("== sub-eigenfunction bump " + "=" * 37)
sub = sub_eigen_certificate(model, constants, S)
print(f"  support radius r0 = {sub.r0},  inner radius r = {sub.inner_radius:.5f}")
print(f"  alpha0 = {sub.alpha0:.4g}  ->  log(kappa0) = {sub.log_kappa0:.4g}")
print(f"  entrywise defect of S g0 >= kappa0 g0: {sub.defect:.2e}")
print(f"  bracket: {sub.log_kappa0:.4g} <= lambda_F = {sol.lambda_F:.4f}"
      f" <= {constants.q_hat + constants.a_sup:.4f}")
print("  (the faithful bump construction pushes r toward r0, so alpha0 is")
print("   large and kappa0 underflows; the log form keeps it meaningful)")

print("\n== Lyapunov pair " + "=" * 46)
lyap = lyapunov_pair(model, constants, sol, S)
print(f"  gamma = {lyap.gamma:.6f}, Theta = {lyap.Theta:.4f}, "
      f"R = {lyap.R_lyap:.4f}, phi floor c_R = {lyap.c_R:.4g}")
print(f"  verified on {lyap.verification['fields']} random signed fields, "
      f"worst slack {-lyap.verification['max_defect']:.4g}")

print("\n== small-ball minorization chain " + "=" * 30)
mino = minorization(model, constants, S, r=1.0, R=4.0, s=0.0, t=1.0)
print(f"  {mino.substeps} substeps, radii {mino.radii[0]:.2f} .. "
      f"{max(mino.radii):.2f}")
print(f"  log c (constructive) = {mino.log_c_constructive:.2f}")
print(f"  c (direct, grid)     = {mino.c_direct:.4g}")
print(f"  constructive <= direct: {mino.sound()}")

print("\n== Harris certificate " + "=" * 41)
conv = convergence_rate(S, sol, GridField(
    box.nodes_1d * np.exp(-box.nodes_1d**2), box))
cert = harris_certificate(model, constants, sol, S, lyap,
                          zeta_observed=conv.zeta_observed)
print(cert.summary_table())

print("\n== transport-norm splitting diagnostic " + "=" * 24)
diag = splitting_diagnostic(model, constants, box, kappa=0.5, k_max=4)
print(f"  kappa = {diag.kappa}: admissible k found = {diag.found}")
print(f"  log transport-norm bounds per period count: "
      f"{[round(b, 2) for b in diag.log_bounds]}")
print("  (confinement parks trajectories at positive fitness, so the bound")
print("   grows with k: for this family the diagnostic reports no finite k)")

flat = build_model({"family": "autonomous", "period": 1.0, "dimension": 1,
                    "params": {"kappa": 0.0, "a0": -3.0, "a2": 0.0,
                               "beta": 2.0, "sigma": 0.3}})
flat_const = derived_constants(flat, box)
diag2 = splitting_diagnostic(flat, flat_const, box, kappa=0.5, k_max=4)
print(f"  flat model with a = -3: least k = {diag2.k}, "
      f"tail window delta = {diag2.delta:.4g}")
