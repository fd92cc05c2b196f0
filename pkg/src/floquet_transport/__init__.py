"""Floquet principal eigenvalues for time-periodic transport equations with
integral source term, with quantified exponential-attraction certificates.

The library discretizes the equation

    d/dt u + div(u v(t,x)) = \\int u(t,y) q(t,y,x) dy + a(t,x) u

on a truncated box, realizes the one-period solution operator as a product
of semi-Lagrangian transport steps and kernel-quadrature steps (the dual
operator being the exact transpose), computes the Perron triple of the
period map by power iteration, validates it against a dense eigensolve,
and produces Lyapunov/minorization certificates for the contraction rate.
"""

from .grid import DualGridField, GridField, TruncatedBox, pairing
from .model import (SamplingPlan, build_model, check_hypotheses,
                    derived_constants)
from .semiflow import (Propagator, PropagatorConfig, apply_kernel,
                       apply_kernel_dual, apply_transport, default_config,
                       evolve, evolve_dual, get_propagator, step, step_dual)
from .spectral import (DenseOracleSizeError, EigenSolution, PeriodOperator,
                       assemble_solution, convergence_rate, dense_oracle,
                       dual_power_iteration, period_map, power_iteration,
                       solve_floquet)
from .harris import (CertificateUnavailable, HarrisCertificate,
                     LyapunovPair, MinorizationResult, SubEigenCertificate,
                     harris_certificate, lyapunov_pair, minorization,
                     phi_upper_envelope, splitting_diagnostic,
                     sub_eigen_certificate)
from . import flow, io_utils

__version__ = "0.1.0"
