"""Shared fixtures: models, boxes, and solved eigenproblems reused across
the suite (power iterations and dense assemblies are the expensive parts).
"""

import pytest

from floquet_transport import (PeriodOperator, PropagatorConfig, TruncatedBox,
                               assemble_solution, build_model,
                               derived_constants, dual_power_iteration,
                               get_propagator, power_iteration)


def make_model(family, **params):
    period = params.pop("period", 1.0)
    dimension = params.pop("dimension", 1)
    return build_model({"family": family, "period": period,
                        "dimension": dimension, "params": params})


@pytest.fixture(scope="session")
def gauss_model():
    return make_model("gaussian_confined")


@pytest.fixture(scope="session")
def rank_one_model():
    return make_model("rank_one", a0=-0.5, beta=2.0, k_sigma=0.3)


@pytest.fixture(scope="session")
def box64():
    return TruncatedBox(6.0, 64, 1)


@pytest.fixture(scope="session")
def box256():
    return TruncatedBox(6.0, 256, 1)


@pytest.fixture(scope="session")
def cfg128():
    return PropagatorConfig(dt=1.0 / 128)


@pytest.fixture(scope="session")
def gauss_constants64(gauss_model, box64):
    return derived_constants(gauss_model, box64)


@pytest.fixture(scope="session")
def gauss_constants256(gauss_model, box256):
    return derived_constants(gauss_model, box256)


@pytest.fixture(scope="session")
def gauss_S64(gauss_model, box64, cfg128):
    return PeriodOperator(get_propagator(gauss_model, box64, cfg128))


@pytest.fixture(scope="session")
def gauss_S256(gauss_model, box256, cfg128):
    return PeriodOperator(get_propagator(gauss_model, box256, cfg128))


def solve_on(S):
    fwd = power_iteration(S)
    dual = dual_power_iteration(S)
    sol = assemble_solution(S, fwd.vector, dual.vector, fwd.eigenvalue)
    sol.residual_f = fwd.residual
    sol.residual_phi = dual.residual
    sol.iterations_f = fwd.iterations
    sol.iterations_phi = dual.iterations
    return sol


@pytest.fixture(scope="session")
def gauss_solution64(gauss_S64):
    return solve_on(gauss_S64)


@pytest.fixture(scope="session")
def gauss_oracle64(gauss_model, box64, cfg128):
    from floquet_transport import dense_oracle
    return dense_oracle(gauss_model, box64, cfg128)
