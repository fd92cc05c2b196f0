import math

import numpy as np
import pytest

from floquet_transport import (GridField, DualGridField, PropagatorConfig,
                               TruncatedBox, apply_kernel, apply_kernel_dual,
                               apply_transport, evolve,
                               get_propagator, pairing, step, step_dual)
from floquet_transport.model import CoefficientModel
from floquet_transport.semiflow import (Propagator, interpolation_matrix,
                                        outer_shell_mass)

from conftest import make_model

# slack constant of the discrete growth bound (1 + c dt); the backward
# interpolation column sums carry O(dt) grid-alignment noise
GROWTH_SLACK = 4.0


@pytest.fixture(scope="module")
def identity_model():
    # v = 0, a = 0, q = 0: every propagator piece is the identity
    return make_model("rank_one", a0=0.0, beta=0.0)


@pytest.fixture(scope="module")
def decay_model():
    return make_model("rank_one", a0=-0.5, beta=0.0)


@pytest.fixture(scope="module")
def drift_model():
    # v = -x, a = 0
    return make_model("autonomous", kappa=1.0, a0=0.0, a2=0.0, beta=0.0)


def timedep_kernel_model():
    """Hand-built model with a genuinely time-dependent kernel."""
    sigma = 0.3
    om = 2 * math.pi

    def velocity(t, x):
        return -np.asarray(x, dtype=float)

    def divergence(t, x):
        x = np.asarray(x)
        return np.full(x.shape[:-1], -1.0)

    def fitness(t, x):
        x = np.asarray(x)
        return 1.0 - np.sum(x * x, axis=-1)

    def kernel(t, y, x):
        z = np.asarray(x) - np.asarray(y)
        beta_t = 2.0 + np.sin(om * t)
        return beta_t * np.exp(-0.5 * np.sum(z * z, axis=-1) / sigma**2) \
            / (sigma * math.sqrt(2 * math.pi))

    return CoefficientModel(
        period_T=1.0, dimension_d=1, velocity=velocity,
        velocity_divergence=divergence, fitness=fitness, kernel=kernel,
        family_id="custom_tabulated", kernel_autonomous=False,
        r0=sigma, r1=sigma / 2)


# -- interpolation -----------------------------------------------------------

def test_interpolation_exact_at_nodes(box64):
    f = np.sin(box64.nodes_1d)
    for order in (1, 3):
        W = interpolation_matrix(box64, box64.nodes, order=order)
        np.testing.assert_array_equal(W @ f, f)


def test_interpolation_zero_outside_box(box64):
    pts = np.array([[7.0], [-6.4], [100.0]])
    for order in (1, 3):
        W = interpolation_matrix(box64, pts, order=order)
        f = np.ones(box64.num_nodes)
        np.testing.assert_allclose(W @ f, 0.0, atol=1e-15)


def test_linear_interpolation_weights_nonnegative(box64):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-7, 7, (500, 1))
    W = interpolation_matrix(box64, pts, order=1)
    assert W.data.min() >= 0.0
    # interior rows sum to one
    inside = (pts[:, 0] > -6 + box64.h) & (pts[:, 0] < 6 - box64.h)
    sums = np.asarray(W.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums[inside], 1.0, atol=1e-14)


# -- transport ---------------------------------------------------------------

def test_transport_identity(identity_model, box256):
    f = GridField(np.exp(-box256.nodes_1d**2), box256)
    out = apply_transport(identity_model, 0.0, 1.0, f)
    np.testing.assert_array_equal(out.values, f.values)
    assert out.time_tag == 1.0


def test_transport_pure_decay(decay_model, box256):
    # v = 0, a = -0.5, t - s = 2: exactly e^{-1} times the input
    f = GridField(np.exp(-box256.nodes_1d**2), box256)
    out = apply_transport(decay_model, 0.0, 2.0, f)
    np.testing.assert_allclose(out.values, np.exp(-1.0) * f.values, rtol=1e-13)


def test_transport_mass_conservation(drift_model, box256):
    # exact pushforward of 1_[-1,1] under v = -x has mass 2; the indicator
    # edge limits quadrature accuracy to O(h)
    f = GridField((np.abs(box256.nodes_1d) <= 1.0).astype(float), box256)
    out = apply_transport(drift_model, 0.0, 1.0, f)
    assert abs(out.mass() - f.mass()) <= 3 * box256.h * math.e


def test_transport_rejects_backward(drift_model, box64):
    f = GridField(np.ones(64), box64)
    with pytest.raises(ValueError):
        apply_transport(drift_model, 1.0, 0.0, f)


# -- kernel ------------------------------------------------------------------

def test_kernel_zero_field(gauss_model, box64):
    out = apply_kernel(gauss_model, 0.0, GridField(np.zeros(64), box64))
    np.testing.assert_array_equal(out.values, 0.0)


def test_kernel_rank_one_image(rank_one_model, box64):
    # separable kernel q = beta k(x): image is beta * k * mass(f)
    rng = np.random.default_rng(2)
    f = GridField(rng.random(64), box64)
    out = apply_kernel(rank_one_model, 0.0, f)
    bk = rank_one_model.kernel(0.0, np.zeros((1, 1)), box64.nodes).ravel()
    np.testing.assert_allclose(out.values, bk * f.mass(), rtol=1e-12)
    assert out.mass() == pytest.approx(2.0 * f.mass(), rel=1e-10)


def test_kernel_delta_spreads_gaussian(gauss_model, box256):
    f = np.zeros(box256.num_nodes)
    j = box256.num_nodes // 2
    f[j] = 1.0 / box256.h            # single cell of unit mass
    out = apply_kernel(gauss_model, 0.0, GridField(f, box256))
    x0 = box256.nodes_1d[j]
    expected = 2.0 * np.exp(-0.5 * ((box256.nodes_1d - x0) / 0.2) ** 2) \
        / (0.2 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(out.values, expected, rtol=1e-12)
    assert out.mass() == pytest.approx(2.0, abs=1e-10)


def test_kernel_dual_mass_function(gauss_model, box256, gauss_constants256):
    ones = DualGridField(np.ones(box256.num_nodes), box256)
    out = apply_kernel_dual(gauss_model, 0.0, ones)
    assert out.values.max() <= gauss_constants256.q_hat + 1e-12
    # interior points emit the full mass beta = 2
    mid = abs(box256.nodes_1d) < 3
    np.testing.assert_allclose(out.values[mid], 2.0, atol=1e-10)


def test_kernel_duality_roundoff(gauss_model, box64):
    rng = np.random.default_rng(7)
    for _ in range(100):
        f = GridField(rng.random(64), box64)
        phi = DualGridField(rng.random(64), box64)
        a = pairing(phi, apply_kernel(gauss_model, 0.3, f))
        b = pairing(apply_kernel_dual(gauss_model, 0.3, phi), f)
        assert abs(a - b) <= 10 * np.spacing(abs(a))


# -- splitting steps ----------------------------------------------------------

def test_step_without_kernel_is_transport(decay_model, box64, cfg128):
    prop = get_propagator(decay_model, box64, cfg128)
    rng = np.random.default_rng(1)
    f = rng.random(64)
    out = prop.step_values(f, 5)
    expected = prop.transport_matrix(5) @ f
    np.testing.assert_array_equal(out, expected)


def test_step_rank_one_matrix_structure(rank_one_model, box64):
    # one step at dt: e^{a0 dt} (I + dt beta k w^T + O(dt^2))
    dt = 1.0 / 1024
    prop = Propagator(rank_one_model, box64, PropagatorConfig(dt=dt))
    M = prop.step_values(np.eye(64), 0)
    k = rank_one_model.kernel(0.0, np.zeros((1, 1)), box64.nodes).ravel()
    first_order = math.exp(-0.5 * dt) * (np.eye(64)
                                         + dt * np.outer(k, np.full(64, box64.h)))
    assert np.max(np.abs(M - first_order)) <= 10 * dt**2


def test_step_functional_wrappers(gauss_model, box64, cfg128):
    rng = np.random.default_rng(3)
    f = GridField(rng.random(64), box64, time_tag=0.0)
    phi = DualGridField(rng.random(64), box64, time_tag=cfg128.dt)
    out = step(gauss_model, 0.0, cfg128.dt, f, cfg128)
    back = step_dual(gauss_model, 0.0, cfg128.dt, phi, cfg128)
    assert out.time_tag == pytest.approx(cfg128.dt)
    a = pairing(phi, out)
    b = pairing(back, f)
    assert abs(a - b) <= 10 * np.spacing(abs(a))


@pytest.mark.parametrize("splitting,duhamel", [("strang", "midpoint"),
                                               ("strang", "endpoint"),
                                               ("lie", "midpoint"),
                                               ("lie", "endpoint")])
def test_step_duality_all_schemes_timedep_kernel(splitting, duhamel):
    # exact transposition must hold even when the two kernel half-steps
    # use different times
    model = timedep_kernel_model()
    box = TruncatedBox(4.0, 32, 1)
    cfg = PropagatorConfig(dt=1.0 / 32, splitting=splitting, duhamel=duhamel)
    prop = Propagator(model, box, cfg)
    rng = np.random.default_rng(0)
    for k in (0, 7):
        f = rng.random(32)
        p = rng.random(32)
        a = box.cell_volume * float(np.dot(p, prop.step_values(f, k)))
        b = box.cell_volume * float(np.dot(prop.step_dual_values(p, k), f))
        assert abs(a - b) <= 10 * np.spacing(abs(a))


# -- evolve -------------------------------------------------------------------

def test_evolve_identity_at_equal_times(gauss_model, box64, cfg128):
    f = GridField(np.ones(64), box64)
    out = evolve(gauss_model, 0.0, 0.0, f, cfg128)
    np.testing.assert_array_equal(out.values, f.values)


def test_evolve_requires_grid_times(gauss_model, box64, cfg128):
    f = GridField(np.ones(64), box64)
    with pytest.raises(ValueError):
        evolve(gauss_model, 0.0, 0.4 * cfg128.dt, f, cfg128)


def test_evolve_growth_bound(gauss_model, box256, gauss_constants256, cfg128):
    rate = gauss_constants256.q_hat + gauss_constants256.a_sup
    prop = get_propagator(gauss_model, box256, cfg128)
    rng = np.random.default_rng(4)
    slack = 1.0 + GROWTH_SLACK * cfg128.dt
    for span in (cfg128.dt, 0.25, 1.0):
        for _ in range(100):
            f = rng.random(box256.num_nodes)
            g = prop.evolve_values(f, 0.0, span)
            assert np.sum(np.abs(g)) <= math.exp(rate * span) * slack * np.sum(np.abs(f))


def test_evolve_full_period_duality(gauss_model, box256, cfg128):
    prop = get_propagator(gauss_model, box256, cfg128)
    rng = np.random.default_rng(6)
    for _ in range(20):
        f = rng.random(box256.num_nodes)
        p = rng.random(box256.num_nodes)
        a = box256.cell_volume * float(np.dot(p, prop.evolve_values(f, 0.0, 1.0)))
        b = box256.cell_volume * float(np.dot(prop.evolve_dual_values(p, 1.0, 0.0), f))
        assert abs(a - b) <= 10 * np.spacing(abs(a))


def test_evolve_positivity(gauss_model, box256, cfg128):
    prop = get_propagator(gauss_model, box256, cfg128)
    rng = np.random.default_rng(8)
    for _ in range(100):
        f = rng.random(box256.num_nodes) * (rng.random(box256.num_nodes) > 0.5)
        g = prop.evolve_values(f, 0.0, 1.0)
        assert g.min() >= 0.0


def test_period_map_strictly_positive(gauss_model, box64, cfg128):
    # discrete analogue of strict positivity: one period spreads any spike
    prop = get_propagator(gauss_model, box64, cfg128)
    for j in (0, box64.num_nodes // 2, box64.num_nodes - 1):
        f = np.zeros(box64.num_nodes)
        f[j] = 1.0
        g = prop.evolve_values(f, 0.0, 1.0)
        assert g.min() > 0.0


def test_rank_one_period_growth(rank_one_model, box256):
    # || S f ||_1 / || f ||_1 -> e^{a0 + beta} = e^{1.5} on f = k
    prop = Propagator(rank_one_model, box256, PropagatorConfig(dt=1.0 / 128))
    k = rank_one_model.kernel(0.0, np.zeros((1, 1)), box256.nodes).ravel()
    g = prop.evolve_values(k, 0.0, 1.0)
    ratio = np.sum(np.abs(g)) / np.sum(np.abs(k))
    assert ratio == pytest.approx(math.exp(1.5), rel=1e-3)


def test_period_matrices_periodic_in_offset(gauss_model, box64, cfg128):
    prop = get_propagator(gauss_model, box64, cfg128)
    for k in (0, 40):
        A = prop.transport_matrix(k).toarray()
        B = prop.transport_matrix(k, t_offset=gauss_model.period_T).toarray()
        assert np.max(np.abs(A - B)) <= 1e-12 * max(1.0, np.max(np.abs(A)))


def test_timedep_kernel_cache_periodic():
    model = timedep_kernel_model()
    box = TruncatedBox(4.0, 32, 1)
    prop = Propagator(model, box, PropagatorConfig(dt=1.0 / 32))
    M1 = prop.kernel_matrix_at(0.25)
    M2 = prop.kernel_matrix_at(1.25)
    np.testing.assert_allclose(M1, M2, atol=1e-12)


def test_two_grid_convergence_order(gauss_model):
    # refining (n, dt) -> (2n, dt/2) changes ||evolve(0,T,f)||_1 at first
    # order or better (linear interpolation, strang splitting)
    norms = []
    for n, steps in ((64, 32), (128, 64), (256, 128)):
        box = TruncatedBox(6.0, n, 1)
        prop = Propagator(gauss_model, box, PropagatorConfig(dt=1.0 / steps))
        f = np.exp(-box.nodes_1d**2)
        g = prop.evolve_values(f, 0.0, 1.0)
        norms.append(box.cell_volume * np.sum(np.abs(g)))
    d1, d2 = abs(norms[1] - norms[0]), abs(norms[2] - norms[1])
    order = math.log2(d1 / d2)
    print(f"two-grid convergence: norms={norms}, measured order={order:.2f}")
    assert order > 0.5


def test_outer_shell_mass(box64):
    f = GridField(np.ones(box64.num_nodes), box64)
    shell = outer_shell_mass(f, shell_fraction=0.1)
    # roughly 10% of the total mass of a uniform field
    assert shell == pytest.approx(0.1 * f.norm_l1(), rel=0.35)


def test_config_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(dt=0.0)
    with pytest.raises(ValueError):
        PropagatorConfig(dt=0.1, interpolation_order=2)
    with pytest.raises(ValueError):
        PropagatorConfig(dt=0.1, splitting="yanenko")
    m = make_model("gaussian_confined")
    with pytest.raises(ValueError, match="divide"):
        Propagator(m, TruncatedBox(6.0, 16, 1), PropagatorConfig(dt=0.3))
