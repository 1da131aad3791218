import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qinfo.errors import DegenerateScore, IllPosed, SingularFisher
from qinfo.geometry import example_model, polar_vector, random_curve_model, sphere_model
from qinfo.information import (
    attainability_check,
    attainability_from,
    bc_chain,
    chain_from,
    fisher_matrix,
    qfi_matrix,
    qfi_scalar,
    sld,
    sld_residual,
    sld_solve,
    spinhalf_plane_condition,
)
from qinfo.model import (
    ParametricModel,
    Povm,
    bloch_to_density,
    density_to_bloch,
    in_plane_povm,
    model_derivative,
    outcome_distribution,
    pauli_povm,
    random_povm,
    spin_povm,
    yz_mix_povm,
)
from qinfo.operators import IDENTITY2, SIGMA_X, SIGMA_Y, SIGMA_Z, spin, trace_product


def lyapunov_oracle(rho, rho_dot):
    """Least-squares solution of rho L + L rho = 2 rho_dot via Kronecker products."""
    d = rho.shape[0]
    op = np.kron(rho, np.eye(d)) + np.kron(np.eye(d), rho.T)
    vec, *_ = np.linalg.lstsq(op, 2 * rho_dot.reshape(-1), rcond=None)
    return vec.reshape(d, d)


def mixed_model(rng, shrink=None):
    """Random qubit model with Bloch vector r(t) w(t)/|w(t)|, r < 1."""
    inner = random_curve_model(rng)
    r0 = rng.uniform(0.2, 0.9) if shrink is None else shrink
    amp = rng.uniform(0.0, 0.09)

    def bloch(t):
        return (r0 + amp * np.sin(t)) * density_to_bloch(inner.state_at([t]))

    def state(t):
        return bloch_to_density(bloch(t[0]))

    return ParametricModel(1, state, name="mixed")


def random_full_rank(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T + 0.05 * np.eye(d)
    return rho / np.trace(rho).real


def random_traceless(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = a + a.conj().T
    return h - np.trace(h).real / d * np.eye(d)


def test_diagonal_state_sld():
    rho = np.diag([0.75, 0.25])
    lam = sld_solve(rho, 0.5 * SIGMA_X)
    np.testing.assert_allclose(lam, SIGMA_X, atol=1e-15)
    assert trace_product(rho @ lam, lam).real == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("eta", [np.pi / 6, np.pi / 4, np.pi / 2, 2.0])
def test_pure_state_sld_is_twice_derivative(eta):
    model = example_model(eta)
    for t in np.linspace(0, 2 * np.pi, 32, endpoint=False):
        res = sld(model, [t])
        d = model_derivative(model, [t], 0)
        assert np.max(np.abs(res.lambdas[0] - 2 * d)) <= 1e-9
        assert res.residuals[0] <= 1e-9
        assert abs(res.score_traces[0]) <= 1e-9


@pytest.mark.parametrize("d", [2, 3, 4])
def test_full_rank_sld_matches_lyapunov_oracle(rng, d):
    for _ in range(50):
        rho = random_full_rank(rng, d)
        rd = random_traceless(rng, d)
        lam = sld_solve(rho, rd)
        np.testing.assert_allclose(lam, lyapunov_oracle(rho, rd), atol=1e-8)
        assert sld_residual(rho, rd, lam) <= 1e-9


def test_sld_on_curve_fuzz(rng):
    models = [random_curve_model(rng) for _ in range(20)] + [mixed_model(rng) for _ in range(20)]
    for model in models:
        for t in rng.uniform(0, 2 * np.pi, size=5):
            res = sld(model, [t])
            assert res.residuals[0] <= 1e-9
            assert abs(res.score_traces[0]) <= 1e-9


def test_rank_deficient_off_support_derivative_is_ill_posed():
    rho = np.diag([1.0, 0.0, 0.0])
    rd = np.zeros((3, 3), dtype=complex)
    rd[1, 2] = rd[2, 1] = 0.1
    with pytest.raises(IllPosed):
        sld_solve(rho, rd)


@pytest.mark.parametrize("eta", [np.pi / 6, np.pi / 4, np.pi / 2])
def test_example_qfi(eta):
    model = example_model(eta)
    for t in np.linspace(0, 2 * np.pi, 64, endpoint=False):
        assert qfi_scalar(model, [t]) == pytest.approx(np.sin(eta) ** 2, abs=1e-9)


def test_sphere_qfi_at_equator_is_identity():
    np.testing.assert_allclose(qfi_matrix(sphere_model(), [np.pi / 2, 0.0]).matrix, np.eye(2), atol=1e-10)


def anticommutator_oracle(rho, lams):
    k = len(lams)
    return np.array(
        [[0.5 * np.trace(rho @ (lams[i] @ lams[j] + lams[j] @ lams[i])).real for j in range(k)] for i in range(k)]
    )


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, np.pi - 0.05), st.floats(0, 2 * np.pi))
def test_sphere_qfi_matrix(eta, phi):
    model = sphere_model()
    info = qfi_matrix(model, [eta, phi]).matrix
    rho = model.rho([eta, phi])
    lams = sld(model, [eta, phi]).lambdas
    np.testing.assert_allclose(info, anticommutator_oracle(rho, lams), atol=1e-12)
    np.testing.assert_allclose(info, np.diag([1.0, np.sin(eta) ** 2]), atol=1e-9)


def test_qfi_reparametrization(rng):
    base = sphere_model()
    for _ in range(10):
        jac = rng.normal(size=(2, 2))
        shift = np.array([np.pi / 2, 0.3])

        def state(psi, jac=jac):
            return base.state_at(jac @ psi + shift)

        model = ParametricModel(2, state)
        psi = rng.normal(scale=0.1, size=2)
        theta = jac @ psi + shift
        expected = jac.T @ qfi_matrix(base, theta).matrix @ jac
        np.testing.assert_allclose(qfi_matrix(model, psi).matrix, expected, atol=1e-7 * max(1, np.abs(expected).max()))


def finite_difference_fisher(model, m, theta, h=1e-6):
    k = model.param_dim
    p0 = outcome_distribution(model.rho(theta), m).probs
    grads = []
    for i in range(k):
        step = np.zeros(k)
        step[i] = h
        plus = outcome_distribution(model.rho(np.asarray(theta) + step), m).probs
        minus = outcome_distribution(model.rho(np.asarray(theta) - step), m).probs
        grads.append((plus - minus) / (2 * h))
    g = np.array(grads)
    return (g / p0) @ g.T


def test_fisher_against_finite_difference(rng):
    model = sphere_model()
    for _ in range(20):
        m = random_povm(rng, 2, int(rng.integers(2, 6)))
        theta = [rng.uniform(0.3, 2.8), rng.uniform(0, 2 * np.pi)]
        info = fisher_matrix(model, m, theta)
        assert not info.singular
        np.testing.assert_allclose(info.matrix, finite_difference_fisher(model, m, theta), atol=1e-6)


def test_alternating_yz_fisher_is_half_identity():
    info = fisher_matrix(sphere_model(), yz_mix_povm(), [np.pi / 2, 0.0])
    assert not info.singular
    np.testing.assert_allclose(info.matrix, 0.5 * np.eye(2), atol=1e-9)


def test_trivial_povm_has_no_information():
    info = fisher_matrix(example_model(1.0), Povm(("1",), (IDENTITY2,)), [0.4])
    assert info.scalar == 0.0 and not info.singular


def test_aligned_measurement_is_singular():
    # on the equator at theta = 0 the sigma_x outcome "-" has probability zero
    assert fisher_matrix(example_model(np.pi / 2), pauli_povm("x"), [0.0]).singular
    with pytest.raises(SingularFisher):
        bc_chain(example_model(np.pi / 2), pauli_povm("x"), [0.0])


def test_chain_binomial_example():
    rep = bc_chain(example_model(np.pi / 4), pauli_povm("x"), [np.pi / 4])
    assert rep.fisher == pytest.approx(1 / 3, abs=1e-12)
    assert rep.quantum == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("eta", [np.pi / 6, np.pi / 3, 2.2])
def test_chain_fisher_closed_form(eta):
    # sigma_x on the latitude circle: binomial with p = (1 + sin(eta) cos(theta)) / 2
    for t in np.linspace(0.1, 3.0, 9):
        expected = np.sin(eta) ** 2 * np.sin(t) ** 2 / (1 - np.sin(eta) ** 2 * np.cos(t) ** 2)
        assert bc_chain(example_model(eta), pauli_povm("x"), [t]).fisher == pytest.approx(expected, abs=1e-12)


def test_chain_ordering_fuzz(rng):
    for j in range(60):
        model = random_curve_model(rng) if j % 2 else mixed_model(rng)
        m = random_povm(rng, 2, int(rng.integers(2, 6)))
        rep = bc_chain(model, m, [rng.uniform(0, 2 * np.pi)])
        assert min(rep.slack) >= -1e-9


def test_chain_in_three_dimensions(rng):
    for _ in range(30):
        rho = random_full_rank(rng, 3)
        rd = random_traceless(rng, 3)
        rep = chain_from(rho, rd, sld_solve(rho, rd), random_povm(rng, 3, 4))
        assert min(rep.slack) >= -1e-9


def test_in_plane_measurement_attains_on_equator():
    model = example_model(np.pi / 2)
    for t in np.linspace(0.05, 2 * np.pi, 40, endpoint=False):
        rep = attainability_check(model, in_plane_povm(0.7), [t])
        chain = bc_chain(model, in_plane_povm(0.7), [t])
        assert rep.attains_here
        assert abs(chain.total_slack) <= 1e-8


def test_vertical_measurement_fails_on_equator():
    rep = attainability_check(example_model(np.pi / 2), pauli_povm("z"), [0.3])
    assert not rep.cond1_all


def attaining_povm(rng, model, t):
    """Spin measurement in the plane of u and its tangent, avoiding +-u."""
    u = density_to_bloch(model.rho([t]))
    du = density_to_bloch(model_derivative(model, [t], 0))
    e1 = u / np.linalg.norm(u)
    e2 = du - np.dot(du, e1) * e1
    e2 /= np.linalg.norm(e2)
    a = rng.uniform(0.2, np.pi - 0.2)
    return spin_povm(np.cos(a) * e1 + np.sin(a) * e2)


def test_attainability_iff_zero_slack(rng):
    seen = {True: 0, False: 0}
    for j in range(120):
        model = random_curve_model(rng)
        t = rng.uniform(0, 2 * np.pi)
        m = attaining_povm(rng, model, t) if j % 3 == 0 else random_povm(rng, 2, int(rng.integers(2, 5)))
        rep = attainability_check(model, m, [t])
        chain = bc_chain(model, m, [t])
        assert rep.attains_here == (chain.total_slack <= 1e-8)
        seen[rep.attains_here] += 1
    assert seen[True] > 10 and seen[False] > 10


def test_zero_outcome_with_score_weight_fails_second_condition():
    # outcome e1 has zero probability but the score has support there
    rho = np.diag([1.0, 0.0]).astype(complex)
    lam = SIGMA_X
    rep = attainability_from(rho, lam, pauli_povm("z"))
    assert rep.cond2_value == pytest.approx(1.0)
    assert not rep.attains_here


def test_plane_condition_examples():
    assert spinhalf_plane_condition([1, 0, 0], [0, 1, 0], [0.6, 0.8, 0])
    assert not spinhalf_plane_condition([1, 0, 0], [0, 1, 0], [0, 0, 1])
    with pytest.raises(DegenerateScore):
        spinhalf_plane_condition([1, 0, 0], [0, 0, 0], [1, 0, 0])


def test_plane_condition_matches_attainability(rng):
    for j in range(80):
        model = random_curve_model(rng)
        t = rng.uniform(0, 2 * np.pi)
        u = density_to_bloch(model.rho([t]))
        du = density_to_bloch(model_derivative(model, [t], 0))
        if j % 2:
            m = attaining_povm(rng, model, t)
        else:
            m = spin_povm(rng.normal(size=3))
        xi = density_to_bloch(m.elements[0]) * 2  # element is (1 + xi.sigma)/2
        plane = spinhalf_plane_condition(u, du, xi)
        assert plane == attainability_check(model, m, [t]).attains_here
        assert plane == (j % 2 == 1)
