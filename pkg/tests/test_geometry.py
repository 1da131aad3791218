import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qinfo.errors import PoleDegeneracy
from qinfo.geometry import (
    CurveSample,
    SphericalAngles,
    curve_classify,
    curve_from_points,
    curve_model,
    default_grid,
    example_curve,
    example_model,
    example_state,
    load_curve_csv,
    polar_vector,
    projector_direction,
    random_curve_model,
    sample_curve,
    score_directions,
    sphere_model,
    uniform_attainability,
    vector_to_angles,
)
from qinfo.information import bc_chain, fisher_matrix, qfi_scalar, sld
from qinfo.model import (
    density_to_bloch,
    in_plane_povm,
    pauli_povm,
    random_povm,
    spin_povm,
    yz_mix_povm,
)
from qinfo.operators import SIGMA_X, SIGMA_Y, SIGMA_Z, spin


def test_example_state_north_pole():
    psi = example_state(SphericalAngles(0.0, 0.0))
    np.testing.assert_allclose(psi.amplitudes, [1, 0])
    np.testing.assert_allclose(density_to_bloch(psi.density()), [0, 0, 1], atol=1e-15)


def test_example_state_equator():
    rho = example_state(SphericalAngles(np.pi / 2, 0.0)).density()
    np.testing.assert_allclose(rho, 0.5 * (np.eye(2) + SIGMA_X), atol=1e-15)
    rho = example_state(SphericalAngles(np.pi / 2, np.pi / 2)).density()
    np.testing.assert_allclose(density_to_bloch(rho), [0, 1, 0], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, np.pi), st.floats(-10, 10))
def test_example_state_bloch_is_polar(eta, phi):
    rho = example_state(SphericalAngles(eta, phi)).density()
    np.testing.assert_allclose(density_to_bloch(rho), polar_vector(eta, phi), atol=1e-12)


def test_angles_round_trip(rng):
    for _ in range(100):
        eta, phi = rng.uniform(0.01, np.pi - 0.01), rng.uniform(0, 2 * np.pi)
        a = vector_to_angles(polar_vector(eta, phi))
        assert a.eta == pytest.approx(eta, abs=1e-12)
        assert a.phi == pytest.approx(phi, abs=1e-12)


def test_angles_validation():
    with pytest.raises(ValueError):
        SphericalAngles(-0.1, 0.0)
    assert SphericalAngles(1.0, -np.pi / 2).phi == pytest.approx(1.5 * np.pi)


def test_score_directions_equator():
    v_eta, v_phi, r = score_directions(SphericalAngles(np.pi / 2, 0.0))
    np.testing.assert_allclose(v_eta, [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(v_phi, [0, 1, 0], atol=1e-15)
    assert r == 1.0
    _, v_phi, _ = score_directions(SphericalAngles(np.pi / 2, np.pi / 2))
    np.testing.assert_allclose(v_phi, [-1, 0, 0], atol=1e-15)


def test_score_directions_match_sld(rng):
    model = sphere_model()
    for _ in range(50):
        eta, phi = rng.uniform(0.05, np.pi - 0.05), rng.uniform(0, 2 * np.pi)
        v_eta, v_phi, r = score_directions(SphericalAngles(eta, phi))
        u = polar_vector(eta, phi)
        assert abs(v_eta @ v_phi) < 1e-12 and abs(v_eta @ u) < 1e-12 and abs(v_phi @ u) < 1e-12
        lam_eta, lam_phi = sld(model, [eta, phi]).lambdas
        np.testing.assert_allclose(lam_eta, spin(v_eta), atol=1e-8)
        np.testing.assert_allclose(lam_phi, r * spin(v_phi), atol=1e-8)


@pytest.mark.parametrize("eta", [0.0, np.pi])
def test_score_directions_poles(eta):
    with pytest.raises(PoleDegeneracy):
        score_directions(SphericalAngles(eta, 0.3))


def test_classify_equator_is_great_circle():
    cls = curve_classify(example_curve(np.pi / 2))
    assert cls.tag == "great-circle"
    np.testing.assert_allclose(np.abs(cls.normal), [0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("eta", [np.pi / 6, np.pi / 4, 2.0])
def test_classify_latitude_is_non_planar(eta):
    assert curve_classify(example_curve(eta)).tag == "non-planar"


def test_classify_constant_curve():
    thetas = default_grid(8)
    sample = CurveSample(thetas, np.tile([0.0, 0.0, 1.0], (8, 1)), np.zeros((8, 3)))
    assert curve_classify(sample).tag == "degenerate"


def test_classify_needs_three_points():
    with pytest.raises(ValueError):
        curve_classify(example_curve(np.pi / 2, [0.0, 1.0]))


def test_classify_tilted_great_circle(rng):
    for _ in range(20):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        sample = example_curve(np.pi / 2)
        rotated = CurveSample(sample.thetas, sample.us @ q.T, sample.u_dots @ q.T)
        cls = curve_classify(rotated)
        assert cls.tag == "great-circle"
        assert abs(abs(cls.normal @ q[:, 2]) - 1) < 1e-10


def test_sampled_model_curve_matches_closed_form():
    sample = sample_curve(example_model(np.pi / 3), default_grid())
    ref = example_curve(np.pi / 3)
    np.testing.assert_allclose(sample.us, ref.us, atol=1e-12)
    np.testing.assert_allclose(sample.u_dots, ref.u_dots, atol=1e-12)


def test_random_curves_are_non_planar(rng):
    for _ in range(20):
        sample = sample_curve(random_curve_model(rng), default_grid())
        assert curve_classify(sample).tag == "non-planar"


@pytest.mark.parametrize("eta", [np.pi / 6, np.pi / 4, np.pi / 2])
def test_qfi_is_squared_speed(eta):
    model = example_model(eta)
    sample = sample_curve(model, default_grid())
    speeds = np.linalg.norm(sample.u_dots, axis=1)
    for t, r in zip(sample.thetas, speeds):
        assert qfi_scalar(model, [t]) == pytest.approx(r**2, abs=1e-9)


def test_in_plane_generic_azimuth_attains_uniformly():
    rep = uniform_attainability(example_model(np.pi / 2), in_plane_povm(0.3), default_grid())
    assert rep.attains
    assert rep.pointwise.all()


def test_out_of_plane_fails_on_equator():
    rep = uniform_attainability(example_model(np.pi / 2), pauli_povm("z"), default_grid())
    assert not rep.attains
    assert not rep.pointwise.any()
    for t in default_grid(16):
        assert bc_chain(example_model(np.pi / 2), pauli_povm("z"), [t]).total_slack > 1e-3


def test_latitude_circle_never_attains_uniformly(rng):
    model = example_model(np.pi / 4)
    povms = [random_povm(rng, 2, int(rng.integers(2, 5))) for _ in range(80)]
    povms += [spin_povm(rng.normal(size=3)) for _ in range(20)]
    for m in povms:
        assert not uniform_attainability(model, m, default_grid()).attains


def test_aligned_points_are_removable_singularities():
    model = example_model(np.pi / 2)
    m = in_plane_povm(0.0)
    grid = default_grid()
    values, singular = [], []
    for t in grid:
        info = fisher_matrix(model, m, [t])
        (singular if info.singular else values).append(t if info.singular else info.scalar)
    assert np.allclose(singular, [0.0, np.pi])
    assert len(values) == len(grid) - 2
    assert np.ptp(values) <= 1e-8
    assert values[0] == pytest.approx(1.0, abs=1e-8)


def test_curve_csv_round_trip(tmp_path):
    thetas = default_grid()
    us = example_curve(np.pi / 2, thetas).us
    path = tmp_path / "curve.csv"
    lines = ["theta,ux,uy,uz"] + [",".join(f"{x:.17g}" for x in (t, *u)) for t, u in zip(thetas, us)]
    path.write_text("\n".join(lines) + "\n")
    sample = load_curve_csv(path)
    assert curve_classify(sample).tag == "great-circle"
    # central differences on a closed 64-point grid: relative error ~ step^2 / 6
    np.testing.assert_allclose(np.linalg.norm(sample.u_dots, axis=1), 1.0, atol=2e-3)


def test_curve_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("theta,ux,uy\n0,1,0\n")
    with pytest.raises(ValueError):
        load_curve_csv(path)


def test_curve_model_reproduces_samples():
    sample = example_curve(np.pi / 4)
    model = curve_model(sample)
    for t, u in zip(sample.thetas[:-1], sample.us[:-1]):
        np.testing.assert_allclose(density_to_bloch(model.rho([t])), u, atol=1e-12)


def test_open_curve_from_points():
    thetas = np.linspace(0, 1, 20)
    us = np.array([polar_vector(np.pi / 2, t) for t in thetas])
    assert curve_classify(curve_from_points(thetas, us)).tag == "great-circle"


def test_projector_direction():
    np.testing.assert_allclose(projector_direction(pauli_povm("y").elements[1]), [0, -1, 0], atol=1e-15)
    assert projector_direction(yz_mix_povm().elements[0]) is not None
    assert projector_direction(np.eye(2) / 2) is None


def test_mixed_random_curve_derivative(rng):
    from qinfo.model import ParametricModel, model_derivative

    for _ in range(10):
        model = random_curve_model(rng, radius=rng.uniform(0.2, 0.95))
        numeric = ParametricModel(1, model.state_at)
        t = rng.uniform(0, 2 * np.pi)
        diff = model_derivative(model, [t], 0) - model_derivative(numeric, [t], 0)
        assert np.max(np.abs(diff)) < 1e-8
    with pytest.raises(ValueError):
        random_curve_model(rng, radius=1.5)
