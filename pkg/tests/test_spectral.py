import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import TOEPLITZ3_EIGS, charpoly_roots, symmetric_toeplitz3_eigenvalues
from rainbow_sensor.bem import capacitance_matrix_bem
from rainbow_sensor.capacitance import dilute_gcm, gcm_from_bem
from rainbow_sensor.geometry import Material, make_dilute_array, make_graded_array, as_dilute
from rainbow_sensor.spectral import (
    NonPhysicalSpectrumError,
    compute_spectrum,
    eigendecompose,
    fix_signs,
    mode_field,
    mode_weights,
    resonant_frequencies,
)

NONDIM = Material.nondimensional()


def test_two_by_two():
    lam, vec = eigendecompose(np.array([[3, -0.03], [-0.03, 3]]))
    np.testing.assert_allclose(lam, [2.97, 3.03])
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(vec, [[s, s], [s, -s]], atol=1e-14)


def test_diagonal():
    lam, vec = eigendecompose(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(lam, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(np.abs(vec), np.eye(3)[:, [1, 2, 0]])
    assert np.all(vec.max(axis=0) == 1.0)


def test_three_sphere_against_charpoly():
    g = dilute_gcm(make_dilute_array([[0, 0, 0], [10, 0, 0], [20, 0, 0]], 1.0, 0.1))
    lam, _ = eigendecompose(g)
    np.testing.assert_allclose(symmetric_toeplitz3_eigenvalues(3, -0.03, -0.015), TOEPLITZ3_EIGS, rtol=1e-15)
    # polynomial roots of a clustered cubic lose a few digits
    np.testing.assert_allclose(charpoly_roots(g.values), TOEPLITZ3_EIGS, rtol=1e-9)
    np.testing.assert_allclose(lam, TOEPLITZ3_EIGS, rtol=1e-14)


def test_sign_convention_tie_goes_to_lowest_index():
    v = fix_signs(np.array([[-1.0, 0.6], [1.0, -0.8]]))
    np.testing.assert_array_equal(v[:, 0], [1.0, -1.0])
    np.testing.assert_array_equal(v[:, 1], [-0.6, 0.8])


def test_asymmetric_input_rejected():
    with pytest.raises(ValueError):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_single_sphere_resonance():
    g = dilute_gcm(make_dilute_array([[0, 0, 0]], 1.0, 1.0))
    spec = compute_spectrum(g, Material.nondimensional(1e-3))
    assert spec.lambdas[0] == pytest.approx(3.0)
    assert spec.taus[0] == pytest.approx(1.5)
    assert spec.omegas[0].real == pytest.approx(0.0547722557505166, rel=1e-14)
    assert spec.omegas[0].imag == pytest.approx(-0.0015, rel=1e-14)


def test_single_sphere_physical_units():
    # closed form: sqrt(3 delta) v / r - 1.5 i delta v^2 / (v0 r) for Cap = 4 pi r
    r, mat = 1e-3, Material.air_in_water()
    g = dilute_gcm(make_dilute_array([[0, 0, 0]], r, 1.0))
    w = compute_spectrum(g, mat).omegas[0]
    assert w.real == pytest.approx(np.sqrt(3 * mat.delta) * mat.v / r, rel=1e-12)
    assert w.imag == pytest.approx(-1.5 * mat.delta * mat.v**2 / (mat.v0 * r), rel=1e-12)


def test_frequencies_vanish_with_delta():
    g = dilute_gcm(make_dilute_array([[0, 0, 0], [4, 0, 0]], 1.0, 0.2))
    re = [np.abs(compute_spectrum(g, Material(d, 1.0, 1.0)).omegas).max() for d in (1e-2, 1e-4, 1e-6)]
    assert re[0] > re[1] > re[2]
    assert re[2] < 1e-2


def test_delta_scaling_is_exact():
    g = dilute_gcm(make_dilute_array([[0, 0, 0], [4, 1, 0], [9, 0, 0]], [1.0, 0.8, 1.2], 0.2))
    a = compute_spectrum(g, Material(1e-3, 1.0, 1.0)).omegas
    b = compute_spectrum(g, Material(4e-3, 1.0, 1.0)).omegas
    np.testing.assert_allclose(b.real, 2 * a.real, rtol=1e-15)
    np.testing.assert_allclose(b.imag, 4 * a.imag, rtol=1e-15)


def test_nonpositive_eigenvalue_rejected():
    with pytest.raises(NonPhysicalSpectrumError):
        resonant_frequencies(np.array([-1.0, 2.0]), np.eye(2), np.eye(2), np.eye(2), NONDIM)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_spectrum_invariants(n, seed):
    rng = np.random.default_rng(seed)
    anchors = np.column_stack([np.arange(n) * 2.5, rng.normal(size=(n, 2)) * 0.3])
    g = dilute_gcm(make_dilute_array(anchors, rng.uniform(0.7, 1.3, n), 0.1))
    spec = compute_spectrum(g, NONDIM)
    assert np.all(np.diff(spec.lambdas) >= 0) and spec.lambdas[0] > 0
    assert np.abs(spec.vectors.T @ spec.vectors - np.eye(n)).max() < 1e-10
    recon = spec.vectors @ np.diag(spec.lambdas) @ spec.vectors.T
    assert np.linalg.norm(recon - g.values) / np.linalg.norm(g.values) < 1e-10
    assert np.all(spec.taus >= 0)
    assert np.all(spec.omegas.real > 0) and np.all(spec.omegas.imag <= 0)


def test_graded_array_frequencies_decrease_with_size():
    arr = as_dilute(make_graded_array(8, 1.0, 1.15, 12.0, NONDIM), 1.0)
    spec = compute_spectrum(dilute_gcm(arr), NONDIM)
    dom = spec.dominant_resonators()
    # ascending frequency <-> descending resonator size
    assert np.all(np.diff(dom) < 0)


def test_mode_weights():
    g = dilute_gcm(make_dilute_array([[0, 0, 0]], 2.0, 1.0))
    spec = compute_spectrum(g, NONDIM)
    assert mode_weights(spec, 1)[0] == pytest.approx(1 / np.sqrt(4 / 3 * np.pi * 8))
    pair = compute_spectrum(dilute_gcm(make_dilute_array([[0, 0, 0], [5, 0, 0]], 1.0, 0.2)), NONDIM)
    w = mode_weights(pair, 1)
    assert w[0] == pytest.approx(w[1])
    with pytest.raises(ValueError):
        mode_weights(pair, 3)


def test_mode_field_decays_like_inverse_distance():
    from rainbow_sensor.geometry import ResonatorArray

    arr = ResonatorArray(np.array([[0.0, 0, 0], [3, 0, 0]]), np.array([1.0, 1.0]), NONDIM)
    bem = capacitance_matrix_bem(arr, 1)
    spec = compute_spectrum(gcm_from_bem(arr, bem=bem), NONDIM)
    r = np.array([20.0, 40.0, 80.0, 160.0])
    pts = np.column_stack([1.5 + np.zeros_like(r), r, np.zeros_like(r)])
    u = np.abs(mode_field(bem.densities, spec, 1, pts))
    slope = np.polyfit(np.log(r), np.log(u), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.02)
