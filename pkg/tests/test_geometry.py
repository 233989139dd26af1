import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rainbow_sensor.geometry import (
    ConfigError,
    GeometryError,
    Material,
    PerturbationSpec,
    ResonatorArray,
    apply_perturbation,
    array_from_config,
    as_dilute,
    graded_array_for_length,
    load_array_config,
    make_dilute_array,
    make_graded_array,
    random_perturbation,
)


def test_material_validation():
    with pytest.raises(GeometryError):
        Material(0.0, 1.0, 1.0)
    with pytest.raises(GeometryError):
        Material(1e-3, -1.0, 1.0)
    m = Material.air_in_water()
    assert (m.v, m.v0) == (343.0, 1480.0)


def test_graded_single_sphere():
    a = make_graded_array(1, 0.001, 1.05, 1.0, Material.air_in_water())
    assert a.n == 1
    np.testing.assert_array_equal(a.centers, [[0.0, 0.0, 0.0]])
    assert a.radii[0] == 0.001


def test_graded_two_spheres_layout():
    a = make_graded_array(2, 1.0, 1.0, 1.0, Material.nondimensional())
    np.testing.assert_allclose(a.centers[:, 0], [0.0, 3.0])
    assert a.labels == (1, 2)


def test_graded_radii_and_gaps():
    a = make_graded_array(5, 0.5, 1.2, 2.0, Material.nondimensional())
    np.testing.assert_allclose(a.radii, 0.5 * 1.2 ** np.arange(5))
    x = a.centers[:, 0]
    gaps = np.diff(x) - a.radii[:-1] - a.radii[1:]
    np.testing.assert_allclose(gaps, 2.0 * a.radii[:-1])


def test_graded_for_length_is_35mm():
    a = graded_array_for_length(22, 0.035, 1.1, 10.0, Material.air_in_water())
    length = a.centers[-1, 0] + a.radii[-1] - (a.centers[0, 0] - a.radii[0])
    assert length == pytest.approx(0.035, rel=1e-12)
    assert a.n == 22
    assert np.all(np.diff(a.radii) > 0)


@pytest.mark.parametrize("args", [(0, 1.0, 1.1, 1.0), (2, -1.0, 1.1, 1.0), (2, 1.0, 0.9, 1.0), (2, 1.0, 1.1, 0.0)])
def test_graded_rejects_bad_inputs(args):
    with pytest.raises(GeometryError):
        make_graded_array(*args, Material.nondimensional())


def test_dilute_centers():
    a = make_dilute_array([[0, 0, 0], [10, 0, 0]], 1.0, 0.1)
    np.testing.assert_allclose(a.centers, [[0, 0, 0], [100, 0, 0]])
    assert a.epsilon == 0.1
    np.testing.assert_array_equal(a.centers, a.reference_centers / a.epsilon)


def test_dilute_large_array_valid():
    n = 50
    a = make_dilute_array(np.column_stack([np.arange(n), np.zeros(n), np.zeros(n)]), 1.0, 0.5 / n)
    assert a.n == n


def test_dilute_touching_rejected():
    # centers 2 apart with unit radii: spheres touch
    with pytest.raises(GeometryError):
        make_dilute_array([[0, 0, 0], [1, 0, 0]], 1.0, 0.5)


def test_dilute_duplicate_anchor_rejected():
    with pytest.raises(GeometryError):
        make_dilute_array([[0, 0, 0], [0, 0, 0]], 1.0, 0.01)


def test_array_rejects_overlap_and_bad_labels():
    with pytest.raises(GeometryError):
        ResonatorArray(np.array([[0.0, 0, 0], [1.5, 0, 0]]), np.array([1.0, 1.0]), Material.nondimensional())
    with pytest.raises(GeometryError):
        ResonatorArray(np.array([[0.0, 0, 0], [5, 0, 0]]), np.array([1.0, 1.0]), Material.nondimensional(),
                       labels=(2, 1))


def test_array_is_immutable():
    a = make_graded_array(3, 1.0, 1.1, 2.0, Material.nondimensional())
    with pytest.raises(ValueError):
        a.radii[0] = 5.0


def eleven():
    return make_graded_array(11, 1.0, 1.05, 4.0, Material.nondimensional())


def test_removal_keeps_labels():
    r = apply_perturbation(eleven(), PerturbationSpec.removal([5]))
    assert r.labels == (1, 2, 3, 4, 6, 7, 8, 9, 10, 11)


def test_multi_removal():
    r = apply_perturbation(eleven(), PerturbationSpec.removal([2, 5, 8, 9]))
    assert r.n == 7
    assert r.labels == (1, 3, 4, 6, 7, 10, 11)


def test_removal_composition():
    a = eleven()
    once = apply_perturbation(a, PerturbationSpec.removal([3, 7]))
    first = apply_perturbation(a, PerturbationSpec.removal([3]))
    twice = apply_perturbation(first, PerturbationSpec.removal([first.labels.index(7) + 1]))
    assert once.labels == twice.labels
    np.testing.assert_array_equal(once.centers, twice.centers)


def test_remove_all_rejected():
    a = make_graded_array(2, 1.0, 1.0, 1.0, Material.nondimensional())
    with pytest.raises(GeometryError):
        apply_perturbation(a, PerturbationSpec.removal([1, 2]))
    with pytest.raises(GeometryError):
        apply_perturbation(a, PerturbationSpec.removal([3]))


def test_zero_size_perturbation_is_identity():
    a = as_dilute(eleven(), 0.1)
    b = apply_perturbation(a, PerturbationSpec.size(np.zeros(11)))
    for f in ("centers", "radii", "reference_centers"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert (a.epsilon, a.labels, a.material) == (b.epsilon, b.labels, b.material)


def test_size_and_position_preserve_the_other():
    a = as_dilute(eleven(), 0.1)
    s = apply_perturbation(a, PerturbationSpec.size(np.full(11, 0.01)))
    np.testing.assert_array_equal(s.centers, a.centers)
    np.testing.assert_allclose(s.radii, 1.01 * a.radii)
    betas = np.zeros((11, 3))
    betas[:, 1] = 0.05
    p = apply_perturbation(a, PerturbationSpec.position(betas))
    np.testing.assert_array_equal(p.radii, a.radii)
    np.testing.assert_allclose(p.centers - a.centers, betas / 0.1)


def test_size_perturbation_alpha_bounds():
    with pytest.raises(GeometryError):
        PerturbationSpec.size([-1.0, 0.0])


def test_size_perturbation_overlap():
    a = make_graded_array(2, 1.0, 1.0, 0.1, Material.nondimensional())
    with pytest.raises(GeometryError):
        apply_perturbation(a, PerturbationSpec.size([0.2, 0.2]))


def test_random_perturbation_zero_and_determinism():
    spec = random_perturbation("size", 5, 0.0, seed=1)
    np.testing.assert_array_equal(spec.alphas, np.zeros(5))
    a = random_perturbation("position", 4, 0.1, seed=7)
    b = random_perturbation("position", 4, 0.1, seed=7)
    np.testing.assert_array_equal(a.betas, b.betas)
    assert a.betas.shape == (4, 3)


def test_random_perturbation_mean():
    sigma, n = 0.02, 100_000
    spec = random_perturbation("size", n, sigma, seed=2024)
    assert abs(spec.alphas.mean()) < 4 * sigma / np.sqrt(n)
    assert spec.alphas.std() == pytest.approx(sigma, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 8),
    growth=st.floats(1.0, 1.3),
    spacing=st.floats(0.5, 10.0),
    sigma=st.floats(0.0, 0.05),
    seed=st.integers(0, 2**31),
)
def test_disjointness_after_successful_perturbation(n, growth, spacing, sigma, seed):
    a = as_dilute(make_graded_array(n, 1.0, growth, spacing, Material.nondimensional()), 0.5)
    for kind in ("size", "position"):
        try:
            b = apply_perturbation(a, random_perturbation(kind, n, sigma, seed))
        except GeometryError:
            continue
        d = b.pairwise_distances()
        iu = np.triu_indices(n, 1)
        assert np.all(d[iu] > (b.radii[:, None] + b.radii[None, :])[iu])


def test_config_roundtrip(tmp_path):
    a = make_graded_array(3, 1.0, 1.1, 2.0, Material.nondimensional(2e-3))
    path = tmp_path / "a.json"
    path.write_text(json.dumps(a.to_config()))
    b = load_array_config(path)
    np.testing.assert_allclose(b.centers, a.centers)
    np.testing.assert_allclose(b.radii, a.radii)
    assert b.material == a.material


def test_config_schemas():
    g = array_from_config({"graded": {"n": 3, "first_radius": 1, "growth": 1.1, "spacing": 2}})
    assert g.n == 3
    d = array_from_config({"dilute": {"anchors": [[0, 0, 0], [10, 0, 0]], "radii": 1.0, "epsilon": 0.1}})
    assert d.is_dilute
    s = array_from_config({"spheres": [{"center": [0, 0, 0], "radius": 2.0}]})
    assert s.radii[0] == 2.0


@pytest.mark.parametrize(
    "config, key",
    [
        ({"graded": {"n": 3, "first_radius": 1, "growth": 1.1}}, "graded.spacing"),
        ({"graded": {"n": 3, "first_radius": 1, "growth": 1.1, "spacing": 1}, "colour": 1}, "colour"),
        ({"spheres": [{"center": [0, 0], "radius": 1}]}, "spheres[0].center"),
        ({"spheres": [{"center": [0, 0, 0], "radius": 1}], "material": {"delta": 1e-3, "v": 1}}, "material.v0"),
    ],
)
def test_config_errors_name_the_key(config, key):
    with pytest.raises(ConfigError) as exc:
        array_from_config(config)
    assert exc.value.key == key
