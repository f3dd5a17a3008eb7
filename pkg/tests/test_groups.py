import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.stats import kstest, ks_2samp

from otranks import groups
from otranks.errors import DegenerateInputError, InvalidInputError
from otranks.groups import GroupElement, SymmetryGroup
from oracles import brute_orbit_cost, group_matrices, rotations_2d

FINITE = [("central", 3, None), ("sign", 3, None), ("permutation", 3, None),
          ("reflection", 3, (1.0, -2.0, 0.5)), ("trivial", 3, None)]


def _group(kind, p, u):
    return SymmetryGroup(kind, p, u)


def test_orbit_cost_examples():
    assert groups.orbit_cost(SymmetryGroup("central", 2), [1, 2], [-1, -2]) == 0
    assert groups.orbit_cost(SymmetryGroup("spherical", 2), [3, 4], [1, 0]) == pytest.approx(16)
    assert groups.orbit_cost(SymmetryGroup("sign", 2), [-1, 2], [1, 1]) == pytest.approx(1)


def test_spherical_cost_against_dense_grid():
    mats = rotations_2d(500_000)
    x, h = np.array([3.0, 4.0]), np.array([1.0, 0.0])
    xs = np.stack([Q.T @ x for Q in mats[:: 50]])
    assert np.min(np.sum((xs - h) ** 2, axis=1)) == pytest.approx(16, abs=1e-6)


def test_closest_orbit_point_examples():
    assert_allclose(groups.closest_orbit_point(SymmetryGroup("central", 2), [1, -1], [-1, 1]), [1, -1])
    assert_allclose(groups.closest_orbit_point(SymmetryGroup("spherical", 2), [3, 4], [2, 0]), [1.2, 1.6])
    assert_allclose(groups.closest_orbit_point(SymmetryGroup("sign", 2), [-3, 2], [1, -1]), [-1, 1])


def test_argmin_sign_examples(rng):
    e = groups.argmin_sign(SymmetryGroup("central", 2), [2, 3], [2, 3])
    assert e.payload == 1
    e = groups.argmin_sign(SymmetryGroup("sign", 2), [-1, 2], [1, 1])
    assert list(e.payload) == [-1, 1]
    g = SymmetryGroup("permutation", 2)
    e = groups.argmin_sign(g, [2, 1], [1, 2])
    assert_allclose(e.matrix(g), [[0, 1], [1, 0]])


@pytest.mark.parametrize("kind,p,u", FINITE)
def test_finite_orbit_cost_matches_enumeration(kind, p, u, rng):
    g = _group(kind, p, u)
    mats = group_matrices(kind, p, u)
    for _ in range(50):
        x, h = rng.standard_normal(p), rng.standard_normal(p)
        assert groups.orbit_cost(g, x, h) == pytest.approx(brute_orbit_cost(mats, x, h), abs=1e-9)


@pytest.mark.parametrize("kind,p,u", FINITE)
def test_elements_are_the_group(kind, p, u):
    g = _group(kind, p, u)
    got = sorted(tuple(np.round(e.matrix(g), 12).ravel()) for e in groups.elements(g))
    want = sorted(tuple(np.round(Q, 12).ravel()) for Q in group_matrices(kind, p, u))
    assert got == want
    assert len(got) == g.order


def test_spherical_cost_dense_rotation_grid(rng):
    g = SymmetryGroup("spherical", 2)
    mats = rotations_2d(20_000)
    for _ in range(10):
        x, h = rng.standard_normal(2), rng.standard_normal(2)
        assert groups.orbit_cost(g, x, h) == pytest.approx(brute_orbit_cost(mats, x, h), abs=1e-6)


def test_zonal_cost_dense_angle_grid(rng):
    g = SymmetryGroup("zonal", 3)
    angles = np.linspace(0, 2 * np.pi, 100_000, endpoint=False)
    for _ in range(10):
        x, h = rng.standard_normal(3), rng.standard_normal(3)
        c, s = np.cos(angles), np.sin(angles)
        # rotate x about the z axis by every angle
        rx = np.column_stack([c * x[0] - s * x[1], s * x[0] + c * x[1], np.full_like(c, x[2])])
        brute = np.min(np.sum((rx - h) ** 2, axis=1))
        assert groups.orbit_cost(g, x, h) == pytest.approx(brute, abs=1e-6)


def test_zonal_axis_other_than_z(rng):
    axis = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    g = SymmetryGroup("zonal", 3, tuple(axis))
    x, h = rng.standard_normal(3), rng.standard_normal(3)
    cost = groups.orbit_cost(g, x, h)
    e = groups.argmin_sign(g, x, h, rng)
    assert np.sum((x - e.apply(g, h)) ** 2) == pytest.approx(cost, abs=1e-10)
    # the rotation fixes the axis
    assert_allclose(e.matrix(g) @ axis, axis, atol=1e-12)


ALL = FINITE + [("spherical", 3, None), ("zonal", 3, None), ("spherical", 2, None)]
vec3 = st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda t: abs(t) > 1e-3), min_size=3, max_size=3)


@pytest.mark.parametrize("kind,p,u", ALL)
def test_closest_point_attains_cost(kind, p, u, rng):
    g = _group(kind, p, u)
    for _ in range(50):
        x, h = rng.standard_normal(p), rng.standard_normal(p)
        c = groups.closest_orbit_point(g, x, h)
        assert np.sum((x - c) ** 2) == pytest.approx(groups.orbit_cost(g, x, h), abs=1e-10)
        e = groups.argmin_sign(g, x, h, rng)
        assert_allclose(e.apply(g, h), c, atol=1e-9)
        Q = e.matrix(g)
        assert_allclose(Q @ Q.T, np.eye(p), atol=1e-10)


@pytest.mark.parametrize("kind,p,u", ALL)
def test_closest_point_is_on_orbit(kind, p, u, rng):
    g = _group(kind, p, u)
    x, h = rng.standard_normal((40, p)), rng.standard_normal((40, p))
    c = groups.closest_orbit_points(g, x, h)
    assert_allclose(np.linalg.norm(c, axis=1), np.linalg.norm(h, axis=1), rtol=1e-12)
    if kind == "sign":
        assert_allclose(np.abs(c), np.abs(h))
    if kind == "permutation":
        assert_allclose(np.sort(c, axis=1), np.sort(h, axis=1))
    if kind == "zonal":
        assert_allclose(c[:, 2], h[:, 2], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(vec3, vec3, st.sampled_from(ALL), st.integers(0, 2 ** 32 - 1))
def test_property_left_invariance(x, h, group, seed):
    kind, p, u = group
    g = _group(kind, p, u)
    x, h = np.array(x)[:p], np.array(h)[:p]
    r = np.random.default_rng(seed)
    qx = groups.sample_orbit_uniform(g, x, r)
    assert groups.orbit_cost(g, qx, h) == pytest.approx(groups.orbit_cost(g, x, h), abs=1e-8)


def test_sample_orbit_trivial_and_central(rng):
    g = SymmetryGroup("trivial", 2)
    assert_allclose(groups.sample_orbit_uniform(g, [1, 2], rng), [1, 2])
    g = SymmetryGroup("central", 2)
    draws = groups.sample_orbit_uniform(g, np.tile([1.0, 0.0], (100_000, 1)), rng)
    assert np.mean(draws[:, 0] < 0) == pytest.approx(0.5, abs=0.01)


def test_sample_orbit_spherical_circle(rng):
    g = SymmetryGroup("spherical", 2)
    draws = groups.sample_orbit_uniform(g, np.tile([1.0, 0.0], (100_000, 1)), rng)
    assert_allclose(np.linalg.norm(draws, axis=1), 1.0, rtol=1e-12)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
    angle = np.arctan2(draws[:, 1], draws[:, 0])
    assert kstest(angle, "uniform", args=(-np.pi, 2 * np.pi)).pvalue > 0.01


@pytest.mark.parametrize("kind,p,u", ALL)
def test_haar_invariance(kind, p, u):
    g = _group(kind, p, u)
    r = np.random.default_rng(7)
    h = np.array([1.5, -0.3, 0.8])[:p]
    a = groups.sample_orbit_uniform(g, np.tile(h, (4000, 1)), r)
    Q = groups.argmin_sign(g, r.standard_normal(p), r.standard_normal(p), r).matrix(g)
    b = groups.sample_orbit_uniform(g, np.tile(h, (4000, 1)), r) @ Q.T
    direction = np.array([0.6, -0.3, 0.74])[:p]
    assert ks_2samp(a @ direction, b @ direction).pvalue > 0.01


def test_sign_tie_at_zero():
    g = SymmetryGroup("sign", 2)
    assert list(groups.argmin_sign(g, [0.0, -1.0], [1.0, 1.0]).payload) == [1, -1]
    assert_allclose(groups.closest_orbit_point(g, [0.0, -1.0], [2.0, 3.0]), [2.0, -3.0])


def test_spherical_zero_observation_is_degenerate():
    g = SymmetryGroup("spherical", 2)
    with pytest.raises(DegenerateInputError):
        groups.closest_orbit_point(g, [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DegenerateInputError):
        groups.argmin_sign(g, [0.0, 0.0], [1.0, 0.0])


def test_spherical_sign_uniform_over_stabiliser():
    g = SymmetryGroup("spherical", 3)
    r = np.random.default_rng(3)
    x, h = np.array([0.0, 0.0, 2.0]), np.array([1.0, 0.0, 0.0])
    imgs = np.array([groups.argmin_sign(g, x, h, r).apply(g, [0.0, 1.0, 0.0]) for _ in range(3000)])
    # e2 is orthogonal to h, so its image is uniform on the circle orthogonal to x
    assert_allclose(imgs[:, 2], 0.0, atol=1e-10)
    angle = np.arctan2(imgs[:, 1], imgs[:, 0])
    assert kstest(angle, "uniform", args=(-np.pi, 2 * np.pi)).pvalue > 0.01


def test_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        groups.orbit_cost(SymmetryGroup("central", 2), [1, 2, 3], [1, 2])


@pytest.mark.parametrize("text,dim", [("zonal", 2), ("reflection", 2), ("bogus", 2),
                                      ("reflection:0,0", 2), ("reflection:1,x", 2),
                                      ("central:1,0", 2)])
def test_invalid_groups(text, dim):
    with pytest.raises(InvalidInputError):
        SymmetryGroup.parse(text, dim)


def test_parse_reflection_normalises():
    g = SymmetryGroup.parse("reflection:3,4", 2)
    assert_allclose(g.u, [0.6, 0.8])
    assert g.order == 2 and g.is_finite


def test_large_finite_groups_refuse_enumeration():
    with pytest.raises(InvalidInputError):
        groups.elements(SymmetryGroup("permutation", 8))
    with pytest.raises(InvalidInputError):
        groups.elements(SymmetryGroup("sign", 13))


@pytest.mark.parametrize("kind,p,u", ALL)
def test_canonical_representative_lands_in_domain(kind, p, u, rng):
    g = _group(kind, p, u)
    z = rng.standard_normal((100, p))
    c = groups.canonical_representative(g, z)
    assert np.all(groups.in_fundamental_domain(g, c, atol=1e-10))
    # same orbit as the input
    assert_allclose(np.diag(groups.cost_matrix(g, z, c)), 0.0, atol=1e-10)


def test_group_element_application_matches_matrix(rng):
    g = SymmetryGroup("permutation", 4)
    e = GroupElement("permutation", np.array([2, 0, 3, 1]))
    h = rng.standard_normal(4)
    assert_allclose(e.apply(g, h), e.matrix(g) @ h)
