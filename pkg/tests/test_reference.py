import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import ks_2samp

from otranks import groups
from otranks.errors import InvalidInputError
from otranks.groups import SymmetryGroup
from otranks.reference import (ReferenceGrid, SymmetrizedReference, center_outward_grid,
                               check_fundamental_domain, default_symmetry_grid, make_grid,
                               min_orbit_separation, read_grid_csv, sphere_directions,
                               symmetrized_moments, write_grid_csv)


def test_grid_is_deterministic():
    a = make_grid("gaussian", 3, 2, seed=7)
    b = make_grid("gaussian", 3, 2, seed=7)
    assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, make_grid("gaussian", 3, 2, seed=8).points)


@pytest.mark.parametrize("p", [1, 2, 5])
def test_chi_norm_axis_rows(p):
    grid = make_grid("chi_norm_axis", 50, p, seed=1)
    assert np.all(grid.points[:, 1:] == 0)
    assert np.all(grid.points[:, 0] > 0)
    assert grid.fundamental_domain_for == "spherical"


def test_sorted_gaussian_is_ordered():
    grid = make_grid("sorted_gaussian", 10_000, 2, seed=1)
    assert np.all(grid.points[:, 0] <= grid.points[:, 1])


def test_points_are_read_only():
    grid = make_grid("gaussian", 3, 2, seed=1)
    with pytest.raises(ValueError):
        grid.points[0, 0] = 1.0


def test_unknown_generator():
    with pytest.raises(InvalidInputError):
        make_grid("nope", 3, 2, seed=0)


@pytest.mark.parametrize("kind,p", [("central", 2), ("sign", 3), ("permutation", 3),
                                    ("spherical", 2), ("zonal", 3), ("trivial", 2)])
def test_default_symmetry_grid_meets_fundamental_domain(kind, p):
    g = SymmetryGroup(kind, p)
    grid = default_symmetry_grid(g, 300, seed=3)
    assert check_fundamental_domain(grid, g) > 0
    assert np.all(groups.in_fundamental_domain(g, grid.points, atol=1e-10))


def test_reflection_grid():
    g = SymmetryGroup.parse("reflection:1,1", 2)
    grid = default_symmetry_grid(g, 200, seed=3)
    assert np.all(grid.points @ g.u >= 0)
    assert min_orbit_separation(g, grid.points) > 0


@pytest.mark.parametrize("kind,p", [("central", 2), ("sign", 2), ("permutation", 3), ("spherical", 3)])
def test_symmetrised_default_grid_is_standard_normal(kind, p):
    g = SymmetryGroup(kind, p)
    grid = default_symmetry_grid(g, 4000, seed=5)
    draws = groups.sample_orbit_uniform(g, grid.points, np.random.default_rng(1))
    ref = np.random.default_rng(2).standard_normal((4000, p))
    for j in range(p):
        assert ks_2samp(draws[:, j], ref[:, j]).pvalue > 0.01


def test_fundamental_domain_violation_is_an_error():
    g = SymmetryGroup("central", 2)
    grid = ReferenceGrid(np.array([[1.0, 2.0], [-1.0, -2.0], [0.5, 0.1]]), "custom")
    with pytest.raises(InvalidInputError):
        check_fundamental_domain(grid, g)


def test_near_coincident_orbits_warn(caplog):
    g = SymmetryGroup("central", 1)
    grid = ReferenceGrid(np.array([[1.0], [1.0 + 1e-10]]), "custom")
    with caplog.at_level(logging.WARNING):
        check_fundamental_domain(grid, g)
    assert "nearly coincide" in caplog.text


def test_center_outward_radii():
    grid = center_outward_grid(3, 4, 0, 2, seed=0)
    radii = np.round(np.linalg.norm(grid.points, axis=1), 12)
    values, counts = np.unique(radii, return_counts=True)
    assert_allclose(values, [0.25, 0.5, 0.75])
    assert list(counts) == [4, 4, 4]


def test_center_outward_single_point():
    grid = center_outward_grid(1, 1, 0, 2, seed=0)
    assert grid.n == 1
    assert np.linalg.norm(grid.points[0]) == pytest.approx(0.5)


def test_center_outward_extras():
    grid = center_outward_grid(3, 4, 1, 2, seed=0)
    radii = np.linalg.norm(grid.points, axis=1)
    assert grid.n == 13
    assert np.sum(np.isclose(radii, 1 / 8)) == 1
    assert np.unique(grid.points, axis=0).shape[0] == 13


def test_center_outward_errors():
    with pytest.raises(InvalidInputError):
        center_outward_grid(2, 3, 4, 2, seed=0)
    with pytest.raises(InvalidInputError):
        center_outward_grid(2, 3, 0, 1, seed=0)


@pytest.mark.parametrize("p", [2, 3, 5])
def test_sphere_directions_unit_and_distinct(p):
    s = sphere_directions(64, p)
    assert_allclose(np.linalg.norm(s, axis=1), 1.0)
    assert np.unique(np.round(s, 10), axis=0).shape[0] == 64
    assert np.all(np.abs(s.mean(axis=0)) < 0.2)


def test_symmetrized_moments_central(rng):
    ref = SymmetrizedReference("standard_normal", SymmetryGroup("central", 2))
    out = symmetrized_moments(ref, 100_000, rng)
    assert_allclose(out["cov"], np.eye(2), atol=0.02)


def test_symmetrized_moments_sign_centres(rng):
    g = SymmetryGroup("sign", 3)
    grid = make_grid("quotient_gaussian", 500, 3, seed=1, group=g)
    out = symmetrized_moments(SymmetrizedReference(grid, g), 20_000, rng)
    assert np.all(np.abs(out["mean"]) < 3 * out["mean_se"])
    assert out["cov_se"].shape == (3, 3)


def test_symmetrized_moments_permutation_exchangeable(rng):
    g = SymmetryGroup("permutation", 2)
    grid = make_grid("sorted_gaussian", 1000, 2, seed=1)
    draws = symmetrized_moments(SymmetrizedReference(grid, g), 20_000, rng)["samples"]
    assert ks_2samp(draws[:, 0], draws[:, 1]).pvalue > 0.01


def test_grid_csv_round_trip(tmp_path):
    grid = make_grid("sorted_gaussian", 20, 3, seed=4)
    path = tmp_path / "grid.csv"
    write_grid_csv(grid, path)
    assert path.read_text().splitlines()[0] == "h1,h2,h3"
    back = read_grid_csv(path, SymmetryGroup("permutation", 3))
    assert_array_equal(back.points, grid.points)


def test_grid_csv_rejects_orbit_collision(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("h1,h2\n1,2\n2,1\n")
    with pytest.raises(InvalidInputError):
        read_grid_csv(path, SymmetryGroup("permutation", 2))
