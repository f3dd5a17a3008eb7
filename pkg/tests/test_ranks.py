import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import chisquare

from otranks import groups
from otranks.errors import InvalidInputError
from otranks.groups import SymmetryGroup
from otranks.ranks import pooled_rank_map, rank_map, signed_rank_map
from otranks.reference import ReferenceGrid, default_symmetry_grid, make_grid
from oracles import (brute_assignment, brute_joint_cost, brute_signed_rank_cost,
                     classical_signed_ranks, group_matrices)


def test_one_dimensional_ranks():
    res = rank_map([[0.3], [0.1], [0.2]], [[1 / 3], [2 / 3], [1.0]])
    assert_allclose(res.absolute_ranks.ravel(), [1.0, 1 / 3, 2 / 3])
    assert_allclose(res.signed_ranks, res.absolute_ranks)


def test_single_observation():
    res = rank_map([[5.0, -1.0]], [[0.2, 0.3]])
    assert_allclose(res.absolute_ranks, [[0.2, 0.3]])


def test_brute_force_six_points(rng):
    x, h = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    res = rank_map(x, h)
    C = ((x[:, None, :] - h[None, :, :]) ** 2).sum(-1)
    assert res.total_cost == pytest.approx(brute_assignment(C)[0], abs=1e-12)


def test_sign_group_one_dimension_example():
    grid = np.array([[0.5], [1.0]])
    res = signed_rank_map([[-0.5], [0.2]], grid, SymmetryGroup("sign", 1))
    assert_allclose(res.absolute_ranks.ravel(), [1.0, 0.5])
    assert [int(s.payload[0]) for s in res.signs] == [-1, 1]
    assert_allclose(res.signed_ranks.ravel(), [-1.0, 0.5])


@pytest.mark.parametrize("seed", range(20))
def test_one_dimensional_reduction_is_classical(seed):
    r = np.random.default_rng(seed)
    n = 5 + seed
    x = r.standard_normal(n) * r.uniform(0.5, 3)
    grid = (np.arange(1, n + 1) / n)[:, None]
    res = signed_rank_map(x[:, None], grid, SymmetryGroup("central", 1), r)
    sign, rank, signed = classical_signed_ranks(x)
    assert_array_equal([int(s.payload) for s in res.signs], sign)
    assert_array_equal(res.absolute_ranks.ravel(), rank)
    assert_array_equal(res.signed_ranks.ravel(), signed)


def test_trivial_group_equals_rank_map(rng):
    x, h = rng.standard_normal((30, 3)), rng.standard_normal((30, 3))
    a = rank_map(x, h)
    b = signed_rank_map(x, h, SymmetryGroup("trivial", 3))
    assert_array_equal(a.permutation, b.permutation)
    assert_array_equal(a.signed_ranks, b.signed_ranks)


@pytest.mark.parametrize("kind,u", [("central", None), ("sign", None), ("permutation", None),
                                    ("reflection", (1.0, 2.0))])
def test_joint_enumeration_small(kind, u, rng):
    p = 2
    g = SymmetryGroup(kind, p, u)
    mats = group_matrices(kind, p, u)
    for _ in range(5):
        n = 4
        x = rng.standard_normal((n, p))
        grid = default_symmetry_grid(g, n, int(rng.integers(1 << 30)))
        res = signed_rank_map(x, grid, g, rng)
        assert res.total_cost == pytest.approx(brute_joint_cost(mats, x, grid.points), abs=1e-12)


def test_central_five_points_joint(rng):
    g = SymmetryGroup("central", 2)
    x = rng.standard_normal((5, 2))
    grid = default_symmetry_grid(g, 5, 11)
    res = signed_rank_map(x, grid, g)
    assert res.total_cost == pytest.approx(
        brute_joint_cost(group_matrices("central", 2), x, grid.points), abs=1e-12)


def test_rank_invariants(rng):
    g = SymmetryGroup("sign", 3)
    x = rng.standard_normal((40, 3))
    grid = default_symmetry_grid(g, 40, 2)
    res = signed_rank_map(x, grid, g, rng)
    assert_array_equal(np.sort(res.permutation), np.arange(40))
    per_row = [groups.orbit_cost(g, xi, hi) for xi, hi in zip(x, res.absolute_ranks)]
    assert_allclose(np.sum((x - res.signed_ranks) ** 2, axis=1), per_row, atol=1e-12)
    assert res.total_cost == pytest.approx(sum(per_row), abs=1e-9)
    for s, h, u in zip(res.signs, res.absolute_ranks, res.signed_ranks):
        assert_allclose(s.apply(g, h), u)


def test_cost_invariant_to_orbit_replacement(rng):
    g = SymmetryGroup("permutation", 3)
    x = rng.standard_normal((25, 3))
    grid = default_symmetry_grid(g, 25, 3)
    moved = groups.sample_orbit_uniform(g, grid.points, rng)
    a = signed_rank_map(x, grid, g)
    b = signed_rank_map(x, ReferenceGrid(moved, "custom"), g, validate=False)
    assert b.total_cost == pytest.approx(a.total_cost, abs=1e-10)


def test_orthogonal_equivariance(rng):
    from scipy.stats import ortho_group
    O = ortho_group.rvs(2, random_state=1)
    x = rng.standard_normal((60, 2))
    h = rng.standard_normal((60, 2))
    a = rank_map(x, h)
    b = rank_map(x @ O.T, h @ O.T)
    assert_array_equal(a.permutation, b.permutation)
    assert_allclose(b.signed_ranks, a.signed_ranks @ O.T, atol=1e-12)
    g = SymmetryGroup("spherical", 2)
    grid = default_symmetry_grid(g, 60, 4)
    a = signed_rank_map(x, grid, g)
    b = signed_rank_map(x @ O.T, grid, g)
    assert_allclose(b.signed_ranks, a.signed_ranks @ O.T, atol=1e-12)


def test_absolute_ranks_uniform_under_symmetry():
    g = SymmetryGroup("central", 2)
    grid = default_symmetry_grid(g, 4, 9)
    r = np.random.default_rng(0)
    counts = {}
    first = np.zeros(4)
    for _ in range(10_000):
        x = r.standard_cauchy((4, 2))
        perm = tuple(signed_rank_map(x, grid, g, compute_signs=False, validate=False).permutation)
        counts[perm] = counts.get(perm, 0) + 1
        first[perm[0]] += 1
    assert len(counts) == 24
    freq = [counts.get(p, 0) for p in itertools.permutations(range(4))]
    assert chisquare(freq).pvalue > 0.01
    sd = np.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(first - 2500) < 3 * sd)


def test_signed_ranks_converge_to_data():
    g = SymmetryGroup("spherical", 2)
    r = np.random.default_rng(1)
    med = []
    for n in (50, 200, 800):
        errs = []
        for k in range(9):
            x = r.standard_normal((n, 2))
            res = signed_rank_map(x, default_symmetry_grid(g, n, k), g, compute_signs=False)
            errs.append(np.mean(np.linalg.norm(res.signed_ranks - x, axis=1)))
        med.append(np.median(errs))
    assert med[0] > med[1] > med[2]
    assert med[2] < 0.25


def test_pooled_ranks_order_insensitive(rng):
    x, y = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    grid = make_grid("gaussian", 7, 2, seed=1)
    xr, yr = pooled_rank_map(x, y, grid)
    yr2, xr2 = pooled_rank_map(y, x, grid)
    assert_array_equal(xr, xr2)
    assert_array_equal(yr, yr2)


def test_pooled_ranks_tiny():
    xr, yr = pooled_rank_map([[0.1]], [[0.9]], [[0.5], [1.0]])
    assert_allclose(xr, [[0.5]])
    assert_allclose(yr, [[1.0]])


def test_pooled_ranks_brute(rng):
    x, y = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    h = rng.standard_normal((6, 2))
    z = np.vstack([x, y])
    xr, yr = pooled_rank_map(x, y, h)
    C = ((z[:, None, :] - h[None]) ** 2).sum(-1)
    _, perm = brute_assignment(C)
    assert_allclose(np.vstack([xr, yr]), h[perm])


def test_errors(rng):
    g = SymmetryGroup("central", 2)
    grid = default_symmetry_grid(g, 3, 1)
    with pytest.raises(InvalidInputError):
        signed_rank_map(rng.standard_normal((4, 2)), grid, g)
    with pytest.raises(InvalidInputError):
        signed_rank_map([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]], grid, g)
    with pytest.raises(InvalidInputError):
        signed_rank_map(rng.standard_normal((3, 2)), [[1, 0], [-1, 0], [0, 1]], g)
    with pytest.raises(InvalidInputError):
        rank_map(np.zeros((0, 2)), np.zeros((0, 2)))
