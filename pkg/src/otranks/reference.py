"""Reference grids h_1..h_n discretising a reference distribution nu.

Grids are drawn once per experiment and then held fixed.  Symmetry tests use
grids living on a fundamental domain of the group (no two rows on one orbit),
obtained by pushing i.i.d. N(0, I) draws through the group's quotient map, so
that the symmetrised reference is exactly N(0, I).
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import norm, qmc

from . import groups
from .errors import InvalidInputError
from .groups import SymmetryGroup

log = logging.getLogger(__name__)

GENERATORS = ("gaussian", "uniform_cube", "spherical_uniform", "chi_norm_axis",
              "sorted_gaussian", "quotient_gaussian", "center_outward", "custom")

# orbit distance below which two grid points count as numerically coincident
NEAR_COINCIDENT = 1e-8


@dataclass(frozen=True, eq=False)
class ReferenceGrid:
    points: np.ndarray
    generator: str
    seed: int | None = None
    fundamental_domain_for: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidInputError("grid must be a nonempty n x p matrix")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class SymmetrizedReference:
    """Law of ``S H`` with ``S ~ Uniform(G)``.

    ``base`` is either a ReferenceGrid (the empirical version, nu_{n,S}) or the
    string ``"standard_normal"`` for the analytic nu_S = N(0, I_p).
    """

    base: ReferenceGrid | str
    group: SymmetryGroup

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if isinstance(self.base, ReferenceGrid):
            H = self.base.points[rng.integers(0, self.base.n, size=m)]
        elif self.base == "standard_normal":
            H = rng.standard_normal((m, self.group.dim))
        else:
            raise InvalidInputError(f"unknown analytic base {self.base!r}")
        return groups.sample_orbit_uniform(self.group, H, rng)


def _draw(generator: str, n: int, p: int, rng: np.random.Generator, group: SymmetryGroup | None):
    if generator == "gaussian":
        return rng.standard_normal((n, p))
    if generator == "uniform_cube":
        return rng.random((n, p))
    if generator == "spherical_uniform":
        z = rng.standard_normal((n, p))
        direction = z / np.linalg.norm(z, axis=1, keepdims=True)
        return direction * rng.random((n, 1))
    if generator == "chi_norm_axis":
        out = np.zeros((n, p))
        out[:, 0] = np.linalg.norm(rng.standard_normal((n, p)), axis=1)
        return out
    if generator == "sorted_gaussian":
        return np.sort(rng.standard_normal((n, p)), axis=1)
    if generator == "quotient_gaussian":
        if group is None:
            raise InvalidInputError("quotient_gaussian needs a symmetry group")
        return groups.canonical_representative(group, rng.standard_normal((n, p)))
    raise InvalidInputError(f"unknown grid generator {generator!r}; expected one of {GENERATORS}")


_DOMAIN_OF = {"chi_norm_axis": "spherical", "sorted_gaussian": "permutation"}


def make_grid(generator: str, n: int, p: int, seed: int,
              group: SymmetryGroup | None = None) -> ReferenceGrid:
    """I.i.d. grid from a named reference distribution, fixed by ``seed``.

    ``quotient_gaussian`` pushes N(0, I) through ``group``'s quotient map;
    ``chi_norm_axis`` and ``sorted_gaussian`` are its spherical and
    permutation instances.  Duplicate rows trigger one regeneration.
    """
    if n < 1 or p < 1:
        raise InvalidInputError("grid size and dimension must be positive")
    if generator == "center_outward":
        raise InvalidInputError("use center_outward_grid for the center-outward construction")
    if group is not None and group.dim != p:
        raise InvalidInputError("group dimension does not match grid dimension")
    rng = np.random.default_rng(seed)
    domain = _DOMAIN_OF.get(generator, group.kind if generator == "quotient_gaussian" else None)
    check = group if group is not None else (SymmetryGroup(domain, p) if domain else None)
    for _ in range(2):
        pts = _draw(generator, n, p, rng, group)
        if _rows_distinct(pts, check):
            return ReferenceGrid(pts, generator, seed, domain)
    raise InvalidInputError(f"generator {generator!r} produced coincident grid points twice")


def _rows_distinct(pts: np.ndarray, group: SymmetryGroup | None) -> bool:
    if pts.shape[0] < 2:
        return True
    if group is None:
        return bool(np.min(pdist(pts, "sqeuclidean")) > 0)
    return min_orbit_separation(group, pts) > 0


def min_orbit_separation(g: SymmetryGroup, pts) -> float:
    """``min_{i != j} c(h_i, h_j)``; positive iff no two rows share an orbit."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] < 2:
        return math.inf
    if g.kind in ("central", "reflection"):
        c = groups.cost_matrix(g, pts, pts)
        np.fill_diagonal(c, np.inf)
        return float(c.min())
    return float(np.min(pdist(groups.quotient_features(g, pts), "sqeuclidean")))


def check_fundamental_domain(grid: ReferenceGrid, g: SymmetryGroup) -> float:
    """Raise if two grid rows lie on the same orbit of ``g``; return the separation."""
    if grid.p != g.dim:
        raise InvalidInputError(f"grid dimension {grid.p} does not match group dimension {g.dim}")
    sep = min_orbit_separation(g, grid.points)
    if sep <= 0:
        raise InvalidInputError(
            f"grid violates the fundamental-domain condition for the {g.kind} group "
            "(two points share an orbit)")
    if math.sqrt(sep) < NEAR_COINCIDENT:
        log.warning("grid orbits nearly coincide (min orbit distance %.3g); costs are ill-conditioned",
                    math.sqrt(sep))
    return sep


def sphere_directions(k: int, p: int) -> np.ndarray:
    """``k`` deterministic, roughly regular unit vectors in R^p.

    p = 2: equally spaced angles.  p = 3: Fibonacci lattice.  p > 3: a scrambled
    Halton sequence mapped through the inverse normal CDF and normalised.
    """
    if p == 2:
        t = 2 * np.pi * np.arange(k) / k
        return np.column_stack([np.cos(t), np.sin(t)])
    if p == 3:
        i = np.arange(k) + 0.5
        z = 1 - 2 * i / k
        phi = np.pi * (1 + 5 ** 0.5) * i
        r = np.sqrt(1 - z ** 2)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    u = qmc.Halton(d=p, scramble=True, seed=0).random(k)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def center_outward_grid(n_R: int, n_S: int, n_0: int, p: int, seed: int) -> ReferenceGrid:
    """Regular grid on the unit ball: radii r/(n_R+1) times n_S directions.

    The ``n_0`` extra points are a without-replacement sample of the
    directions scaled to radius 1/(2(n_R+1)).
    """
    if n_R < 1 or n_S < 1 or n_0 < 0:
        raise InvalidInputError("need n_R >= 1, n_S >= 1, n_0 >= 0")
    if p < 2:
        raise InvalidInputError("center-outward grids need p >= 2")
    if n_0 > n_S:
        raise InvalidInputError(f"n_0 = {n_0} exceeds the number of directions n_S = {n_S}")
    s = sphere_directions(n_S, p)
    radii = np.arange(1, n_R + 1) / (n_R + 1)
    pts = (radii[:, None, None] * s[None]).reshape(-1, p)
    if n_0:
        rng = np.random.default_rng(seed)
        extra = s[rng.choice(n_S, size=n_0, replace=False)] / (2 * (n_R + 1))
        pts = np.vstack([pts, extra])
    return ReferenceGrid(pts, "center_outward", seed, None)


def default_symmetry_grid(g: SymmetryGroup, n: int, seed: int) -> ReferenceGrid:
    """Grid on a fundamental domain of ``g`` whose symmetrisation is N(0, I)."""
    if g.kind == "spherical":
        return make_grid("chi_norm_axis", n, g.dim, seed)
    if g.kind == "permutation":
        return make_grid("sorted_gaussian", n, g.dim, seed)
    return make_grid("quotient_gaussian", n, g.dim, seed, group=g)


def symmetrized_moments(ref: SymmetrizedReference, m: int, rng: np.random.Generator) -> dict:
    """Monte Carlo draws of ``S H`` with mean/covariance estimates and standard errors."""
    if m < 1:
        raise InvalidInputError("need at least one draw")
    draws = ref.sample(m, rng)
    mean = draws.mean(axis=0)
    ddof = 1 if m > 1 else 0
    cov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=ddof))
    centered = draws - mean
    cov_se = None
    if m > 1 and m * ref.group.dim ** 2 <= 50_000_000:
        # SE of each covariance entry from the spread of the centred products
        prods = centered[:, :, None] * centered[:, None, :]
        cov_se = prods.std(axis=0, ddof=1) / math.sqrt(m)
    return {
        "samples": draws,
        "mean": mean,
        "mean_se": draws.std(axis=0, ddof=ddof) / math.sqrt(m),
        "cov": cov,
        "cov_se": cov_se,
    }


def read_grid_csv(path, group: SymmetryGroup | None = None) -> ReferenceGrid:
    """Load a custom grid (header ``h1,...,hp``); fundamental domain checked if ``group``."""
    from .ingest import load_sample_csv
    pts = load_sample_csv(path)
    grid = ReferenceGrid(pts, "custom", None, group.kind if group is not None else None)
    if group is not None:
        check_fundamental_domain(grid, group)
    elif grid.n > 1 and np.min(pdist(pts, "sqeuclidean")) == 0:
        raise InvalidInputError(f"{path}: grid has duplicate rows")
    return grid


def write_grid_csv(grid: ReferenceGrid, path) -> None:
    """Write ``grid`` to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_rows(grid, path)
        return
    with Path(path).open("w", newline="") as fh:
        _write_rows(grid, fh)


def _write_rows(grid: ReferenceGrid, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"h{j + 1}" for j in range(grid.p)])
    w.writerows([repr(float(v)) for v in row] for row in grid.points)
