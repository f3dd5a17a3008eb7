"""Test statistics built on OT ranks and signed-ranks, plus classical baselines.

Two-sample: generalised Wilcoxon rank-sum (quadratic form of the difference of
score-transformed rank means) and the rank-kernel MMD.  One-sample: the
generalised Wilcoxon signed-rank vector ``W_n``, the symmetry statistic
``T_n = MMD^2(empirical signed-ranks, nu_S)`` and its recentred version against
the symmetrised grid.  Hotelling's T^2 (one and two sample) is included as the
Gaussian-optimal baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import ndtr

from . import groups
from .errors import InvalidInputError, NumericalError
from .groups import SymmetryGroup
from .ranks import RankAssignment
from .reference import ReferenceGrid

# covariance matrices above this condition number are refused
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Kernel:
    """Characteristic kernel on R^p.

    gaussian: ``exp(-sigma |u - v|^2)``; laplace: ``exp(-sigma |u - v|_1)``;
    distance: ``(|u|^a + |v|^a - |u - v|^a) / 2`` with ``0 < a < 2``.
    """

    kind: str = "gaussian"
    sigma: float | None = None
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "distance"):
            raise InvalidInputError(f"unknown kernel {self.kind!r}")
        if self.kind in ("gaussian", "laplace") and self.sigma is not None and not self.sigma > 0:
            raise InvalidInputError("kernel bandwidth sigma must be positive")
        if self.kind == "distance" and not 0 < self.alpha < 2:
            raise InvalidInputError("distance kernel exponent must lie in (0, 2)")

    def bandwidth(self, p: int) -> float:
        """sigma, defaulting to 1/(4p) so that K = exp(-|x - y|^2 / (4p))."""
        return self.sigma if self.sigma is not None else 1.0 / (4 * p)

    def gram(self, a, b) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if self.kind == "gaussian":
            return np.exp(-self.bandwidth(a.shape[1]) * cdist(a, b, "sqeuclidean"))
        if self.kind == "laplace":
            return np.exp(-self.bandwidth(a.shape[1]) * cdist(a, b, "cityblock"))
        al = self.alpha
        na = np.linalg.norm(a, axis=1) ** al
        nb = np.linalg.norm(b, axis=1) ** al
        return 0.5 * (na[:, None] + nb[None, :] - cdist(a, b, "euclidean") ** al)

    def describe(self, p: int | None = None) -> dict:
        out = {"kind": self.kind}
        if self.kind == "distance":
            out["alpha"] = self.alpha
        else:
            out["sigma"] = self.sigma if p is None else self.bandwidth(p)
        return out


@dataclass(frozen=True)
class ScoreFunction:
    """Injective score J: ``identity`` or componentwise standard normal CDF."""

    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "normal_cdf"):
            raise InvalidInputError(f"unknown score function {self.kind!r}")

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts if self.kind == "identity" else ndtr(pts)


@dataclass(frozen=True, eq=False)
class ScoreCovariance:
    matrix: np.ndarray
    source: str
    se: np.ndarray | None = None
    m: int | None = None


def _spd_factor(sigma) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if s.shape[0] != s.shape[1] or not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
        raise NumericalError("covariance matrix must be square and symmetric")
    eig = np.linalg.eigvalsh(s)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_CONDITION:
        raise NumericalError(
            f"covariance matrix is singular or ill-conditioned (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
    return np.linalg.cholesky(s)


def quadratic_form(v, sigma) -> float:
    """``v^T sigma^{-1} v`` through a Cholesky solve."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    chol = _spd_factor(sigma)
    z = np.linalg.solve(chol, v)
    return float(z @ z)


def _cov_matrix(cov) -> np.ndarray:
    return cov.matrix if isinstance(cov, ScoreCovariance) else np.atleast_2d(np.asarray(cov, dtype=float))


# ---------------------------------------------------------------- two-sample

def rank_difference(x_ranks, y_ranks, score: ScoreFunction = ScoreFunction()) -> np.ndarray:
    return score(np.atleast_2d(x_ranks)).mean(axis=0) - score(np.atleast_2d(y_ranks)).mean(axis=0)


def ranksum_stat(x_ranks, y_ranks, score: ScoreFunction = ScoreFunction(), sigma_erd=None) -> float:
    """Generalised Wilcoxon rank-sum: ``mn/(m+n) Delta^T Sigma_ERD^{-1} Delta``.

    ``sigma_erd`` defaults to the identity, which gives the unscaled version.
    """
    xr, yr = np.atleast_2d(x_ranks), np.atleast_2d(y_ranks)
    m, n = xr.shape[0], yr.shape[0]
    delta = rank_difference(xr, yr, score)
    sigma = np.eye(delta.size) if sigma_erd is None else _cov_matrix(sigma_erd)
    return m * n / (m + n) * quadratic_form(delta, sigma)


def rank_mmd_stat(x_ranks, y_ranks, score: ScoreFunction = ScoreFunction(),
                  kernel: Kernel = Kernel()) -> float:
    """Rank-kernel MMD ``mn/(m+n) [w1 + w2 - b]``.

    Within-sample means exclude the diagonal (U-statistic form, i != j); the
    cross term averages all m*n pairs.  The value can be slightly negative.
    """
    xs, ys = score(np.atleast_2d(x_ranks)), score(np.atleast_2d(y_ranks))
    m, n = xs.shape[0], ys.shape[0]
    if m < 2 or n < 2:
        raise InvalidInputError("rank MMD needs at least two observations per sample")
    kxx, kyy, kxy = kernel.gram(xs, xs), kernel.gram(ys, ys), kernel.gram(xs, ys)
    w1 = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    w2 = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    b = 2.0 * kxy.sum() / (m * n)
    return m * n / (m + n) * (w1 + w2 - b)


# ---------------------------------------------------------------- one-sample

_SCORE_GROUPS = ("trivial", "permutation")


def _signed_ranks(obj) -> np.ndarray:
    return obj.signed_ranks if isinstance(obj, RankAssignment) else np.atleast_2d(np.asarray(obj, dtype=float))


def signed_rank_stat(assignment, score: ScoreFunction = ScoreFunction()) -> np.ndarray:
    """``W_n = n^{-1/2} sum_i S_n(X_i) J(R_n(X_i))``.

    Non-identity scores are accepted only for groups acting by coordinate
    permutation (trivial, permutation), where ``S J(h) = J(S h)``.
    """
    if score.kind != "identity":
        kind = assignment.group.kind if isinstance(assignment, RankAssignment) else None
        if kind not in _SCORE_GROUPS:
            raise InvalidInputError(
                f"score {score.kind!r} with signed-ranks is restricted to groups {_SCORE_GROUPS}")
    u = score(_signed_ranks(assignment))
    return u.sum(axis=0) / math.sqrt(u.shape[0])


def signed_rank_quadratic(w, sigma_erd1=None) -> float:
    """``W^T Sigma_ERD1^{-1} W``; identity covariance when ``sigma_erd1`` is None."""
    w = np.atleast_1d(w)
    sigma = np.eye(w.size) if sigma_erd1 is None else _cov_matrix(sigma_erd1)
    return quadratic_form(w, sigma)


def gaussian_mean_embedding(u, sigma: float) -> np.ndarray:
    """``E_U exp(-sigma |u - U|^2)`` for U ~ N(0, I_p), row-wise."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    p = u.shape[1]
    return (2 * sigma + 1) ** (-p / 2) * np.exp(-sigma / (2 * sigma + 1) * np.sum(u * u, axis=1))


def gaussian_self_expectation(sigma: float, p: int) -> float:
    """``E exp(-sigma |U - U'|^2)`` for independent U, U' ~ N(0, I_p)."""
    return (4 * sigma + 1) ** (-p / 2)


def symmetry_mmd_stat(signed_ranks, kernel: Kernel = Kernel(), reference_samples=None) -> float:
    """``T_n = MMD^2(n^{-1} sum_i delta_{U_i}, nu_S)``.

    With a Gaussian kernel and nu_S = N(0, I) the nu_S expectations are closed
    form.  Passing ``reference_samples`` (draws from nu_S) replaces both
    expectations by Monte Carlo averages, which is required for other kernels.
    """
    u = _signed_ranks(signed_ranks)
    n, p = u.shape
    within = kernel.gram(u, u).mean()
    if reference_samples is None:
        if kernel.kind != "gaussian":
            raise InvalidInputError(
                "closed-form nu_S expectations need the gaussian kernel; pass reference_samples")
        s = kernel.bandwidth(p)
        return within + gaussian_self_expectation(s, p) - 2.0 * gaussian_mean_embedding(u, s).mean()
    ref = np.atleast_2d(np.asarray(reference_samples, dtype=float))
    kr = kernel.gram(ref, ref)
    m = ref.shape[0]
    ref_self = (kr.sum() - np.trace(kr)) / (m * (m - 1)) if m > 1 else kr.mean()
    return within + ref_self - 2.0 * kernel.gram(u, ref).mean()


class RecenteredMMD:
    """``n MMD^2(n^{-1} sum_i delta_{U_i}, nu_{n,S})`` for a finite group.

    ``nu_{n,S}`` puts mass ``1/(n|G|)`` on every ``Q h_j``; the atom-atom mean is
    computed once at construction.
    """

    def __init__(self, grid, g: SymmetryGroup, kernel: Kernel = Kernel()):
        if not g.is_finite:
            raise InvalidInputError(
                f"recentred statistic needs a finite group; {g.kind!r} is infinite")
        H = grid.points if isinstance(grid, ReferenceGrid) else np.atleast_2d(grid)
        self.kernel = kernel
        self.atoms = groups.orbit_points(g, H).reshape(-1, H.shape[1])
        self.atom_mean = kernel.gram(self.atoms, self.atoms).mean()

    def __call__(self, signed_ranks) -> float:
        u = _signed_ranks(signed_ranks)
        n = u.shape[0]
        k = self.kernel
        return n * (k.gram(u, u).mean() + self.atom_mean - 2.0 * k.gram(u, self.atoms).mean())


def recentered_mmd_stat(assignment, kernel: Kernel, grid, g: SymmetryGroup) -> float:
    return RecenteredMMD(grid, g, kernel)(assignment)


# ---------------------------------------------------------------- Hotelling

def hotelling_one_sample(x) -> float:
    """``n xbar^T S^{-1} xbar`` with S the unbiased sample covariance."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = x.shape
    if n <= p:
        raise InvalidInputError(f"one-sample T^2 needs n > p (n = {n}, p = {p})")
    xbar = x.mean(axis=0)
    s = np.atleast_2d(np.cov(x, rowvar=False))
    return n * quadratic_form(xbar, s)


def hotelling_two_sample(x, y) -> float:
    """``mn/(m+n) (xbar - ybar)^T S^{-1} (xbar - ybar)``, S the pooled within-sample covariance."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    m, p = x.shape
    n = y.shape[0]
    if y.shape[1] != p:
        raise InvalidInputError("samples have different dimensions")
    if m + n <= p + 1 or m < 1 or n < 1:
        raise InvalidInputError(f"two-sample T^2 needs m + n > p + 1 (m = {m}, n = {n}, p = {p})")
    scatter = np.zeros((p, p))
    for z in (x, y):
        c = z - z.mean(axis=0)
        scatter += c.T @ c
    pooled = scatter / (m + n - 2)
    d = x.mean(axis=0) - y.mean(axis=0)
    return m * n / (m + n) * quadratic_form(d, pooled)


# ---------------------------------------------------------------- ERD covariance

def covariance_se(draws, max_entries: int = 50_000_000) -> np.ndarray | None:
    """Standard errors of sample covariance entries (None when too large to form)."""
    m, p = draws.shape
    if m < 2 or m * p * p > max_entries:
        return None
    c = draws - draws.mean(axis=0)
    return (c[:, :, None] * c[:, None, :]).std(axis=0, ddof=1) / math.sqrt(m)


def erd_covariance(nu, score: ScoreFunction = ScoreFunction(), group: SymmetryGroup | None = None,
                   mode: str = "closed_form", m: int = 100_000,
                   rng: np.random.Generator | None = None, p: int | None = None) -> ScoreCovariance:
    """Covariance of ``J(H)`` (two-sample ERD) or ``S J(H)`` (one-sample ERD1).

    ``nu`` is a ReferenceGrid (its empirical law) or ``"standard_normal"``;
    for ERD1 with the analytic base, ``"standard_normal"`` denotes nu_S itself.
    Modes: ``closed_form`` (N(0, I) with identity or normal-CDF score),
    ``empirical`` (exact moments of a grid, symmetrised over the group) and
    ``monte_carlo`` (``m`` draws; standard errors reported).
    """
    if isinstance(nu, ReferenceGrid):
        p = nu.p
    elif nu != "standard_normal":
        raise InvalidInputError(f"unsupported reference {nu!r}")
    elif p is None:
        p = group.dim if group is not None else None
        if p is None:
            raise InvalidInputError("dimension p required for an analytic reference")

    if mode == "closed_form":
        if nu != "standard_normal" or isinstance(nu, ReferenceGrid):
            raise InvalidInputError("closed form is available for the standard normal reference only")
        if score.kind == "identity":
            return ScoreCovariance(np.eye(p), "closed_form")
        if group is None or group.kind == "trivial":
            return ScoreCovariance(np.eye(p) / 12.0, "closed_form")
        raise InvalidInputError("no closed form for a normal-CDF score combined with a symmetry group")

    if mode == "empirical":
        if not isinstance(nu, ReferenceGrid):
            raise InvalidInputError("empirical mode needs a grid")
        js = score(nu.points)
        if group is None or group.kind == "trivial":
            return ScoreCovariance(np.atleast_2d(np.cov(js, rowvar=False, ddof=0)), "empirical")
        if group.is_finite:
            atoms = groups.orbit_points(group, js).reshape(-1, p)
            return ScoreCovariance(np.atleast_2d(np.cov(atoms, rowvar=False, ddof=0)), "empirical")
        if group.kind == "spherical":
            return ScoreCovariance(np.eye(p) * np.mean(np.sum(js * js, axis=1)) / p, "empirical")
        mode = "monte_carlo"

    if mode == "monte_carlo":
        rng = np.random.default_rng() if rng is None else rng
        if isinstance(nu, ReferenceGrid):
            h = nu.points[rng.integers(0, nu.n, size=m)]
        else:
            h = rng.standard_normal((m, p))
        if isinstance(nu, str) and group is not None and score.kind != "identity":
            raise InvalidInputError("analytic nu_S with a non-identity score is not supported")
        draws = score(h)
        if group is not None and not isinstance(nu, str):
            draws = groups.sample_orbit_uniform(group, draws, rng)
        cov = np.atleast_2d(np.cov(draws, rowvar=False))
        return ScoreCovariance(cov, f"monte_carlo({m})", covariance_se(draws), m)
    raise InvalidInputError(f"unknown covariance mode {mode!r}")
