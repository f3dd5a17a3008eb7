"""End-to-end tests: ranks -> statistic -> calibration -> TestReport.

All randomness derives from one integer seed: a grid seed and a null seed are
split off it, plus a stream for random sign selection.
"""
from __future__ import annotations

import numpy as np

from . import calibration as cal
from . import statistics as st
from .calibration import NullCache, NullModel, TestReport
from .errors import InvalidInputError
from .groups import SymmetryGroup
from .ranks import pooled_rank_map, signed_rank_map
from .reference import ReferenceGrid, default_symmetry_grid, make_grid


def derived_seeds(seed: int) -> tuple[int, int, int]:
    """(grid seed, null seed, sign seed) split deterministically off ``seed``."""
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def _calibrate(name, value, model: NullModel | None, calibration, dof, cache, threads, extra, seed):
    value = float(value)
    if calibration == "asymptotic":
        return TestReport(name, value, cal.asymptotic_pvalue_chisq(max(value, 0.0), dof),
                          f"asymptotic_chisq({dof})", seed=seed, extra=extra)
    if calibration != "mc":
        raise InvalidInputError(f"unknown calibration {calibration!r}")
    null = cal.simulate_null(model, threads=threads, cache=cache)
    return TestReport(name, value, cal.p_value(value, null), f"monte_carlo({model.B})",
                      B=model.B, seed=seed, null_quantiles=cal.null_summary(null), extra=extra)


def _two_sample_grid(grid, N, p, seed):
    if grid is None:
        return make_grid("gaussian", N, p, seed)
    if grid.n != N or grid.p != p:
        raise InvalidInputError(f"grid is {grid.n}x{grid.p}, pooled sample is {N}x{p}")
    return grid


def _erd(grid: ReferenceGrid, score, group=None):
    if grid.generator in ("gaussian", "chi_norm_axis", "sorted_gaussian", "quotient_gaussian") \
            and (score.kind == "identity" or group is None):
        return st.erd_covariance("standard_normal", score, group, "closed_form", p=grid.p)
    return st.erd_covariance(grid, score, group, "empirical")


def ranksum_test(x, y, *, grid: ReferenceGrid | None = None, score=st.ScoreFunction(),
                 sigma_erd=None, B: int = cal.DEFAULT_B, seed: int = 0, calibration: str = "mc",
                 cache: NullCache | None = None, threads: int = 1) -> TestReport:
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    m, p = x.shape
    grid_seed, null_seed, _ = derived_seeds(seed)
    grid = _two_sample_grid(grid, m + y.shape[0], p, grid_seed)
    sigma = _erd(grid, score) if sigma_erd is None else sigma_erd
    xr, yr = pooled_rank_map(x, y, grid)
    value = st.ranksum_stat(xr, yr, score, sigma)
    model = NullModel("ranksum", grid, B, null_seed, m=m, score=score, sigma=sigma.matrix)
    extra = {"erd_covariance": sigma.source, "delta": st.rank_difference(xr, yr, score)}
    return _calibrate("ot_ranksum", value, model, calibration, p, cache, threads, extra, seed)


def rank_mmd_test(x, y, *, grid: ReferenceGrid | None = None, score=st.ScoreFunction(),
                  kernel=st.Kernel(), B: int = cal.DEFAULT_B, seed: int = 0,
                  cache: NullCache | None = None, threads: int = 1) -> TestReport:
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    m, p = x.shape
    if m < 2 or y.shape[0] < 2:
        raise InvalidInputError("rank MMD needs at least two observations per sample")
    grid_seed, null_seed, _ = derived_seeds(seed)
    grid = _two_sample_grid(grid, m + y.shape[0], p, grid_seed)
    xr, yr = pooled_rank_map(x, y, grid)
    value = st.rank_mmd_stat(xr, yr, score, kernel)
    model = NullModel("rank_mmd", grid, B, null_seed, m=m, score=score, kernel=kernel)
    return _calibrate("ot_rank_mmd", value, model, "mc", p, cache, threads,
                      {"kernel": kernel.describe(p)}, seed)


def _symmetry_grid(grid, g: SymmetryGroup, n: int, seed: int):
    if grid is None:
        return default_symmetry_grid(g, n, seed)
    if grid.n != n or grid.p != g.dim:
        raise InvalidInputError(f"grid is {grid.n}x{grid.p}, sample is {n}x{g.dim}")
    return grid


def signed_rank_test(x, group: SymmetryGroup, *, grid: ReferenceGrid | None = None,
                     score=st.ScoreFunction(), sigma_erd1=None, B: int = cal.DEFAULT_B,
                     seed: int = 0, calibration: str = "mc", cache: NullCache | None = None,
                     threads: int = 1) -> TestReport:
    """Generalised Wilcoxon signed-rank test, rejecting for large ``W^T Sigma^{-1} W``."""
    x = np.atleast_2d(x)
    grid_seed, null_seed, sign_seed = derived_seeds(seed)
    grid = _symmetry_grid(grid, group, x.shape[0], grid_seed)
    sigma = _erd(grid, score, group) if sigma_erd1 is None else sigma_erd1
    res = signed_rank_map(x, grid, group, np.random.default_rng(sign_seed), compute_signs=False)
    w = st.signed_rank_stat(res, score)
    value = st.signed_rank_quadratic(w, sigma)
    model = NullModel("signed_rank", grid, B, null_seed, group=group, score=score, sigma=sigma.matrix)
    extra = {"group": group.label, "W": w, "erd1_covariance": sigma.source}
    return _calibrate("ot_signed_rank", value, model, calibration, group.dim, cache, threads, extra, seed)


def symmetry_mmd_test(x, group: SymmetryGroup, *, grid: ReferenceGrid | None = None,
                      kernel=st.Kernel(), B: int = cal.DEFAULT_B, seed: int = 0,
                      cache: NullCache | None = None, threads: int = 1,
                      recentered: bool = False) -> TestReport:
    """OT-MMD test of G-symmetry against nu_S = N(0, I) with the Gaussian kernel.

    ``recentered=True`` uses ``n MMD^2(., nu_{n,S})`` instead (finite groups).
    """
    x = np.atleast_2d(x)
    if kernel.kind != "gaussian":
        raise InvalidInputError("the symmetry MMD test uses closed-form nu_S terms: gaussian kernel only")
    grid_seed, null_seed, sign_seed = derived_seeds(seed)
    grid = _symmetry_grid(grid, group, x.shape[0], grid_seed)
    res = signed_rank_map(x, grid, group, np.random.default_rng(sign_seed), compute_signs=False)
    if recentered:
        value = st.recentered_mmd_stat(res, kernel, grid, group)
        test, name = "recentered_mmd", "ot_mmd_recentered"
    else:
        value = st.symmetry_mmd_stat(res, kernel)
        test, name = "symmetry_mmd", "ot_mmd"
    model = NullModel(test, grid, B, null_seed, group=group, kernel=kernel)
    extra = {"group": group.label, "kernel": kernel.describe(group.dim)}
    return _calibrate(name, value, model, "mc", group.dim, cache, threads, extra, seed)


def hotelling_test(x, y=None, *, calibration: str = "f") -> TestReport:
    """One- or two-sample Hotelling T^2 with exact F or asymptotic chi-square calibration."""
    x = np.atleast_2d(x)
    p = x.shape[1]
    if y is None:
        value = st.hotelling_one_sample(x)
        n, m = x.shape[0], None
        name = "hotelling_one_sample"
    else:
        y = np.atleast_2d(y)
        value = st.hotelling_two_sample(x, y)
        n, m = x.shape[0] + y.shape[0], x.shape[0]
        name = "hotelling_two_sample"
    if calibration == "f":
        return TestReport(name, float(value), cal.hotelling_pvalue(value, n, p, m), "f_exact")
    if calibration == "asymptotic":
        return TestReport(name, float(value), cal.asymptotic_pvalue_chisq(value, p), f"asymptotic_chisq({p})")
    raise InvalidInputError(f"unknown calibration {calibration!r} for Hotelling")
