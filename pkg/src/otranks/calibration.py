"""Distribution-free Monte Carlo null laws and asymptotic chi-square calibration.

Null laws depend only on the grid, the group, sample sizes, score and kernel,
never on observed data, so they are simulated once and cached on disk.  Each
replicate draws from its own stream spawned off the model seed, which makes
the output independent of execution order and of the number of threads.

* two-sample statistics: a uniform random split of the grid into m and n rows;
* symmetry statistics: a uniform permutation of the grid with an independent
  Haar group element applied to every point.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import chdtrc
from scipy.stats import f as f_dist

from . import groups
from . import statistics as st
from .errors import InvalidInputError
from .groups import SymmetryGroup
from .reference import ReferenceGrid

log = logging.getLogger(__name__)

TWO_SAMPLE = ("ranksum", "rank_mmd")
ONE_SAMPLE = ("signed_rank", "symmetry_mmd", "recentered_mmd")
DEFAULT_B = 999


@dataclass(frozen=True, eq=False)
class NullModel:
    """Everything that determines a simulated null law."""

    test: str
    grid: ReferenceGrid
    B: int = DEFAULT_B
    seed: int = 0
    group: SymmetryGroup | None = None
    m: int | None = None
    score: st.ScoreFunction = st.ScoreFunction()
    kernel: st.Kernel = st.Kernel()
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.test not in TWO_SAMPLE + ONE_SAMPLE:
            raise InvalidInputError(f"unknown test {self.test!r}")
        if self.B < 1:
            raise InvalidInputError("B must be at least 1")
        if self.test in TWO_SAMPLE:
            if self.m is None or not 0 < self.m < self.grid.n:
                raise InvalidInputError("two-sample null needs 0 < m < grid size")
            if self.test == "rank_mmd" and (self.m < 2 or self.grid.n - self.m < 2):
                raise InvalidInputError("rank MMD needs at least two observations per sample")
        elif self.group is None:
            raise InvalidInputError(f"{self.test} null needs a symmetry group")

    def key(self) -> str:
        sigma = None if self.sigma is None else hashlib.sha256(
            np.ascontiguousarray(self.sigma, dtype=float).tobytes()).hexdigest()[:16]
        desc = {
            "test": self.test,
            "n": self.grid.n,
            "p": self.grid.p,
            "m": self.m,
            "group": self.group.label if self.group is not None else None,
            "grid": self.grid.digest(),
            "score": self.score.kind,
            "kernel": self.kernel.describe(self.grid.p),
            "sigma": sigma,
            "B": self.B,
            "seed": self.seed,
        }
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()[:32]


class NullCache:
    """Directory of ``<key>.npy`` null samples; writes are atomic (temp file + rename)."""

    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get("OTRANKS_CACHE",
                                       Path.home() / ".cache" / "otranks")
        self.directory = Path(directory)

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.npy"

    def get(self, key: str) -> np.ndarray | None:
        path = self.path(key)
        if not path.exists():
            return None
        try:
            return np.load(path)
        except (OSError, ValueError):
            log.warning("ignoring unreadable cache entry %s", path)
            return None

    def put(self, key: str, values: np.ndarray) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.save(fh, values)
            os.replace(tmp, self.path(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


def replicate_rngs(seed: int, count: int, offset: int = 0) -> list[np.random.Generator]:
    """Independent per-replicate generators, replicate ``k`` being child ``k`` of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(offset + count)[offset:]
    return [np.random.default_rng(c) for c in children]


class _NullStatistic:
    """Evaluates one null replicate of a model from a replicate generator."""

    def __init__(self, model: NullModel):
        self.model = model
        self.H = model.grid.points
        t = model.test
        if t == "recentered_mmd":
            self.recentered = st.RecenteredMMD(model.grid, model.group, model.kernel)
        if t == "symmetry_mmd" and model.kernel.kind != "gaussian":
            raise InvalidInputError("symmetry MMD null needs the gaussian kernel")

    def __call__(self, rng: np.random.Generator) -> float:
        mdl = self.model
        perm = rng.permutation(self.H.shape[0])
        if mdl.test in TWO_SAMPLE:
            xr, yr = self.H[perm[:mdl.m]], self.H[perm[mdl.m:]]
            if mdl.test == "ranksum":
                return st.ranksum_stat(xr, yr, mdl.score, mdl.sigma)
            return st.rank_mmd_stat(xr, yr, mdl.score, mdl.kernel)
        u = groups.sample_orbit_uniform(mdl.group, self.H[perm], rng)
        if mdl.test == "signed_rank":
            if mdl.score.kind != "identity" and mdl.group.kind not in ("trivial", "permutation"):
                raise InvalidInputError("non-identity score needs a coordinate-permutation group")
            w = mdl.score(u).sum(axis=0) / math.sqrt(u.shape[0])
            return st.signed_rank_quadratic(w, mdl.sigma)
        if mdl.test == "symmetry_mmd":
            return st.symmetry_mmd_stat(u, mdl.kernel)
        return self.recentered(u)


def simulate_null(model: NullModel, *, threads: int = 1, cache: NullCache | None = None) -> np.ndarray:
    """``model.B`` i.i.d. draws from the exact finite-sample null law of the statistic."""
    key = model.key()
    if cache is not None:
        hit = cache.get(key)
        if hit is not None and hit.shape == (model.B,):
            return hit
    stat = _NullStatistic(model)
    rngs = replicate_rngs(model.seed, model.B)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.fromiter(pool.map(stat, rngs), dtype=float, count=model.B)
    else:
        values = np.fromiter(map(stat, rngs), dtype=float, count=model.B)
    if cache is not None:
        cache.put(key, values)
    return values


def p_value(observed: float, null_sample) -> float:
    """Right-tailed ``(1 + #{null >= observed}) / (B + 1)``."""
    null = np.asarray(null_sample, dtype=float)
    if null.size == 0:
        raise InvalidInputError("empty null sample")
    return float((1 + np.count_nonzero(null >= observed)) / (null.size + 1))


def exceeds_fraction(observed: float, null_sample, alpha: float = 0.05) -> bool:
    """Table-reproduction rule: reject when ``observed`` is greater than a
    ``1 - alpha`` fraction of the simulated null values."""
    null = np.asarray(null_sample, dtype=float)
    return bool(np.count_nonzero(null < observed) >= (1 - alpha) * null.size - 1e-9)


def asymptotic_pvalue_chisq(observed: float, p: int) -> float:
    """Upper tail of chi-square with ``p`` degrees of freedom (regularised incomplete gamma)."""
    if p < 1:
        raise InvalidInputError("degrees of freedom must be positive")
    if observed < 0 or not math.isfinite(observed):
        raise InvalidInputError("chi-square statistic must be finite and nonnegative")
    return float(chdtrc(p, observed))


def hotelling_pvalue(t2: float, n: int, p: int, two_sample_m: int | None = None) -> float:
    """Exact F-calibrated p-value of Hotelling's T^2 under Gaussian data.

    One sample: ``(n-p)/(p(n-1)) T^2 ~ F(p, n-p)``.  Two samples of sizes
    ``m`` and ``n - m``: ``(n-p-1)/(p(n-2)) T^2 ~ F(p, n-p-1)``.
    """
    if two_sample_m is None:
        return float(f_dist.sf((n - p) / (p * (n - 1)) * t2, p, n - p))
    return float(f_dist.sf((n - p - 1) / (p * (n - 2)) * t2, p, n - p - 1))


@dataclass
class TestReport:
    """Outcome of one test run, serialisable to JSON or a one-row CSV."""

    __test__ = False

    statistic: str
    value: float
    p_value: float
    calibration: str
    B: int | None = None
    seed: int | None = None
    null_quantiles: dict | None = None
    extra: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "statistic": self.statistic,
            "value": self.value,
            "p_value": self.p_value,
            "calibration": self.calibration,
            "B": self.B,
            "seed": self.seed,
            "null_quantiles": self.null_quantiles,
        }
        out.update(self.extra)
        out["config"] = self.config
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, default=_jsonable) + "\n"

    def to_csv(self) -> str:
        """Header plus one row; the config echo is a JSON string in the last column."""
        cols = ["statistic", "value", "p_value", "calibration", "B", "seed"]
        d = self.to_dict()
        row = ["" if d[c] is None else (repr(float(d[c])) if isinstance(d[c], (float, np.floating))
                                        else str(d[c])) for c in cols]
        row.append(json.dumps(self.config, sort_keys=True, default=_jsonable))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols + ["config"])
        w.writerow(row)
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def null_summary(null_sample) -> dict:
    qs = (0.5, 0.9, 0.95, 0.99)
    vals = np.quantile(np.asarray(null_sample, dtype=float), qs)
    return {f"q{int(q * 100)}": float(v) for q, v in zip(qs, vals)}
