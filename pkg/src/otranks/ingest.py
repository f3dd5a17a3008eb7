"""CSV samples and the monthly-returns pipeline.

Prices come from local files, one per asset, with columns ``date,adj_close``
and ISO-8601 dates.  Returns are ``R_t = P_t / P_{t-1} - 1`` over the dates
common to every asset.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import statistics as st
from .calibration import NullCache, TestReport
from .errors import InvalidInputError
from .groups import SymmetryGroup
from .procedures import derived_seeds, symmetry_mmd_test
from .reference import make_grid


def _diagnose(path: Path) -> None:
    """Re-scan a file that numpy could not parse and raise with its location."""
    with path.open(newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None:
            raise InvalidInputError(f"{path}: empty file")
        for lineno, row in enumerate(rows, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidInputError(
                    f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}")
            for col, cell in enumerate(row, 1):
                try:
                    v = float(cell)
                except ValueError:
                    raise InvalidInputError(
                        f"{path}: line {lineno}, column {col} ({header[col - 1]!r}): "
                        f"non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise InvalidInputError(f"{path}: line {lineno}, column {col}: non-finite value")
    raise InvalidInputError(f"{path}: could not parse")


def duplicate_rows(x: np.ndarray) -> np.ndarray:
    """Indices of rows equal to an earlier row."""
    _, first = np.unique(x, axis=0, return_index=True)
    mask = np.ones(x.shape[0], dtype=bool)
    mask[first] = False
    return np.flatnonzero(mask)


def load_sample_csv(path) -> np.ndarray:
    """Rectangular numeric CSV with a header line -> n x p float matrix.

    Duplicate rows are reported with a warning; the rank maps refuse them
    unless ties are broken first (see ``jitter``).
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"{path}: no such file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            x = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except (ValueError, UserWarning):
        _diagnose(path)
        raise
    if x.size == 0:
        raise InvalidInputError(f"{path}: no data rows")
    if not np.all(np.isfinite(x)):
        _diagnose(path)
    with path.open() as fh:
        ncols = len(next(csv.reader(fh)))
    if x.shape[1] != ncols:
        raise InvalidInputError(f"{path}: rows have {x.shape[1]} fields, header has {ncols}")
    dup = duplicate_rows(x)
    if dup.size:
        warnings.warn(f"{path}: {dup.size} duplicate rows (first at data row {dup[0] + 1})",
                      stacklevel=2)
    return x


def jitter(x, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Add Uniform(-eps, eps) noise to break ties."""
    if eps <= 0:
        raise InvalidInputError("jitter must be positive")
    return x + rng.uniform(-eps, eps, size=np.shape(x))


@dataclass(frozen=True)
class PriceSeries:
    asset: str
    dates: tuple[dt.date, ...]
    prices: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.prices):
            raise InvalidInputError(f"{self.asset}: {len(self.dates)} dates but {len(self.prices)} prices")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise InvalidInputError(f"{self.asset}: dates must be strictly increasing")
        prices = np.asarray(self.prices, dtype=float)
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise InvalidInputError(f"{self.asset}: prices must be positive and finite")


@dataclass(frozen=True)
class ReturnsPanel:
    assets: tuple[str, ...]
    dates: tuple[dt.date, ...]
    returns: np.ndarray


def read_price_csv(path, asset: str | None = None) -> PriceSeries:
    """One asset from a ``date,adj_close`` file; rows are sorted by date."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"{path}: no such file")
    dates, prices = [], []
    with path.open(newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or len(header) < 2:
            raise InvalidInputError(f"{path}: expected header date,adj_close")
        for lineno, row in enumerate(rows, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidInputError(f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}")
            try:
                dates.append(dt.date.fromisoformat(row[0].strip()))
            except ValueError:
                raise InvalidInputError(f"{path}: line {lineno}: bad ISO date {row[0]!r}") from None
            try:
                prices.append(float(row[1]))
            except ValueError:
                raise InvalidInputError(f"{path}: line {lineno}: non-numeric price {row[1]!r}") from None
    order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
    return PriceSeries(asset or path.stem, tuple(dates[i] for i in order),
                       np.asarray(prices, dtype=float)[order])


def prices_to_returns(series) -> ReturnsPanel:
    """Simple returns on the dates every asset shares; row ``t`` needs prices at ``t`` and ``t-1``."""
    series = list(series)
    if not series:
        raise InvalidInputError("no price series given")
    common = set(series[0].dates)
    for s in series[1:]:
        common &= set(s.dates)
    dates = sorted(common)
    if len(dates) < 2:
        raise InvalidInputError(f"only {len(dates)} dates are common to all assets; need at least 2")
    cols = []
    for s in series:
        index = {d: i for i, d in enumerate(s.dates)}
        p = np.asarray(s.prices, dtype=float)[[index[d] for d in dates]]
        cols.append(p[1:] / p[:-1] - 1.0)
    return ReturnsPanel(tuple(s.asset for s in series), tuple(dates[1:]), np.column_stack(cols))


def exchangeability_report(panel: ReturnsPanel, *, B: int = 999, seed: int = 0,
                           kernel: st.Kernel = st.Kernel(), cache: NullCache | None = None,
                           threads: int = 1, jitter_eps: float | None = None) -> TestReport:
    """OT-MMD test that the return vectors are exchangeable across assets."""
    x = np.asarray(panel.returns, dtype=float)
    n, p = x.shape
    if p < 2:
        raise InvalidInputError("exchangeability needs at least two assets")
    if n < 10:
        raise InvalidInputError(f"exchangeability needs at least 10 return rows, got {n}")
    if jitter_eps:
        x = jitter(x, jitter_eps, np.random.default_rng(derived_seeds(seed)[2] + 1))
    g = SymmetryGroup("permutation", p)
    grid = make_grid("sorted_gaussian", n, p, derived_seeds(seed)[0], group=g)
    report = symmetry_mmd_test(x, g, grid=grid, kernel=kernel, B=B, seed=seed,
                               cache=cache, threads=threads)
    report.extra.update({"assets": list(panel.assets), "n_returns": n,
                         "first_date": panel.dates[0].isoformat(),
                         "last_date": panel.dates[-1].isoformat()})
    return report
