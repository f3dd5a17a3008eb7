"""Power studies: scenario files, data generators and the replication loop.

A scenario file has one scenario per line as whitespace-separated
``key=value`` pairs; ``#`` starts a comment.  Recognised keys::

    name generator n p group tests reps alpha seed B m rule
    y.generator y.<param>          (second sample, two-sample tests)

Any other key is passed to the data generator (``shift=0.1``, ``rho=0.6``,
``margins=normal:2:1,normal:0:1`` ...).  Example::

    name=Sp1[0.10] generator=gaussian shift=0.10 n=200 p=2 group=spherical tests=T2,OT-Wilcox,OT-MMD reps=1000

Within a scenario the grid and the simulated null laws are drawn once and held
fixed over all replications; replication ``r`` draws its data from child ``r``
of the scenario seed, so rows sharing a seed share their noise.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import statistics as st
from .calibration import NullCache, NullModel
from .errors import InvalidInputError
from .groups import SymmetryGroup
from .procedures import derived_seeds
from .ranks import pooled_rank_map, signed_rank_map
from .reference import default_symmetry_grid, make_grid

log = logging.getLogger(__name__)

SYMMETRY_TESTS = ("T2", "OT-Wilcox", "OT-MMD", "OT-MMD-recentered")
TWO_SAMPLE_TESTS = ("Hotelling2", "OT-ranksum", "OT-rankMMD")

# ------------------------------------------------------------------ generators


def _shift(params, p):
    return float(params.get("shift", 0.0)) * np.ones(p)


def gen_gaussian(rng, n, p, params):
    return float(params.get("scale", 1.0)) * rng.standard_normal((n, p)) + _shift(params, p)


def gen_t(rng, n, p, params):
    """Multivariate t: Gaussian over an independent sqrt(chi2_df / df) scale, then shifted."""
    df = float(params.get("df", 1.0))
    w = np.sqrt(rng.chisquare(df, size=(n, 1)) / df)
    return rng.standard_normal((n, p)) / w + _shift(params, p)


def gen_unit_ball(rng, n, p, params):
    z = rng.standard_normal((n, p))
    direction = z / np.linalg.norm(z, axis=1, keepdims=True)
    radius = rng.random((n, 1)) ** (1.0 / p)
    return direction * radius + _shift(params, p)


def gen_elliptical(rng, n, p, params):
    scales = params.get("scales")
    s = np.ones(p) if scales is None else np.array([float(t) for t in str(scales).split(",")])
    if scales is None:
        s[0] = 2.0
    if s.size != p:
        raise InvalidInputError(f"elliptical scales need {p} entries")
    return rng.standard_normal((n, p)) * s + _shift(params, p)


def gen_correlated(rng, n, p, params):
    rho = float(params.get("rho", 0.6))
    cov = np.full((p, p), rho)
    np.fill_diagonal(cov, 1.0)
    return rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky") + _shift(params, p)


def gen_chi2(rng, n, p, params):
    df = float(params.get("df", 1.0))
    return rng.chisquare(df, size=(n, p)) - df + _shift(params, p)


def _margin(rng, text: str, n: int):
    name, *args = text.split(":")
    a = [float(t) for t in args]
    if name == "normal":
        mu, sd = (a + [0.0, 1.0][len(a):])[:2]
        return rng.normal(mu, sd, size=n)
    if name == "exp":
        return rng.exponential(a[0] if a else 1.0, size=n)
    if name == "lognormal":
        mu, sd = (a + [0.0, 1.0][len(a):])[:2]
        return rng.lognormal(mu, sd, size=n)
    raise InvalidInputError(f"unknown marginal {text!r}")


def gen_marginals(rng, n, p, params):
    """Independent coordinates with per-coordinate laws ``normal:mu:sd``, ``exp:scale``, ``lognormal:mu:sd``."""
    specs = str(params.get("margins", "")).split(",")
    if len(specs) != p:
        raise InvalidInputError(f"margins lists {len(specs)} laws for p = {p}")
    return np.column_stack([_margin(rng, s, n) for s in specs])


GENERATORS = {
    "gaussian": gen_gaussian,
    "t": gen_t,
    "unit_ball": gen_unit_ball,
    "elliptical": gen_elliptical,
    "correlated": gen_correlated,
    "chi2": gen_chi2,
    "marginals": gen_marginals,
}


def generate(name: str, rng, n: int, p: int, params: dict) -> np.ndarray:
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise InvalidInputError(f"unknown data generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return fn(rng, n, p, params)


# ------------------------------------------------------------------ scenarios

_RESERVED = {"name", "generator", "n", "m", "p", "group", "tests", "reps", "alpha", "seed", "B", "rule"}


@dataclass(frozen=True)
class Scenario:
    name: str
    generator: str
    n: int
    p: int
    tests: tuple[str, ...]
    group: str = "spherical"
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 0
    B: int = 1000
    m: int | None = None
    rule: str = "fraction"
    params: dict = field(default_factory=dict)
    y_generator: str | None = None
    y_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidInputError(f"{self.name}: reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise InvalidInputError(f"{self.name}: alpha must lie in (0, 1)")
        if self.rule not in ("fraction", "pvalue"):
            raise InvalidInputError(f"{self.name}: rule must be 'fraction' or 'pvalue'")
        unknown = [t for t in self.tests if t not in SYMMETRY_TESTS + TWO_SAMPLE_TESTS]
        if unknown:
            raise InvalidInputError(f"{self.name}: unknown tests {unknown}")
        if any(t in TWO_SAMPLE_TESTS for t in self.tests):
            if any(t in SYMMETRY_TESTS for t in self.tests):
                raise InvalidInputError(f"{self.name}: cannot mix one- and two-sample tests")
            if self.m is None or self.m < 1:
                raise InvalidInputError(f"{self.name}: two-sample scenarios need m (size of the first sample)")
        if self.generator not in GENERATORS:
            raise InvalidInputError(f"{self.name}: unknown generator {self.generator!r}")

    @property
    def two_sample(self) -> bool:
        return any(t in TWO_SAMPLE_TESTS for t in self.tests)

    def key(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:32]


def parse_scenario_line(line: str, lineno: int = 0) -> Scenario | None:
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    kv = {}
    for tok in text.split():
        k, sep, v = tok.partition("=")
        if not sep or not k:
            raise InvalidInputError(f"line {lineno}: expected key=value, got {tok!r}")
        kv[k] = v
    try:
        params = {k: v for k, v in kv.items() if k not in _RESERVED and not k.startswith("y.")}
        y_params = {k[2:]: v for k, v in kv.items() if k.startswith("y.") and k != "y.generator"}
        return Scenario(
            name=kv.get("name", f"line{lineno}"),
            generator=kv["generator"],
            n=int(kv["n"]),
            p=int(kv["p"]),
            tests=tuple(t for t in kv["tests"].split(",") if t),
            group=kv.get("group", "spherical"),
            reps=int(kv.get("reps", 1000)),
            alpha=float(kv.get("alpha", 0.05)),
            seed=int(kv.get("seed", 0)),
            B=int(kv.get("B", 1000)),
            m=int(kv["m"]) if "m" in kv else None,
            rule=kv.get("rule", "fraction"),
            params=params,
            y_generator=kv.get("y.generator"),
            y_params=y_params,
        )
    except KeyError as exc:
        raise InvalidInputError(f"line {lineno}: missing required key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise InvalidInputError(f"line {lineno}: {exc}") from None


def parse_scenarios(text: str) -> list[Scenario]:
    out = []
    for i, line in enumerate(text.splitlines(), 1):
        s = parse_scenario_line(line, i)
        if s is not None:
            out.append(s)
    return out


def bundled_suite(name: str) -> Path:
    path = Path(__file__).parent / "tables" / (name if name.endswith(".suite") else f"{name}.suite")
    if not path.exists():
        raise InvalidInputError(f"no bundled suite named {name!r}")
    return path


def load_suite(path) -> list[Scenario]:
    p = Path(path)
    if not p.exists():
        if "/" not in str(path):
            p = bundled_suite(str(path))
        else:
            raise InvalidInputError(f"suite file {path} not found")
    return parse_scenarios(p.read_text())


# ------------------------------------------------------------------ power


@dataclass(frozen=True)
class PowerRow:
    scenario: str
    test: str
    power: float
    se: float
    reps: int


class PowerTable(list):
    """List of PowerRow with CSV and gnuplot emitters."""

    def to_csv(self) -> str:
        lines = ["scenario,test,power,se,reps"]
        lines += [f"{r.scenario},{r.test},{r.power:.4f},{r.se:.4f},{r.reps}" for r in self]
        return "\n".join(lines) + "\n"

    def to_gnuplot(self) -> str:
        lines = ["# scenario test power se reps"]
        lines += [f'"{r.scenario}" "{r.test}" {r.power:.4f} {r.se:.4f} {r.reps}' for r in self]
        return "\n".join(lines) + "\n"

    def lookup(self, scenario: str, test: str) -> PowerRow:
        for r in self:
            if r.scenario == scenario and r.test == test:
                return r
        raise KeyError((scenario, test))


def _rows(s: Scenario, rejections: dict) -> list[PowerRow]:
    rows = []
    for t in s.tests:
        power = rejections[t] / s.reps
        rows.append(PowerRow(s.name, t, power, math.sqrt(power * (1 - power) / s.reps), s.reps))
    return rows


class _SymmetryReplicate:
    def __init__(self, s: Scenario, cache, threads):
        self.s = s
        g = SymmetryGroup.parse(s.group, s.p)
        grid_seed, null_seed, _ = derived_seeds(s.seed)
        self.g = g
        self.grid = default_symmetry_grid(g, s.n, grid_seed)
        self.kernel = st.Kernel()
        self.nulls = {}
        nulls = {"OT-Wilcox": "signed_rank", "OT-MMD": "symmetry_mmd", "OT-MMD-recentered": "recentered_mmd"}
        for t in s.tests:
            if t in nulls:
                model = NullModel(nulls[t], self.grid, s.B, null_seed, group=g, kernel=self.kernel)
                self.nulls[t] = cal.simulate_null(model, threads=threads, cache=cache)
        if "OT-MMD-recentered" in s.tests:
            self.recentered = st.RecenteredMMD(self.grid, g, self.kernel)

    def _reject(self, t, value):
        if self.s.rule == "fraction":
            return cal.exceeds_fraction(value, self.nulls[t], self.s.alpha)
        return cal.p_value(value, self.nulls[t]) <= self.s.alpha

    def __call__(self, rng) -> dict:
        s = self.s
        x = generate(s.generator, rng, s.n, s.p, s.params)
        out = {}
        if "T2" in s.tests:
            t2 = st.hotelling_one_sample(x)
            out["T2"] = cal.hotelling_pvalue(t2, s.n, s.p) <= s.alpha
        if any(t in self.nulls for t in s.tests):
            res = signed_rank_map(x, self.grid, self.g, compute_signs=False, validate=False)
            if "OT-Wilcox" in s.tests:
                w = st.signed_rank_stat(res)
                out["OT-Wilcox"] = self._reject("OT-Wilcox", st.signed_rank_quadratic(w))
            if "OT-MMD" in s.tests:
                out["OT-MMD"] = self._reject("OT-MMD", st.symmetry_mmd_stat(res, self.kernel))
            if "OT-MMD-recentered" in s.tests:
                out["OT-MMD-recentered"] = self._reject("OT-MMD-recentered", self.recentered(res))
        return out


class _TwoSampleReplicate:
    def __init__(self, s: Scenario, cache, threads):
        self.s = s
        N = s.n + s.m
        grid_seed, null_seed, _ = derived_seeds(s.seed)
        self.grid = make_grid("gaussian", N, s.p, grid_seed)
        self.kernel = st.Kernel()
        self.nulls = {}
        nulls = {"OT-ranksum": "ranksum", "OT-rankMMD": "rank_mmd"}
        for t in s.tests:
            if t in nulls:
                model = NullModel(nulls[t], self.grid, s.B, null_seed, m=s.m, kernel=self.kernel)
                self.nulls[t] = cal.simulate_null(model, threads=threads, cache=cache)

    def __call__(self, rng) -> dict:
        s = self.s
        x = generate(s.generator, rng, s.m, s.p, s.params)
        y = generate(s.y_generator or s.generator, rng, s.n, s.p, s.y_params)
        out = {}
        if "Hotelling2" in s.tests:
            t2 = st.hotelling_two_sample(x, y)
            out["Hotelling2"] = cal.hotelling_pvalue(t2, s.m + s.n, s.p, s.m) <= s.alpha
        if self.nulls:
            xr, yr = pooled_rank_map(x, y, self.grid, validate=False)
            vals = {}
            if "OT-ranksum" in s.tests:
                vals["OT-ranksum"] = st.ranksum_stat(xr, yr)
            if "OT-rankMMD" in s.tests:
                vals["OT-rankMMD"] = st.rank_mmd_stat(xr, yr, kernel=self.kernel)
            for t, v in vals.items():
                if s.rule == "fraction":
                    out[t] = cal.exceeds_fraction(v, self.nulls[t], s.alpha)
                else:
                    out[t] = cal.p_value(v, self.nulls[t]) <= s.alpha
        return out


def run_scenario(s: Scenario, *, cache: NullCache | None = None, threads: int = 1) -> list[PowerRow]:
    """Empirical rejection rate of each test over ``s.reps`` replications."""
    if s.group and not s.two_sample:
        g = SymmetryGroup.parse(s.group, s.p)
        if "OT-MMD-recentered" in s.tests and not g.is_finite:
            raise InvalidInputError(f"{s.name}: recentred statistic needs a finite group")
    rep = _TwoSampleReplicate(s, cache, threads) if s.two_sample else _SymmetryReplicate(s, cache, threads)
    data_seed = int(np.random.SeedSequence(s.seed).generate_state(4)[3])
    rngs = cal.replicate_rngs(data_seed, s.reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(rep, rngs))
    else:
        outcomes = [rep(r) for r in rngs]
    rejections = {t: sum(bool(o[t]) for o in outcomes) for t in s.tests}
    return _rows(s, rejections)


def run_suite(scenarios, *, cache: NullCache | None = None, threads: int = 1,
              resume: bool = True, progress=None) -> PowerTable:
    """Run every scenario; completed cells are reloaded from the cache when ``resume``."""
    table = PowerTable()
    cells = None if cache is None else cache.directory / "cells"
    for i, s in enumerate(scenarios, 1):
        cell = None if cells is None else cells / f"{s.key()}.json"
        if resume and cell is not None and cell.exists():
            rows = [PowerRow(**r) for r in json.loads(cell.read_text())]
            log.info("[%d/%d] %s: reused cached cell", i, len(scenarios), s.name)
        else:
            rows = run_scenario(s, cache=cache, threads=threads)
            if cell is not None:
                cells.mkdir(parents=True, exist_ok=True)
                tmp = cell.with_suffix(".tmp")
                tmp.write_text(json.dumps([asdict(r) for r in rows]))
                tmp.replace(cell)
            log.info("[%d/%d] %s: %s", i, len(scenarios), s.name,
                     ", ".join(f"{r.test}={r.power:.3f}" for r in rows))
        if progress is not None:
            progress(i, len(scenarios), s, rows)
        table.extend(rows)
    return table
