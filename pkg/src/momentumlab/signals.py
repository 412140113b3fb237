"""Turning points by mean-anchored CUSUM and Wald-Wolfowitz runs tests."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateRuns, InputError, SingleCategory, TooShort
from .ingest import Player, PointRecord
from .momentum import MomentumConfig, MomentumSeries, compute_momentum

ZERO_TOL = 1e-12
ALPHA = 0.05


# ---------------------------------------------------------------------------
# CUSUM


@dataclass(frozen=True)
class CusumTrace:
    input: np.ndarray
    mean: float
    deviations: np.ndarray
    S: np.ndarray
    turning_points: tuple[int, ...]  # 1-based
    zero_tol: float


def zero_tolerance(x: np.ndarray) -> float:
    # absolute 1e-12 for unit-scale data, scaled up for larger magnitudes
    return ZERO_TOL * max(1.0, float(np.max(np.abs(x))) if len(x) else 1.0)


def _sgn(v: float, tol: float) -> int:
    if abs(v) <= tol:
        return 0
    return 1 if v > 0 else -1


def crosses_zero(prev: float, cur: float, tol: float = ZERO_TOL) -> bool:
    """A nonzero excursion that flips sign or returns to zero."""
    sp = _sgn(prev, tol)
    return sp != 0 and _sgn(cur, tol) != sp


def cusum(series: Sequence[float]) -> CusumTrace:
    """S_t = S_{t-1} + (x_t - mean(x)); turning points where S crosses or touches zero."""
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < 2:
        raise TooShort(f"CUSUM needs at least 2 values, got {len(x)}")
    mean = float(np.mean(x))
    dev = x - mean
    S = np.cumsum(dev)
    tol = zero_tolerance(x)
    tps = tuple(t + 1 for t in range(1, len(x)) if crosses_zero(S[t - 1], S[t], tol))
    return CusumTrace(x, mean, dev, S, tps, tol)


def turning_point_indicator(trace: CusumTrace, length: int | None = None) -> np.ndarray:
    length = len(trace.input) if length is None else length
    out = np.zeros(length, dtype=int)
    for t in trace.turning_points:
        if not 1 <= t <= length:
            raise InputError(f"turning point {t} outside 1..{length}")
        out[t - 1] = 1
    return out


# ---------------------------------------------------------------------------
# runs test


@dataclass(frozen=True)
class RunsTestResult:
    sample_size: int
    n1: int  # count of 1s
    n2: int  # count of 0s
    runs: int
    mean_runs: float
    std_runs: float
    z: float
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA


def count_runs(bits: Sequence[int]) -> int:
    b = np.asarray(bits)
    return int(1 + np.count_nonzero(b[1:] != b[:-1])) if len(b) else 0


def runs_moments(n1: int, n2: int) -> tuple[float, float]:
    """Null mean and standard deviation of the number of runs."""
    n = n1 + n2
    mu = 2.0 * n1 * n2 / n + 1.0
    var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n * n * (n - 1.0))
    return mu, math.sqrt(max(var, 0.0))


def normal_two_sided(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _as_bits(sequence) -> np.ndarray:
    if isinstance(sequence, str):
        sequence = [int(c) for c in sequence]
    b = np.asarray(sequence).ravel()
    if not np.isin(b, (0, 1)).all():
        raise InputError("runs test needs a binary (0/1) sequence")
    return b.astype(int)


def runs_test(sequence) -> RunsTestResult:
    """Wald-Wolfowitz runs test, normal approximation, no continuity correction."""
    b = _as_bits(sequence)
    n = len(b)
    if n < 2:
        raise TooShort(f"runs test needs at least 2 observations, got {n}")
    n1 = int(b.sum())
    n2 = n - n1
    if n1 == 0 or n2 == 0:
        raise SingleCategory("runs test undefined: only one category present")
    r = count_runs(b)
    mu, sigma = runs_moments(n1, n2)
    if sigma == 0.0:
        raise DegenerateRuns(f"runs variance is zero for n1={n1}, n2={n2}")
    z = (r - mu) / sigma
    return RunsTestResult(n, n1, n2, r, mu, sigma, z, normal_two_sided(z))


def runs_exact_pmf(n1: int, n2: int) -> dict[int, float]:
    """Exact null distribution of the run count (small-sample reference)."""
    total = comb(n1 + n2, n1)
    pmf = {}
    for r in range(2, n1 + n2 + 1):
        k, odd = divmod(r, 2)
        if odd:
            ways = comb(n1 - 1, k) * comb(n2 - 1, k - 1) + comb(n1 - 1, k - 1) * comb(n2 - 1, k)
        else:
            ways = 2 * comb(n1 - 1, k - 1) * comb(n2 - 1, k - 1)
        if ways:
            pmf[r] = ways / total
    return pmf


def runs_exact_pvalue(n1: int, n2: int, runs: int) -> float:
    """Two-sided exact p: mass of run counts at least as far from the mean."""
    mu, _ = runs_moments(n1, n2)
    dist = abs(runs - mu)
    return min(1.0, sum(p for r, p in runs_exact_pmf(n1, n2).items() if abs(r - mu) >= dist - 1e-12))


# ---------------------------------------------------------------------------
# binarisation


class BinarizeRule(str, enum.Enum):
    ABOVE_MEDIAN = "above_median"
    POSITIVE_DELTA = "positive_delta"


def binarize(series: Sequence[float], rule: str | BinarizeRule = BinarizeRule.ABOVE_MEDIAN) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    if len(x) == 0:
        raise InputError("cannot binarize an empty series")
    rule = BinarizeRule(rule)
    if rule is BinarizeRule.ABOVE_MEDIAN:
        return (x > np.median(x)).astype(int)
    return (np.diff(x, prepend=0.0) > 0).astype(int)


# ---------------------------------------------------------------------------
# per-match analysis


VARIABLES = ("p1_momentum", "p2_momentum", "p1_turning_points", "p2_turning_points")


@dataclass(frozen=True)
class RunsOutcome:
    """A runs test that may be not applicable (single category / zero variance)."""

    column_name: str
    sample_size: int
    result: RunsTestResult | None
    reason: str = ""

    @property
    def applicable(self) -> bool:
        return self.result is not None

    @property
    def z(self) -> float:
        return self.result.z if self.result else float("nan")

    @property
    def p_value(self) -> float:
        return self.result.p_value if self.result else float("nan")

    @property
    def significant(self) -> bool:
        return bool(self.result and self.result.significant)


def runs_outcome(name: str, bits) -> RunsOutcome:
    bits = _as_bits(bits)
    try:
        return RunsOutcome(name, len(bits), runs_test(bits))
    except SingleCategory:
        return RunsOutcome(name, len(bits), None, "single category")
    except (DegenerateRuns, TooShort) as exc:
        return RunsOutcome(name, len(bits), None, str(exc))


@dataclass(frozen=True)
class MatchAnalysis:
    match_id: str
    momentum: MomentumSeries
    traces: Mapping[Player, CusumTrace]
    tests: Mapping[str, RunsOutcome]
    rule: BinarizeRule


def analyze_match(points: Sequence[PointRecord], cfg: MomentumConfig | None = None,
                  rule: str | BinarizeRule = BinarizeRule.ABOVE_MEDIAN) -> MatchAnalysis:
    """Momentum, CUSUM per player, and runs tests on the four per-point variables."""
    series = compute_momentum(points, cfg)
    rule = BinarizeRule(rule)
    n = len(series)
    traces, tests = {}, {}
    for p, tag in ((Player.P1, "p1"), (Player.P2, "p2")):
        values = series.values(p)
        traces[p] = cusum(values)
        tests[f"{tag}_momentum"] = runs_outcome(f"{tag}_momentum", binarize(values, rule))
    for p, tag in ((Player.P1, "p1"), (Player.P2, "p2")):
        name = f"{tag}_turning_points"
        tests[name] = runs_outcome(name, turning_point_indicator(traces[p], n))
    return MatchAnalysis(series.match_id, series, traces, {v: tests[v] for v in VARIABLES}, rule)


@dataclass(frozen=True)
class AggregateRunsReport:
    match_ids: tuple[str, ...]
    flags: Mapping[str, np.ndarray]  # variable -> per-match 0/1
    stats: Mapping[str, Mapping[str, float]]  # variable -> count/mean/std/min/max
    std_defined: bool


def aggregate(analyses: Sequence[MatchAnalysis]) -> AggregateRunsReport:
    """Flag p < 0.05 per match and variable; describe flags across matches.

    Not-applicable tests flag 0. Matches are folded in match-id order; the std
    uses n - 1 and is reported as 0 (``std_defined`` False) for one match.
    """
    if not analyses:
        raise InputError("aggregate needs at least one analyzed match")
    ordered = sorted(analyses, key=lambda a: a.match_id)
    flags, stats = {}, {}
    n = len(ordered)
    for v in VARIABLES:
        f = np.array([1 if a.tests[v].significant else 0 for a in ordered], dtype=int)
        flags[v] = f
        stats[v] = {
            "count": float(n),
            "mean": float(f.mean()),
            "std": float(f.std(ddof=1)) if n > 1 else 0.0,
            "min": float(f.min()),
            "max": float(f.max()),
        }
    return AggregateRunsReport(tuple(a.match_id for a in ordered), flags, stats, n > 1)


# ---------------------------------------------------------------------------
# table output

RUNS_TABLE_COLUMNS = ("column_name", "sample_size", "z", "P-value")
AGGREGATE_ROWS = ("count", "mean", "std", "min", "max")


def format_p(p: float) -> str:
    if math.isnan(p):
        return "NA"
    stars = "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""
    return f"{p:.3f}{stars}"


def write_runs_table(analysis: MatchAnalysis, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUNS_TABLE_COLUMNS)
        for v in VARIABLES:
            o = analysis.tests[v]
            z = "NA" if not o.applicable else f"{o.z:.3f}"
            w.writerow([o.column_name, o.sample_size, z, format_p(o.p_value)])


def write_aggregate_table(report: AggregateRunsReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *VARIABLES])
        for row in AGGREGATE_ROWS:
            w.writerow([row, *(f"{report.stats[v][row]:.6f}" for v in VARIABLES)])
