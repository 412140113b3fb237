"""Monte Carlo robustness runs, kernel density estimates, synthetic matches."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import derive_seed, ordered_map
from .errors import InputError, MomentumLabError, ZeroSpread
from .ingest import FeatureMatrix, Player, PointRecord
from .learners.metrics import metric_fn
from .learners.validation import split_rows

KDE_GRID = 256
HIST_BINS = 30


class IterationFailed(InputError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"Monte Carlo iteration {iteration} failed: {cause}")
        self.iteration = iteration
        self.cause = cause


# ---------------------------------------------------------------------------
# density


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        """Trapezoid-rule area under the curve."""
        return float(np.sum(np.diff(self.grid) * (self.values[1:] + self.values[:-1])) / 2)


def silverman_bandwidth(samples: Sequence[float]) -> float:
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise ZeroSpread("bandwidth needs at least 2 samples")
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(std, iqr) if iqr > 0 else std
    if spread <= 0:
        raise ZeroSpread("samples have zero spread")
    return 0.9 * spread * len(x) ** (-0.2)


def kde(samples: Sequence[float], bandwidth: float | str = "auto", grid_size: int = KDE_GRID) -> KdeCurve:
    """Gaussian KDE on a grid spanning [min - 3h, max + 3h]."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) == 0:
        raise InputError("kde needs samples")
    if bandwidth == "auto":
        h = silverman_bandwidth(x)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise InputError("bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    u = (grid[:, None] - x[None, :]) / h
    values = np.exp(-0.5 * u * u).sum(axis=1) / (len(x) * h * math.sqrt(2 * math.pi))
    return KdeCurve(grid, values, h)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def histogram(samples: Sequence[float], bins: int = HIST_BINS) -> Histogram:
    x = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(x, bins=bins if np.ptp(x) > 0 else 1)
    return Histogram(edges, counts)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McReport:
    model_id: str
    metric_id: str
    samples: np.ndarray
    master_seed: int
    ratio: float
    summary: dict = field(hash=False)
    hist: Histogram = field(hash=False)
    density: KdeCurve | None = field(default=None, hash=False)
    density_note: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.samples)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "metric_id": self.metric_id,
            "n_iterations": self.n_iterations,
            "ratio": self.ratio,
            "master_seed": self.master_seed,
            "samples": self.samples.tolist(),
            "summary": self.summary,
            "histogram": {"edges": self.hist.edges.tolist(), "counts": self.hist.counts.tolist()},
            "density": None if self.density is None else {
                "bandwidth": self.density.bandwidth,
                "grid": self.density.grid.tolist(),
                "values": self.density.values.tolist(),
            },
            "density_note": self.density_note,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    def write_samples_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "split_seed", self.metric_id])
            for i, v in enumerate(self.samples):
                w.writerow([i, iteration_seed(self.master_seed, i), repr(float(v))])


def iteration_seed(master_seed: int, i: int) -> int:
    """Split seed for iteration ``i``; independent of execution order."""
    return derive_seed(master_seed, i)


def summarize(samples: np.ndarray) -> dict:
    q5, q50, q95 = np.percentile(samples, [5, 50, 95])
    return {
        "mean": float(np.mean(samples)),
        "std": float(np.std(samples, ddof=1)) if len(samples) > 1 else 0.0,
        "min": float(np.min(samples)),
        "max": float(np.max(samples)),
        "q05": float(q5),
        "q50": float(q50),
        "q95": float(q95),
    }


def monte_carlo(recipe, fm: FeatureMatrix, target, n: int = 1000, ratio: float = 0.7,
                metric: str = "accuracy", master_seed: int = 0, model_id: str | None = None,
                workers: int | None = None) -> McReport:
    """Repeat: random ratio split, fit ``recipe`` afresh, score the held-out rows."""
    if n < 1:
        raise InputError("n must be at least 1")
    score = metric_fn(metric)
    y = np.asarray(target, dtype=float)
    if len(y) != fm.rows:
        raise InputError(f"{len(y)} targets for {fm.rows} rows")
    split_rows(fm.rows, ratio, 0)  # fail fast if the dataset cannot be split

    def run(i: int) -> float:
        try:
            tr, te = split_rows(fm.rows, ratio, iteration_seed(master_seed, i))
            model = recipe.fit(fm.take(tr), y[tr])
            return float(score(model.predict(fm.take(te)), y[te]))
        except MomentumLabError as exc:
            raise IterationFailed(i, exc) from exc

    samples = np.asarray(ordered_map(run, range(n), workers), dtype=float)
    try:
        density, note = kde(samples), ""
    except ZeroSpread as exc:
        density, note = None, f"histogram only: {exc}"
    return McReport(
        model_id or type(recipe).__name__, metric, samples, master_seed, ratio,
        summarize(samples), histogram(samples), density, note,
    )


# ---------------------------------------------------------------------------
# synthetic matches


@dataclass(frozen=True)
class SynthMatchConfig:
    n_points: int = 200
    p1_serve_win_prob: float = 0.65
    p1_return_win_prob: float = 0.35
    momentum_coupling: float = 0.0
    seed: int = 0
    match_id: str | None = None
    missing_rate: float = 0.0
    recent_window: int = 5
    points_per_game: int = 4
    games_per_set: int = 6

    def __post_init__(self):
        if self.n_points < 1:
            raise InputError("n_points must be positive")
        for name in ("p1_serve_win_prob", "p1_return_win_prob", "missing_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        if self.momentum_coupling < 0:
            raise InputError("momentum_coupling must be non-negative")

    @property
    def resolved_match_id(self) -> str:
        return self.match_id or f"synth-{self.seed}"


PROB_FLOOR, PROB_CEIL = 0.01, 0.99


def generate_match(cfg: SynthMatchConfig) -> tuple[PointRecord, ...]:
    """Simulate one match point by point.

    Service alternates every ``points_per_game`` points, starting with P1. P1's
    chance of winning a point is the serve or return base probability, shifted
    by ``momentum_coupling * (P1 wins - P2 wins over the last 5 points) / 5``
    and clamped to [0.01, 0.99] whenever the shift is active. A game goes to
    the player with more of its points (the server holds on a tie); a set goes
    to the first player to ``games_per_set`` games.
    """
    rng = np.random.default_rng(cfg.seed)
    mid = cfg.resolved_match_id
    recent: list[int] = []  # +1 P1 won, -1 P2 won
    sets = {Player.P1: 0, Player.P2: 0}
    games = {Player.P1: 0, Player.P2: 0}
    won = {Player.P1: 0, Player.P2: 0}
    set_no, game_no = 1, 1
    game_pts = {Player.P1: 0, Player.P2: 0}
    server = Player.P1
    out = []
    for t in range(cfg.n_points):
        base = cfg.p1_serve_win_prob if server is Player.P1 else cfg.p1_return_win_prob
        if cfg.momentum_coupling > 0:
            shift = cfg.momentum_coupling * sum(recent[-cfg.recent_window:]) / cfg.recent_window
            prob = min(max(base + shift, PROB_FLOOR), PROB_CEIL)
        else:
            prob = base
        victor = Player.P1 if rng.random() < prob else Player.P2
        recent.append(1 if victor is Player.P1 else -1)
        won[victor] += 1
        game_pts[victor] += 1

        # covariates; always drawn so the stream does not depend on missing_rate
        rally = 1 + int(rng.poisson(3.0))
        speed = round(float(max(60.0, rng.normal(112.0, 10.0))), 1)
        dist = [round(rally * float(rng.uniform(2.0, 8.0)), 3) for _ in range(2)]
        depth = "D" if rng.random() < 0.6 else "ND"
        drop_speed, drop_depth = rng.random() < cfg.missing_rate, rng.random() < cfg.missing_rate

        out.append(PointRecord(
            match_id=mid, set_no=set_no, game_no=game_no, point_no=t + 1,
            server=server, point_victor=victor, player1="Player A", player2="Player B",
            p1_sets=sets[Player.P1], p2_sets=sets[Player.P2],
            p1_points_won=won[Player.P1], p2_points_won=won[Player.P2],
            speed_mph=None if drop_speed else speed, rally_count=rally,
            p1_distance_run=dist[0], p2_distance_run=dist[1],
            return_depth=None if drop_depth else depth,
        ))

        if sum(game_pts.values()) == cfg.points_per_game:
            if game_pts[Player.P1] == game_pts[Player.P2]:
                game_winner = server
            else:
                game_winner = max(game_pts, key=game_pts.get)
            games[game_winner] += 1
            game_pts = {Player.P1: 0, Player.P2: 0}
            server = server.other
            game_no += 1
            if games[game_winner] == cfg.games_per_set:
                sets[game_winner] += 1
                games = {Player.P1: 0, Player.P2: 0}
                set_no += 1
                game_no = 1
    return tuple(out)


def winner_bits(points: Sequence[PointRecord]) -> np.ndarray:
    """1 where P1 won the point, else 0."""
    return np.array([1 if r.point_victor is Player.P1 else 0 for r in points], dtype=int)
