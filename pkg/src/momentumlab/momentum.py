"""Per-player momentum: a decayed sliding-window sum of weighted point wins.

For player ``p`` at point ``t``::

    s_i(p) = won_i(p) * (serve_win_weight if p served i else return_win_weight)
             * (1 + min(streak_bonus * (streak_i(p) - 1), streak_cap))
    M_t(p) = sum_{i = max(1, t - w + 1)}^{t} decay**(t - i) * s_i(p)

``streak_i(p)`` counts p's consecutive point wins ending at ``i``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMatch, InputError
from .ingest import Player, PointRecord


@dataclass(frozen=True)
class MomentumConfig:
    window: int = 10
    decay: float = 0.8
    serve_win_weight: float = 1.0
    return_win_weight: float = 1.5
    streak_bonus: float = 0.1
    streak_cap: float = 0.5

    def __post_init__(self):
        if not (isinstance(self.window, int) and self.window >= 1):
            raise InputError(f"window must be a positive integer, got {self.window!r}")
        if not 0.0 < self.decay <= 1.0:
            raise InputError(f"decay must lie in (0, 1], got {self.decay}")
        if self.serve_win_weight <= 0 or self.return_win_weight <= 0:
            raise InputError("serve/return win weights must be positive")
        if self.streak_bonus < 0 or self.streak_cap < 0:
            raise InputError("streak bonus and cap must be non-negative")

    def upper_bound(self) -> float:
        """Largest value any M_t can take under this configuration."""
        top = max(self.serve_win_weight, self.return_win_weight) * (1.0 + self.streak_cap)
        if self.decay == 1.0:
            return top * self.window
        return top * (1.0 - self.decay ** self.window) / (1.0 - self.decay)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MomentumSeries:
    match_id: str
    p1: np.ndarray
    p2: np.ndarray
    config: MomentumConfig
    row_keys: tuple[tuple, ...]

    def __len__(self) -> int:
        return len(self.p1)

    def values(self, player: Player) -> np.ndarray:
        return self.p1 if Player(player) is Player.P1 else self.p2


def point_scores(points: Sequence[PointRecord], cfg: MomentumConfig) -> dict[Player, np.ndarray]:
    """Per-point contributions s_i(p) before windowing."""
    out = {}
    for p in (Player.P1, Player.P2):
        s = np.zeros(len(points))
        streak = 0
        for i, rec in enumerate(points):
            if rec.point_victor != p:
                streak = 0
                continue
            streak += 1
            weight = cfg.serve_win_weight if rec.server == p else cfg.return_win_weight
            s[i] = weight * (1.0 + min(cfg.streak_bonus * (streak - 1), cfg.streak_cap))
        out[p] = s
    return out


def _window_sum(s: np.ndarray, window: int, decay: float) -> np.ndarray:
    # summed lag by lag so M_t only ever touches s_1..s_t (prefix-stable)
    m = np.zeros_like(s)
    for lag in range(min(window, len(s))):
        m[lag:] += decay ** lag * s[: len(s) - lag]
    return m


def compute_momentum(points: Sequence[PointRecord], cfg: MomentumConfig | None = None) -> MomentumSeries:
    cfg = cfg or MomentumConfig()
    points = list(points)
    if not points:
        raise EmptyMatch("cannot compute momentum for a match with no points")
    ids = {r.match_id for r in points}
    if len(ids) != 1:
        raise InputError(f"points span several matches: {sorted(ids)}")
    s = point_scores(points, cfg)
    return MomentumSeries(
        points[0].match_id,
        _window_sum(s[Player.P1], cfg.window, cfg.decay),
        _window_sum(s[Player.P2], cfg.window, cfg.decay),
        cfg,
        tuple(r.key for r in points),
    )


def momentum_delta(series: MomentumSeries) -> dict[Player, np.ndarray]:
    """First differences with delta_1 = M_1."""
    return {p: np.diff(series.values(p), prepend=0.0) for p in (Player.P1, Player.P2)}


MOMENTUM_CSV_COLUMNS = ("match_id", "point_index", "set_no", "game_no", "point_no",
                        "p1_momentum", "p2_momentum")


def write_momentum_csv(series: Iterable[MomentumSeries], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENTUM_CSV_COLUMNS)
        for ser in series:
            for i, key in enumerate(ser.row_keys):
                w.writerow([ser.match_id, i + 1, key[1], key[2], key[3],
                            repr(float(ser.p1[i])), repr(float(ser.p2[i]))])
