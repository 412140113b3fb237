import csv

import numpy as np
import pytest
from hypothesis import settings

from momentumlab.ingest import Player, PointRecord

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

HEADER = ["match_id", "player1", "player2", "set_no", "game_no", "point_no", "server",
          "point_victor", "p1_sets", "p2_sets", "p1_points_won", "p2_points_won",
          "speed_mph", "rally_count", "p1_distance_run", "p2_distance_run", "return_depth"]


def make_points(victors, servers=None, match_id="m1"):
    """PointRecords from per-point winners (1/2); server defaults to P1 throughout."""
    servers = servers if servers is not None else [1] * len(victors)
    out, won = [], {1: 0, 2: 0}
    for i, (v, s) in enumerate(zip(victors, servers)):
        won[v] += 1
        out.append(PointRecord(match_id, 1, 1 + i // 4, i + 1, Player(s), Player(v),
                               p1_points_won=won[1], p2_points_won=won[2]))
    return out


def write_csv_rows(path, rows, header=HEADER):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def row(match_id="m1", set_no=1, game_no=1, point_no=1, server=1, victor=1, speed="100.0",
        rally="3", d1="10.0", d2="12.0", depth="D"):
    return [match_id, "A", "B", set_no, game_no, point_no, server, victor, 0, 0, 0, 0,
            speed, rally, d1, d2, depth]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
