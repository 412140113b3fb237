import csv
import json
import os
import shutil
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from momentumlab.cli import main
from momentumlab.fusion import fusion_from_dict

GOLDEN = Path(__file__).parent / "golden"
UPDATE = os.environ.get("MLAB_UPDATE_GOLDEN") == "1"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Synthetic matches, ingested once for the module."""
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--matches", "3", "--points", "80", "--seed", "5", "--missing-rate", "0.02",
               "--out-dir", root / "synth") == 0
    assert run("ingest", root / "synth" / "match.csv", "--out-dir", root / "ingest") == 0
    return root


def manifest(path):
    return json.loads(Path(path).read_text())


def replay_identical(out_dir: Path, command: str, tmp: Path):
    target = tmp / f"replay_{command}"
    assert run("replay", out_dir / f"{command}_manifest.json", "--out-dir", target) == 0
    for name in manifest(out_dir / f"{command}_manifest.json")["outputs"]:
        assert (out_dir / name).read_bytes() == (target / name).read_bytes(), name


def test_synth_and_ingest_outputs(work):
    m = manifest(work / "ingest" / "ingest_manifest.json")
    assert m["outputs"] == ["dataset.json", "scaler.json"]
    assert m["config"]["drop_threshold"] == 0.1
    doc = json.loads((work / "ingest" / "dataset.json").read_text())
    assert doc["features"]["stage"] == "STANDARDIZED"
    header = next(csv.reader(open(work / "synth" / "match.csv")))
    assert header[:8] == ["match_id", "player1", "player2", "set_no", "game_no", "point_no", "server",
                          "point_victor"]


def test_ingest_records_dropped_column(tmp_path):
    from conftest import row, write_csv_rows
    rows = [row(point_no=i + 1, depth="" if i < 12 else "D") for i in range(100)]
    src = write_csv_rows(tmp_path / "in.csv", rows)
    assert run("ingest", src, "--out-dir", tmp_path / "o") == 0
    assert manifest(tmp_path / "o" / "ingest_manifest.json")["details"]["dropped_columns"] == ["return_depth"]


def test_missing_column_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("match_id,set_no,game_no,point_no,server\nm,1,1,1,1\n")
    assert run("ingest", bad, "--out-dir", tmp_path / "o") == 2
    assert "point_victor" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert run("ingest", tmp_path / "nope.csv", "--out-dir", tmp_path) == 2


def test_invariant_violation_exit_3(tmp_path, monkeypatch):
    from momentumlab import cli
    from momentumlab.errors import InvariantViolation

    def broken(args, out):
        raise InvariantViolation("weights do not sum to 1")
    monkeypatch.setitem(cli.COMMANDS, "synth", broken)
    assert run("synth", "--out-dir", tmp_path) == 3


def test_train_weighted_and_stacking(work, tmp_path):
    ds = work / "ingest" / "dataset.json"
    assert run("train", ds, "--k", "3", "--out-dir", tmp_path / "w") == 0
    doc = json.loads((tmp_path / "w" / "model.json").read_text())
    fusion = fusion_from_dict(doc["fusion"])
    assert abs(sum(fusion.weights) - 1.0) <= 1e-9
    rows = list(csv.reader(open(tmp_path / "w" / "metrics.csv")))
    assert rows[0] == ["model", "mape", "mae", "r2", "accuracy"]
    assert [r[0] for r in rows[1:]] == ["SVM_LINEAR", "RANDOM_FOREST", "GBT", "fused"]

    assert run("train", ds, "--k", "3", "--mode", "stacking", "--fuse-groups", "--tune-rounds", "5,20",
               "--test-matches", "synth-5-003", "--out-dir", tmp_path / "s") == 0
    doc = json.loads((tmp_path / "s" / "model.json").read_text())
    assert doc["fusion"]["meta"]["spec"]["kind"] == "LOGISTIC"
    assert "match_no_meta" in doc["feature_names"]
    assert doc["rounds_tuning"]["best"] in (5, 20)
    assert doc["split"]["test_rows"] == 79  # one match minus its last point


def test_train_deterministic(work, tmp_path):
    ds = work / "ingest" / "dataset.json"
    for d in ("a", "b"):
        assert run("train", ds, "--k", "3", "--seed", "4", "--out-dir", tmp_path / d) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_train_label_column(work, tmp_path):
    ds = work / "ingest" / "dataset.json"
    assert run("train", ds, "--k", "3", "--label", "server", "--out-dir", tmp_path / "l") == 0
    doc = json.loads((tmp_path / "l" / "model.json").read_text())
    assert "server" not in doc["feature_names"]
    assert run("train", ds, "--label", "speed_mph", "--out-dir", tmp_path / "bad") == 2


def test_momentum_charts_match_golden(work, tmp_path):
    out = tmp_path / "m"
    assert run("momentum", work / "synth" / "match.csv", "--match", "synth-5-001", "--out-dir", out) == 0
    names = manifest(out / "momentum_manifest.json")["outputs"]
    assert names == ["momentum.csv", "momentum_synth-5-001.svg", "stacked_synth-5-001.svg",
                     "turning_synth-5-001.svg"]
    for name in names[1:]:
        ET.parse(out / name)
        golden = GOLDEN / name
        if UPDATE:
            shutil.copy(out / name, golden)
        assert (out / name).read_text() == golden.read_text(), name


def test_turning_chart_matches_analysis(work, tmp_path):
    csv_path = work / "synth" / "match.csv"
    assert run("momentum", csv_path, "--out-dir", tmp_path / "m") == 0
    assert run("analyze", csv_path, "--all-matches", "--out-dir", tmp_path / "a") == 0
    analysis = json.loads((tmp_path / "a" / "analysis.json").read_text())
    ns = {"s": "http://www.w3.org/2000/svg"}
    for mid, info in analysis["matches"].items():
        root = ET.parse(tmp_path / "m" / f"turning_{mid}.svg").getroot()
        for player in ("p1", "p2"):
            marks = [int(c.get("data-index")) for c in root.iterfind(".//s:circle", ns)
                     if c.get("data-player") == player]
            assert marks == info["turning_points"][player]


def test_analyze_tables(work, tmp_path):
    out = tmp_path / "a"
    assert run("analyze", work / "ingest" / "dataset.json", "--rule", "positive_delta", "--out-dir", out) == 0
    for mid in ("synth-5-001", "synth-5-002", "synth-5-003"):
        rows = list(csv.reader(open(out / f"runs_{mid}.csv")))
        assert rows[0] == ["column_name", "sample_size", "z", "P-value"]
        assert all(r[1] == "80" for r in rows[1:])
    rows = list(csv.reader(open(out / "aggregate.csv")))
    assert rows[0] == ["", "p1_momentum", "p2_momentum", "p1_turning_points", "p2_turning_points"]
    assert rows[1][1:] == ["3.000000"] * 4
    assert json.loads((out / "analysis.json").read_text())["binarize_rule"] == "positive_delta"


def test_montecarlo_outputs(work, tmp_path):
    out = tmp_path / "mc"
    assert run("montecarlo", work / "ingest" / "dataset.json", "--n", "25", "--seed", "2", "--out-dir", out) == 0
    doc = json.loads((out / "mc.json").read_text())
    assert doc["n_iterations"] == 25 and len(doc["samples"]) == 25
    assert sum(doc["histogram"]["counts"]) == 25
    ET.parse(out / "density.svg")
    rows = list(csv.reader(open(out / "mc_samples.csv")))
    assert rows[0] == ["iteration", "split_seed", "accuracy"] and len(rows) == 26


def test_unknown_match_exit_2(work, tmp_path):
    assert run("momentum", work / "synth" / "match.csv", "--match", "nope", "--out-dir", tmp_path) == 2


@pytest.mark.parametrize("command,extra", [
    ("momentum", []),
    ("analyze", ["--all-matches"]),
    ("montecarlo", ["--n", "10"]),
    ("train", ["--k", "3", "--mode", "stacking"]),
])
def test_replay_byte_identical(work, tmp_path, command, extra):
    out = tmp_path / command
    src = work / "ingest" / "dataset.json"
    assert run(command, src, *extra, "--out-dir", out) == 0
    replay_identical(out, command, tmp_path)


def test_replay_synth_and_ingest(work, tmp_path):
    replay_identical(work / "synth", "synth", tmp_path)
    replay_identical(work / "ingest", "ingest", tmp_path)


def test_replay_rejects_garbage(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert run("replay", p) == 2
