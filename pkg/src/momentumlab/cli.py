"""Command-line pipeline: ingest, train, momentum, analyze, montecarlo, synth, replay.

Every command writes ``<command>_manifest.json`` next to its outputs. The
manifest holds the full effective configuration, so ``replay`` can re-run a
command and reproduce its CSV/JSON outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from ._parallel import derive_seed
from .errors import InputError, InvariantViolation, LabelOutOfDomain
from .features import DEFAULT_GROUP_PLAN, fit_group_fusion
from .fusion import FusionMode, FusionRecipe, default_specs, fit_stacking, fit_weighted, fusion_to_dict
from .ingest import (
    FeatureMatrix,
    MatchDataset,
    Player,
    clean,
    dataset_from_dict,
    dataset_from_records,
    dataset_to_dict,
    dropped_columns,
    one_hot,
    parse_csv,
    standardize,
    write_csv,
)
from .learners.metrics import CLASSIFICATION, evaluate
from .learners.models import Kind, LearnerSpec
from .learners.validation import split_rows, tune_rounds
from .momentum import MomentumConfig, compute_momentum, write_momentum_csv
from .signals import (
    VARIABLES,
    BinarizeRule,
    aggregate,
    analyze_match,
    write_aggregate_table,
    write_runs_table,
)
from .simlab import SynthMatchConfig, generate_match, monte_carlo
from . import svg

DATASET_FORMAT = "momentumlab/dataset"
TRAINED_FORMAT = "momentumlab/trained"
NEXT_POINT = "next-point-victor"
LEARNER_KINDS = {"svm": Kind.SVM_LINEAR, "rf": Kind.RANDOM_FOREST, "gbt": Kind.GBT,
                 "logistic": Kind.LOGISTIC}


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write(path: Path, write: Callable[[Path], None]) -> None:
    """Write through a temp file in the same directory, then rename into place."""
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


class Outputs:
    """Collects the files a command writes, in order."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.names: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, write: Callable[[Path], None]) -> Path:
        path = self.dir / name
        atomic_write(path, write)
        if name not in self.names:
            self.names.append(name)
        return path

    def text(self, name: str, text: str) -> Path:
        return self.write(name, lambda p: p.write_text(text, encoding="utf-8"))

    def json(self, name: str, doc) -> Path:
        return self.text(name, json_text(doc))


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", text)


# ---------------------------------------------------------------------------
# loading


def prepare(ds: MatchDataset, drop_threshold: float):
    cleaned = clean(ds, drop_threshold)
    fm, scaler = standardize(one_hot(cleaned))
    return cleaned, fm, scaler


def load_input(path: str) -> tuple[MatchDataset, FeatureMatrix | None]:
    """A dataset.json from ``ingest`` or a raw point CSV (features absent)."""
    p = Path(path)
    if p.suffix.lower() == ".json":
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
        if doc.get("format") != DATASET_FORMAT:
            raise InputError(f"{path}: not a dataset document")
        return dataset_from_dict(doc["dataset"]), FeatureMatrix.from_dict(doc["features"])
    return parse_csv(p), None


def load_features(path: str, drop_threshold: float = 0.10) -> tuple[MatchDataset, FeatureMatrix]:
    ds, fm = load_input(path)
    if fm is None:
        ds, fm, _ = prepare(ds, drop_threshold)
    return ds, fm


def select_matches(ds: MatchDataset, wanted: Sequence[str] | None) -> list[str]:
    if not wanted:
        return list(ds.matches)
    for mid in wanted:
        if mid not in ds.matches:
            raise InputError(f"unknown match {mid!r}")
    return list(wanted)


def build_target(ds: MatchDataset, fm: FeatureMatrix, label: str) -> tuple[FeatureMatrix, np.ndarray]:
    """Binary target aligned with feature rows: 1 means P1 (or a 1 in the column)."""
    recs = list(ds.records())
    if [r.key for r in recs] != [tuple(k) for k in fm.row_keys]:
        raise InputError("feature rows do not line up with the dataset records")
    if label == NEXT_POINT:
        rows, y = [], []
        for i, r in enumerate(recs[:-1]):
            nxt = recs[i + 1]
            if nxt.match_id == r.match_id:
                rows.append(i)
                y.append(1.0 if nxt.point_victor is Player.P1 else 0.0)
        return fm.take(np.asarray(rows, dtype=int)), np.asarray(y)
    ds.column_info(label)
    y = []
    for r in recs:
        v = r.get(label)
        if isinstance(v, Player):
            y.append(1.0 if v is Player.P1 else 0.0)
        elif v in (0, 1, 0.0, 1.0):
            y.append(float(v))
        else:
            raise LabelOutOfDomain(f"label column {label!r} must be a player or 0/1, got {v!r}")
    leak = [n for n in fm.names if n == label or n.startswith(label + "=")]
    return fm.drop(leak), np.asarray(y)


def momentum_config(args) -> MomentumConfig:
    return MomentumConfig(args.window, args.decay, args.serve_weight, args.return_weight,
                          args.streak_bonus, args.streak_cap)


def learner_recipe(name: str, seed: int, k: int):
    if name in LEARNER_KINDS:
        return LearnerSpec(LEARNER_KINDS[name], {}, seed, CLASSIFICATION)
    mode = FusionMode.WEIGHTED_AVERAGE if name == "weighted" else FusionMode.STACKING
    return FusionRecipe(mode, default_specs(seed), k, seed)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, out: Outputs) -> dict:
    raw = parse_csv(args.input)
    cleaned, fm, scaler = prepare(raw, args.drop_threshold)
    dropped = dropped_columns(raw, cleaned)
    out.json("dataset.json", {
        "format": DATASET_FORMAT,
        "version": 1,
        "dropped_columns": dropped,
        "dataset": dataset_to_dict(cleaned),
        "features": fm.to_dict(),
    })
    out.json("scaler.json", scaler.to_dict())
    return {"dropped_columns": dropped, "n_records": cleaned.n_records, "n_features": len(fm.names)}


METRIC_COLUMNS = ("model", "mape", "mae", "r2", "accuracy")


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA"
    return repr(float(v))


def cmd_train(args, out: Outputs) -> dict:
    ds, fm = load_features(args.input)
    fm, y = build_target(ds, fm, args.label)
    if args.test_matches:
        test_ids = set(args.test_matches)
        select_matches(ds, args.test_matches)
        is_test = np.array([k[0] in test_ids for k in fm.row_keys])
        tr, te = np.flatnonzero(~is_test), np.flatnonzero(is_test)
        if len(tr) == 0 or len(te) == 0:
            raise InputError("--test-matches leaves an empty train or test set")
    else:
        tr, te = split_rows(fm.rows, args.ratio, args.seed)
    train_fm, test_fm = fm.take(tr), fm.take(te)

    group_doc = None
    if args.fuse_groups:
        plan = DEFAULT_GROUP_PLAN.restrict_to(train_fm.names)
        gf = fit_group_fusion(train_fm, plan)
        train_fm, test_fm = gf.transform(train_fm), gf.transform(test_fm)
        group_doc = gf.to_dict()

    specs = list(default_specs(args.seed))
    tuning = None
    if args.tune_rounds:
        best, results = tune_rounds(specs[2], train_fm, y[tr], args.tune_rounds, args.k, args.seed, "accuracy")
        specs[2] = specs[2].with_params(num_round=best)
        tuning = {"best": best, "cv": {str(n): r.to_dict() for n, r in results.items()}}

    if args.mode == "weighted":
        model = fit_weighted(specs, train_fm, y[tr], args.k, args.seed)
    else:
        model = fit_stacking(specs, train_fm, y[tr], args.k, args.seed)

    rows = []
    for spec, base in zip(specs, model.base):
        rows.append((spec.kind.value, evaluate(base.predict(test_fm), y[te], CLASSIFICATION)))
    rows.append(("fused", evaluate(model.predict(test_fm), y[te], CLASSIFICATION)))

    def write_metrics(path: Path):
        lines = [",".join(METRIC_COLUMNS)]
        for name, m in rows:
            lines.append(",".join([name, _cell(m.mape), _cell(m.mae), _cell(m.r2), _cell(m.accuracy)]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    out.json("model.json", {
        "format": TRAINED_FORMAT,
        "version": 1,
        "label": args.label,
        "feature_names": list(train_fm.names),
        "group_fusion": group_doc,
        "rounds_tuning": tuning,
        "split": {"train_rows": len(tr), "test_rows": len(te)},
        "fusion": fusion_to_dict(model),
    })
    out.write("metrics.csv", write_metrics)
    return {"weights": model.weights.tolist(), "train_rows": len(tr), "test_rows": len(te)}


def cmd_momentum(args, out: Outputs) -> dict:
    ds, _ = load_input(args.input)
    cfg = momentum_config(args)
    ids = select_matches(ds, args.match)
    series = [compute_momentum(ds.matches[mid], cfg) for mid in ids]
    out.write("momentum.csv", lambda p: write_momentum_csv(series, p))
    turning = {}
    for ser in series:
        a = analyze_match(ds.matches[ser.match_id], cfg)
        tp = {"p1": a.traces[Player.P1].turning_points, "p2": a.traces[Player.P2].turning_points}
        turning[ser.match_id] = tp
        tag = safe_name(ser.match_id)
        out.text(f"momentum_{tag}.svg", svg.line_chart(
            {"p1": ser.p1, "p2": ser.p2}, f"Momentum, match {ser.match_id}"))
        out.text(f"stacked_{tag}.svg", svg.stacked_area_chart(
            ser.p1, ser.p2, f"Momentum share, match {ser.match_id}"))
        out.text(f"turning_{tag}.svg", svg.cusum_chart(
            {"p1": a.traces[Player.P1].S, "p2": a.traces[Player.P2].S}, tp,
            f"CUSUM and turning points, match {ser.match_id}"))
    return {"matches": ids, "turning_points": turning}


def cmd_analyze(args, out: Outputs) -> dict:
    ds, _ = load_input(args.input)
    cfg = momentum_config(args)
    ids = list(ds.matches) if args.all_matches else select_matches(ds, args.match)
    analyses = [analyze_match(ds.matches[mid], cfg, args.rule) for mid in ids]
    for a in analyses:
        out.write(f"runs_{safe_name(a.match_id)}.csv", lambda p, a=a: write_runs_table(a, p))
    report = aggregate(analyses)
    out.write("aggregate.csv", lambda p: write_aggregate_table(report, p))
    out.json("analysis.json", {
        "binarize_rule": BinarizeRule(args.rule).value,
        "momentum_config": cfg.as_dict(),
        "matches": {
            a.match_id: {
                "n_points": len(a.momentum),
                "turning_points": {"p1": a.traces[Player.P1].turning_points,
                                   "p2": a.traces[Player.P2].turning_points},
                "tests": {
                    v: {"applicable": t.applicable, "reason": t.reason, "sample_size": t.sample_size,
                        "runs": t.result.runs if t.result else None,
                        "z": t.z, "p_value": t.p_value, "significant": t.significant}
                    for v, t in a.tests.items()
                },
            }
            for a in analyses
        },
        "aggregate": {"match_ids": report.match_ids, "std_defined": report.std_defined,
                      "stats": report.stats, "flags": {v: report.flags[v] for v in VARIABLES}},
    })
    return {"matches": ids, "rule": BinarizeRule(args.rule).value}


def cmd_montecarlo(args, out: Outputs) -> dict:
    ds, fm = load_features(args.input)
    fm, y = build_target(ds, fm, args.label)
    recipe = learner_recipe(args.model, args.seed, args.k)
    report = monte_carlo(recipe, fm, y, args.n, args.ratio, args.metric, args.seed, args.model)
    out.json("mc.json", report.to_dict())
    out.write("mc_samples.csv", report.write_samples_csv)
    d = report.density
    out.text("density.svg", svg.density_chart(
        None if d is None else d.grid, None if d is None else d.values,
        report.hist.edges, report.hist.counts,
        f"Monte Carlo {args.metric} over {args.n} splits", args.metric))
    return {"summary": report.summary, "density_note": report.density_note}


def cmd_synth(args, out: Outputs) -> dict:
    records = []
    for j in range(args.matches):
        cfg = SynthMatchConfig(
            n_points=args.points, p1_serve_win_prob=args.serve_prob, p1_return_win_prob=args.return_prob,
            momentum_coupling=args.coupling, seed=derive_seed(args.seed, j),
            match_id=f"synth-{args.seed}-{j + 1:03d}", missing_rate=args.missing_rate,
        )
        records.extend(generate_match(cfg))
    ds = dataset_from_records(records)
    out.write(args.out, lambda p: write_csv(ds, p))
    return {"matches": list(ds.matches), "n_records": ds.n_records}


# ---------------------------------------------------------------------------
# argument parsing


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_strs(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _momentum_flags(p: argparse.ArgumentParser) -> None:
    d = MomentumConfig()
    p.add_argument("--window", type=int, default=d.window)
    p.add_argument("--decay", type=float, default=d.decay)
    p.add_argument("--serve-weight", type=float, default=d.serve_win_weight)
    p.add_argument("--return-weight", type=float, default=d.return_win_weight)
    p.add_argument("--streak-bonus", type=float, default=d.streak_bonus)
    p.add_argument("--streak-cap", type=float, default=d.streak_cap)


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "momentum": cmd_momentum,
    "analyze": cmd_analyze,
    "montecarlo": cmd_montecarlo,
    "synth": cmd_synth,
}
INPUT_COMMANDS = ("ingest", "train", "momentum", "analyze", "montecarlo")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentumlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"momentumlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, with_input=True):
        p = sub.add_parser(name, help=help_text)
        if with_input:
            p.add_argument("input", help="point CSV or dataset.json")
        p.add_argument("--out-dir", default=".", help="directory for outputs and the manifest")
        return p

    p = command("ingest", "parse, clean, encode and standardize a point CSV")
    p.add_argument("--drop-threshold", type=float, default=0.10)

    p = command("train", "train the three base learners and their fusion")
    p.add_argument("--mode", choices=("weighted", "stacking"), default="weighted")
    p.add_argument("--label", default=NEXT_POINT, help=f"label column or {NEXT_POINT!r}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=10, help="cross-validation folds")
    p.add_argument("--ratio", type=float, default=0.7, help="training fraction of the random split")
    p.add_argument("--test-matches", type=_csv_strs, default=None,
                   help="comma-separated match ids to hold out instead of a random split")
    p.add_argument("--fuse-groups", action="store_true", help="collapse related columns by PCA")
    p.add_argument("--tune-rounds", type=_csv_ints, default=None,
                   help="comma-separated GBT round counts to choose from by CV")

    p = command("momentum", "momentum series and charts")
    p.add_argument("--match", action="append", default=None)
    _momentum_flags(p)

    p = command("analyze", "CUSUM turning points and runs tests")
    p.add_argument("--match", action="append", default=None)
    p.add_argument("--all-matches", action="store_true")
    p.add_argument("--rule", choices=[r.value for r in BinarizeRule], default=BinarizeRule.ABOVE_MEDIAN.value)
    _momentum_flags(p)

    p = command("montecarlo", "metric spread over repeated random splits")
    p.add_argument("--model", choices=(*LEARNER_KINDS, "weighted", "stacking"), default="svm")
    p.add_argument("--label", default=NEXT_POINT)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--metric", default="accuracy")
    p.add_argument("--k", type=int, default=10, help="folds used inside fusion recipes")
    p.add_argument("--seed", type=int, default=0)

    p = command("synth", "generate synthetic matches in the point CSV layout", with_input=False)
    d = SynthMatchConfig()
    p.add_argument("--points", type=int, default=d.n_points)
    p.add_argument("--matches", type=int, default=1)
    p.add_argument("--serve-prob", type=float, default=d.p1_serve_win_prob)
    p.add_argument("--return-prob", type=float, default=d.p1_return_win_prob)
    p.add_argument("--coupling", type=float, default=0.3)
    p.add_argument("--missing-rate", type=float, default=d.missing_rate)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="match.csv", help="file name inside --out-dir")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None, help="defaults to the manifest's directory")
    return parser


# ---------------------------------------------------------------------------
# running


def manifest_name(command: str) -> str:
    return f"{command}_manifest.json"


def run_command(command: str, config: dict, out_dir: Path) -> Path:
    """Run ``command`` with a complete configuration and write its manifest."""
    if command not in COMMANDS:
        raise InputError(f"unknown command {command!r}")
    if command == "synth" and (Path(config["out"]).name != config["out"] or config["out"].endswith(".json")):
        raise InputError("--out must be a plain CSV file name")
    args = argparse.Namespace(**config)
    out = Outputs(out_dir)
    details = COMMANDS[command](args, out)
    manifest = {
        "tool": "momentumlab",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "outputs": out.names,
        "details": details,
    }
    return out.json(manifest_name(command), manifest)


def replay(manifest_path: str, out_dir: str | None = None) -> Path:
    path = Path(manifest_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{manifest_path}: not valid JSON ({exc})") from None
    if doc.get("tool") != "momentumlab" or "command" not in doc:
        raise InputError(f"{manifest_path}: not a run manifest")
    target = Path(out_dir) if out_dir else path.parent
    return run_command(doc["command"], dict(doc["config"]), target.resolve())


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            written = replay(args.manifest, args.out_dir)
        else:
            config = {k: v for k, v in vars(args).items() if k not in ("command", "out_dir")}
            if args.command in INPUT_COMMANDS:
                config["input"] = str(Path(args.input).resolve())
            written = run_command(args.command, config, Path(args.out_dir).resolve())
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
