"""Point-by-point match records: CSV parsing, cleaning, encoding, scaling."""

from __future__ import annotations

import csv
import dataclasses
import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    AllColumnsDropped,
    ColumnMismatch,
    EmptyFile,
    InputError,
    MalformedRow,
    MissingRequiredColumn,
    UnknownColumn,
)

REQUIRED_COLUMNS = ("match_id", "set_no", "game_no", "point_no", "server", "point_victor")
IDENTIFIER_COLUMNS = ("match_id", "player1", "player2")
COUNT_COLUMNS = ("p1_sets", "p2_sets", "p1_points_won", "p2_points_won")
OPTIONAL_NUMERIC = {
    "speed_mph": float,
    "rally_count": int,
    "p1_distance_run": float,
    "p2_distance_run": float,
}
OPTIONAL_CATEGORICAL = ("return_depth",)
CORE_COLUMNS = (
    "match_id", "player1", "player2", "set_no", "game_no", "point_no", "server",
    "point_victor", *COUNT_COLUMNS, *OPTIONAL_NUMERIC, *OPTIONAL_CATEGORICAL,
)
UNKNOWN = "UNKNOWN"

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class Player(enum.IntEnum):
    P1 = 1
    P2 = 2

    @classmethod
    def parse(cls, text: str) -> "Player":
        t = text.strip().upper()
        if t in ("1", "P1", "1.0"):
            return cls.P1
        if t in ("2", "P2", "2.0"):
            return cls.P2
        raise ValueError(f"expected 1/2 or P1/P2, got {text!r}")

    @property
    def other(self) -> "Player":
        return Player.P2 if self is Player.P1 else Player.P1


RowKey = tuple  # (match_id, set_no, game_no, point_no)


@dataclass(frozen=True)
class PointRecord:
    match_id: str
    set_no: int
    game_no: int
    point_no: int
    server: Player
    point_victor: Player
    player1: str = ""
    player2: str = ""
    p1_sets: int = 0
    p2_sets: int = 0
    p1_points_won: int = 0
    p2_points_won: int = 0
    speed_mph: float | None = None
    rally_count: int | None = None
    p1_distance_run: float | None = None
    p2_distance_run: float | None = None
    return_depth: str | None = None
    extra: Mapping[str, float | str | None] = field(default_factory=dict, hash=False)

    @property
    def key(self) -> RowKey:
        return (self.match_id, self.set_no, self.game_no, self.point_no)

    def get(self, name: str) -> Any:
        if name in CORE_COLUMNS:
            return getattr(self, name)
        return self.extra.get(name)

    def winner_is(self, player: Player) -> bool:
        return self.point_victor == player


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    kind: str
    missing_count: int


@dataclass(frozen=True)
class MatchDataset:
    matches: Mapping[str, tuple[PointRecord, ...]]
    column_catalog: tuple[ColumnInfo, ...]

    def __post_init__(self):
        # Freeze ordering; callers may pass lists.
        object.__setattr__(
            self, "matches", {k: tuple(v) for k, v in self.matches.items()}
        )
        object.__setattr__(self, "column_catalog", tuple(self.column_catalog))

    def records(self) -> Iterator[PointRecord]:
        for recs in self.matches.values():
            yield from recs

    @property
    def n_records(self) -> int:
        return sum(len(r) for r in self.matches.values())

    def column_names(self) -> list[str]:
        return [c.name for c in self.column_catalog]

    def column_info(self, name: str) -> ColumnInfo:
        for c in self.column_catalog:
            if c.name == name:
                return c
        raise UnknownColumn(name)

    def column(self, name: str) -> list[Any]:
        self.column_info(name)
        return [r.get(name) for r in self.records()]


# ---------------------------------------------------------------------------
# parsing


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_int(text: str) -> int | None:
    v = _parse_float(text)
    if v is None or v != int(v):
        return None
    return int(v)


def _infer_kind(cells: Iterable[str]) -> str:
    seen = False
    for c in cells:
        if c == "":
            continue
        seen = True
        if _parse_float(c) is None:
            return CATEGORICAL
    return NUMERIC if seen else CATEGORICAL


def parse_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> MatchDataset:
    """Read a point-by-point CSV into a :class:`MatchDataset`.

    ``schema`` overrides the inferred kind (``"numeric"``/``"categorical"``) of
    non-canonical columns. Unparseable optional cells count as missing.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        body = []
        for row in reader:
            if not any(c.strip() for c in row):
                continue
            body.append((reader.line_num, row))
    return _build_dataset(header, body, schema or {})


def _build_dataset(header: list[str], body: list[tuple[int, list[str]]], schema) -> MatchDataset:
    for name in REQUIRED_COLUMNS:
        if name not in header:
            raise MissingRequiredColumn(name)
    dupes = [n for n, c in Counter(header).items() if c > 1]
    if dupes:
        raise InputError(f"duplicate column(s) in header: {', '.join(dupes)}")
    if not body:
        raise EmptyFile("no data rows")

    extras = [h for h in header if h not in CORE_COLUMNS]
    pos = {h: i for i, h in enumerate(header)}
    for line_no, row in body:
        if len(row) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, got {len(row)}")

    kinds: dict[str, str] = {}
    for h in extras:
        if h in schema:
            if schema[h] not in (NUMERIC, CATEGORICAL):
                raise InputError(f"schema kind for {h!r} must be numeric or categorical")
            kinds[h] = schema[h]
        else:
            kinds[h] = _infer_kind(row[pos[h]].strip() for _, row in body)

    missing = Counter()
    by_match: dict[str, list[tuple[int, PointRecord]]] = {}
    for line_no, row in body:
        cell = {h: row[i].strip() for h, i in pos.items()}
        kw: dict[str, Any] = {"match_id": cell["match_id"]}
        if not kw["match_id"]:
            raise MalformedRow(line_no, "empty match_id")
        for name in ("set_no", "game_no", "point_no"):
            v = _parse_int(cell[name])
            if v is None or v < 1:
                raise MalformedRow(line_no, f"{name} must be a positive integer, got {cell[name]!r}")
            kw[name] = v
        for name in ("server", "point_victor"):
            try:
                kw[name] = Player.parse(cell[name])
            except ValueError as exc:
                raise MalformedRow(line_no, f"{name}: {exc}") from None
        for name in ("player1", "player2"):
            if name in cell:
                kw[name] = cell[name]
        for name in COUNT_COLUMNS:
            if name in cell:
                v = _parse_int(cell[name])
                if v is None or v < 0:
                    raise MalformedRow(line_no, f"{name} must be a non-negative integer, got {cell[name]!r}")
                kw[name] = v
        for name, conv in OPTIONAL_NUMERIC.items():
            if name in cell:
                v = (_parse_int if conv is int else _parse_float)(cell[name])
                if v is None or v < 0:
                    v = None
                    missing[name] += 1
                kw[name] = v
        for name in OPTIONAL_CATEGORICAL:
            if name in cell:
                kw[name] = cell[name] or None
                if not cell[name]:
                    missing[name] += 1
        extra: dict[str, float | str | None] = {}
        for h in extras:
            text = cell[h]
            if kinds[h] == NUMERIC:
                val = _parse_float(text) if text else None
            else:
                val = text or None
            if val is None:
                missing[h] += 1
            extra[h] = val
        kw["extra"] = extra
        by_match.setdefault(kw["match_id"], []).append((line_no, PointRecord(**kw)))

    matches = {}
    for mid, items in by_match.items():
        items.sort(key=lambda it: it[1].key[1:])
        for (_, a), (line_no, b) in zip(items, items[1:]):
            if a.key == b.key:
                raise MalformedRow(line_no, f"duplicate point {b.key}")
        matches[mid] = tuple(r for _, r in items)

    catalog = []
    for h in header:
        if h in IDENTIFIER_COLUMNS or h in OPTIONAL_CATEGORICAL:
            kind = CATEGORICAL
        elif h in CORE_COLUMNS:
            kind = NUMERIC
        else:
            kind = kinds[h]
        catalog.append(ColumnInfo(h, kind, missing[h]))
    return MatchDataset(matches, tuple(catalog))


def dataset_from_records(records: Iterable[PointRecord]) -> MatchDataset:
    """Group core-column records by match, in the order given."""
    matches: dict[str, list[PointRecord]] = {}
    for r in records:
        matches.setdefault(r.match_id, []).append(r)
    recs = [r for rs in matches.values() for r in rs]
    catalog = []
    for h in CORE_COLUMNS:
        kind = CATEGORICAL if h in IDENTIFIER_COLUMNS or h in OPTIONAL_CATEGORICAL else NUMERIC
        catalog.append(ColumnInfo(h, kind, sum(1 for r in recs if r.get(h) is None)))
    return MatchDataset(matches, tuple(catalog))


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, Player):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(ds: MatchDataset, path: str | Path) -> None:
    """Serialize ``ds`` in the same layout :func:`parse_csv` reads."""
    names = ds.column_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in ds.records():
            w.writerow([_format_cell(rec.get(n)) for n in names])


# ---------------------------------------------------------------------------
# cleaning


def optional_columns(ds: MatchDataset) -> list[ColumnInfo]:
    fixed = set(REQUIRED_COLUMNS) | set(IDENTIFIER_COLUMNS) | set(COUNT_COLUMNS)
    return [c for c in ds.column_catalog if c.name not in fixed]


def clean(ds: MatchDataset, column_drop_threshold: float = 0.10) -> MatchDataset:
    """Drop sparse optional columns and impute the rest.

    A column whose missing fraction reaches ``column_drop_threshold`` is
    removed. Surviving numeric gaps get the per-match median (global median if
    the whole match is empty); categorical gaps become ``"UNKNOWN"``.
    """
    if ds.n_records == 0:
        raise InputError("cannot clean an empty dataset")
    if not 0.0 <= column_drop_threshold <= 1.0:
        raise InputError("column_drop_threshold must lie in [0, 1]")
    n = ds.n_records
    optional = optional_columns(ds)
    dropped = {
        c.name for c in optional
        if c.missing_count > 0 and c.missing_count / n >= column_drop_threshold
    }
    numeric_opt = [c.name for c in optional if c.kind == NUMERIC]
    if numeric_opt and all(name in dropped for name in numeric_opt):
        raise AllColumnsDropped(
            "every optional numeric column exceeds the missing-value threshold: "
            + ", ".join(numeric_opt)
        )
    to_fill = [c for c in optional if c.name not in dropped and c.missing_count > 0]

    global_median = {}
    for c in to_fill:
        if c.kind == NUMERIC:
            vals = [v for v in ds.column(c.name) if v is not None]
            global_median[c.name] = float(np.median(vals)) if vals else 0.0

    matches = {}
    for mid, recs in ds.matches.items():
        fill = {}
        for c in to_fill:
            if c.kind == NUMERIC:
                vals = [r.get(c.name) for r in recs if r.get(c.name) is not None]
                fill[c.name] = float(np.median(vals)) if vals else global_median[c.name]
                if OPTIONAL_NUMERIC.get(c.name) is int:
                    fill[c.name] = int(round(fill[c.name]))
            else:
                fill[c.name] = UNKNOWN
        out = []
        for r in recs:
            changes: dict[str, Any] = {}
            extra = {k: v for k, v in r.extra.items() if k not in dropped}
            for name in dropped:
                if name in CORE_COLUMNS:
                    changes[name] = None
            for name, value in fill.items():
                if r.get(name) is None:
                    if name in CORE_COLUMNS:
                        changes[name] = value
                    else:
                        extra[name] = value
            out.append(dataclasses.replace(r, extra=extra, **changes))
        matches[mid] = tuple(out)

    catalog = tuple(
        ColumnInfo(c.name, c.kind, 0)
        for c in ds.column_catalog
        if c.name not in dropped
    )
    return MatchDataset(matches, catalog)


def dropped_columns(before: MatchDataset, after: MatchDataset) -> list[str]:
    kept = set(after.column_names())
    return [n for n in before.column_names() if n not in kept]


# ---------------------------------------------------------------------------
# feature matrices


class Stage(enum.IntEnum):
    RAW = 0
    ENCODED = 1
    STANDARDIZED = 2
    REDUCED = 3


class FeatureMatrix:
    """Named numeric columns over points; read-only after construction."""

    def __init__(
        self,
        names: Sequence[str],
        data: np.ndarray,
        stage: Stage,
        row_keys: Sequence[RowKey] | None = None,
    ):
        data = np.array(data, dtype=float, copy=True)
        if data.ndim == 1 and len(names) == 0:
            data = data.reshape(len(data), 0)
        if data.ndim != 2:
            raise InputError("feature data must be two-dimensional")
        if data.shape[1] != len(names):
            raise InputError(f"{len(names)} names for {data.shape[1]} columns")
        if len(set(names)) != len(names):
            raise InputError("duplicate feature names")
        if row_keys is None:
            row_keys = [("", 0, 0, i + 1) for i in range(data.shape[0])]
        row_keys = tuple(tuple(k) for k in row_keys)
        if len(row_keys) != data.shape[0]:
            raise InputError("row_keys length must equal the number of rows")
        if stage >= Stage.ENCODED and np.isnan(data).any():
            raise InputError("encoded feature matrices may not contain missing values")
        data.setflags(write=False)
        self.names = tuple(names)
        self.data = data
        self.stage = Stage(stage)
        self.row_keys = row_keys

    @classmethod
    def from_columns(cls, columns: Sequence[tuple[str, Sequence[float]]], stage=Stage.ENCODED,
                     row_keys=None) -> "FeatureMatrix":
        names = [n for n, _ in columns]
        if columns:
            data = np.column_stack([np.asarray(v, dtype=float) for _, v in columns])
        else:
            data = np.zeros((len(row_keys or ()), 0))
        return cls(names, data, stage, row_keys)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def columns(self) -> list[tuple[str, np.ndarray]]:
        return [(n, self.data[:, j]) for j, n in enumerate(self.names)]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownColumn(name) from None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=int)
        return FeatureMatrix(self.names, self.data[rows], self.stage,
                             [self.row_keys[i] for i in rows])

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.index(n) for n in names]
        return FeatureMatrix(list(names), self.data[:, idx], self.stage, self.row_keys)

    def drop(self, names: Iterable[str]) -> "FeatureMatrix":
        gone = set(names)
        for n in gone:
            self.index(n)
        return self.select([n for n in self.names if n not in gone])

    def replace(self, **changes) -> "FeatureMatrix":
        kw = {"names": self.names, "data": self.data, "stage": self.stage,
              "row_keys": self.row_keys}
        kw.update(changes)
        return FeatureMatrix(**kw)

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            self.names == other.names
            and self.stage == other.stage
            and self.row_keys == other.row_keys
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"FeatureMatrix(rows={self.rows}, cols={len(self.names)}, stage={self.stage.name})"

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "stage": self.stage.name,
            "row_keys": [list(k) for k in self.row_keys],
            "data": self.data.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureMatrix":
        data = np.asarray(doc["data"], dtype=float).reshape(len(doc["row_keys"]), len(doc["names"]))
        return cls(doc["names"], data, Stage[doc["stage"]], [tuple(k) for k in doc["row_keys"]])


def one_hot(ds: MatchDataset) -> FeatureMatrix:
    """Encode a cleaned dataset as an ENCODED feature matrix.

    Categorical columns expand to ``<col>=<value>`` indicators in order of
    first appearance; ``server``/``point_victor`` stay single ordinal columns
    (1.0 for P1, 2.0 for P2). Identifier columns are not features.
    """
    recs = list(ds.records())
    columns: list[tuple[str, list[float]]] = []
    for info in ds.column_catalog:
        if info.name in IDENTIFIER_COLUMNS:
            continue
        values = [r.get(info.name) for r in recs]
        if any(v is None for v in values):
            raise InputError(f"column {info.name!r} has missing values; clean the dataset first")
        if info.kind == NUMERIC:
            columns.append((info.name, [float(v) for v in values]))
        else:
            levels = list(dict.fromkeys(str(v) for v in values))
            for lvl in levels:
                columns.append((f"{info.name}={lvl}", [1.0 if str(v) == lvl else 0.0 for v in values]))
    return FeatureMatrix.from_columns(columns, Stage.ENCODED, [r.key for r in recs])


@dataclass(frozen=True)
class Scaler:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def transform(self, fm: FeatureMatrix) -> FeatureMatrix:
        if fm.names != self.names:
            raise ColumnMismatch("scaler was fitted on different columns")
        safe = np.where(self.std > 0, self.std, 1.0)
        out = np.where(self.std > 0, (fm.data - self.mean) / safe, 0.0)
        return fm.replace(data=out, stage=Stage.STANDARDIZED)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scaler":
        return cls(tuple(doc["names"]), np.asarray(doc["mean"], float), np.asarray(doc["std"], float))


def standardize(fm: FeatureMatrix) -> tuple[FeatureMatrix, Scaler]:
    """Z-score every column with the population std; constant columns become 0."""
    if fm.stage != Stage.ENCODED:
        raise InputError(f"standardize expects an ENCODED matrix, got {fm.stage.name}")
    if fm.rows == 0:
        raise InputError("cannot standardize an empty matrix")
    mean = fm.data.mean(axis=0)
    std = fm.data.std(axis=0)
    # exact-constant guard; float noise in the mean would otherwise yield +-1
    std = np.where(np.ptp(fm.data, axis=0) == 0, 0.0, std)
    scaler = Scaler(fm.names, mean, std)
    return scaler.transform(fm), scaler


# ---------------------------------------------------------------------------
# JSON documents


def _record_to_dict(r: PointRecord) -> dict:
    d = {name: getattr(r, name) for name in CORE_COLUMNS}
    d["server"] = int(r.server)
    d["point_victor"] = int(r.point_victor)
    d["extra"] = dict(r.extra)
    return d


def _record_from_dict(d: Mapping) -> PointRecord:
    kw = dict(d)
    kw["server"] = Player(kw["server"])
    kw["point_victor"] = Player(kw["point_victor"])
    kw["extra"] = dict(kw.get("extra", {}))
    return PointRecord(**kw)


def dataset_to_dict(ds: MatchDataset) -> dict:
    return {
        "column_catalog": [dataclasses.asdict(c) for c in ds.column_catalog],
        "matches": {mid: [_record_to_dict(r) for r in recs] for mid, recs in ds.matches.items()},
    }


def dataset_from_dict(doc: Mapping) -> MatchDataset:
    return MatchDataset(
        {mid: tuple(_record_from_dict(r) for r in recs) for mid, recs in doc["matches"].items()},
        tuple(ColumnInfo(**c) for c in doc["column_catalog"]),
    )
