"""CSV ingestion of rating data and small output helpers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .estimation import CountSample
from .matrix import RatingMatrix

__all__ = [
    "DataError",
    "ScoreRecord",
    "ParsedScores",
    "parse_scores_csv",
    "parse_scores_text",
    "parse_counts",
    "to_json",
    "write_csv",
]


class DataError(ValueError):
    """Malformed or out-of-range input data."""


@dataclass(frozen=True)
class ScoreRecord:
    stimulus_id: str
    rater_id: str | None
    score: int


@dataclass(frozen=True)
class ParsedScores:
    """Per-stimulus counts in file order, plus a rating matrix when every
    record names its rater."""

    stimulus_ids: tuple[str, ...]
    samples: dict
    m: int
    records: tuple[ScoreRecord, ...] = ()
    rater_ids: tuple[str, ...] = ()
    ratings: RatingMatrix | None = None

    def items(self):
        return [(sid, self.samples[sid]) for sid in self.stimulus_ids]


def parse_counts(text: str, m: int | None = None) -> CountSample:
    """Counts given as ``"2,14,6,1,1"``."""
    try:
        counts = tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError:
        raise DataError(f"counts must be comma-separated integers, got {text!r}") from None
    if m is not None and len(counts) != m:
        raise DataError(f"expected {m} counts, got {len(counts)}")
    try:
        return CountSample(counts)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _parse_int(value, line, column):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise DataError(f"line {line}: {column} must be an integer, got {value!r}") from None


def _parse_long(reader, header, m):
    has_rater = "rater_id" in header
    i_stim = header.index("stimulus_id")
    i_score = header.index("score")
    i_rater = header.index("rater_id") if has_rater else None
    records = []
    for line, row in reader:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        sid = row[i_stim].strip()
        if not sid:
            raise DataError(f"line {line}: empty stimulus_id")
        score = _parse_int(row[i_score].strip(), line, "score")
        if not (1 <= score <= m):
            raise DataError(f"line {line}: score {score} outside 1..{m}")
        rater = row[i_rater].strip() if has_rater else ""
        records.append(ScoreRecord(sid, rater or None, score))
    if not records:
        raise DataError("no data rows")

    stimulus_ids = tuple(dict.fromkeys(r.stimulus_id for r in records))
    counts = {sid: [0] * m for sid in stimulus_ids}
    for r in records:
        counts[r.stimulus_id][r.score - 1] += 1
    samples = {sid: CountSample(tuple(c)) for sid, c in counts.items()}

    ratings, rater_ids = None, ()
    if all(r.rater_id is not None for r in records):
        rater_ids = tuple(dict.fromkeys(r.rater_id for r in records))
        row_of = {rid: i for i, rid in enumerate(rater_ids)}
        col_of = {sid: j for j, sid in enumerate(stimulus_ids)}
        scores = np.zeros((len(rater_ids), len(stimulus_ids)), dtype=np.int64)
        duplicated = False
        for r in records:
            i, j = row_of[r.rater_id], col_of[r.stimulus_id]
            duplicated |= scores[i, j] != 0
            scores[i, j] = r.score
        # repeated (rater, stimulus) pairs do not fit the one-score-per-cell model
        if not duplicated:
            ratings = RatingMatrix(scores, m)
    return ParsedScores(stimulus_ids, samples, m, tuple(records), rater_ids, ratings)


def _parse_aggregate(reader, header, m):
    count_cols = header[1:]
    expected = [f"n{k}" for k in range(1, len(count_cols) + 1)]
    if count_cols != expected:
        raise DataError(f"aggregate header must be stimulus_id,n1,...,nM, got {','.join(header)}")
    if len(count_cols) != m:
        raise DataError(f"header has {len(count_cols)} count columns but m = {m}")
    samples, ids = {}, []
    for line, row in reader:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        sid = row[0].strip()
        if not sid:
            raise DataError(f"line {line}: empty stimulus_id")
        if sid in samples:
            raise DataError(f"line {line}: duplicate stimulus_id {sid!r}")
        counts = tuple(_parse_int(v.strip(), line, col) for v, col in zip(row[1:], count_cols))
        if any(c < 0 for c in counts) or sum(counts) == 0:
            raise DataError(f"line {line}: counts must be nonnegative with a positive total")
        samples[sid] = CountSample(counts)
        ids.append(sid)
    if not ids:
        raise DataError("no data rows")
    return ParsedScores(tuple(ids), samples, m)


def parse_scores_text(text: str, m: int = 5) -> ParsedScores:
    """Parse CSV content in either the long or the aggregate layout."""
    rows = [(i, row) for i, row in enumerate(csv.reader(io.StringIO(text)), start=1)
            if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataError("empty CSV")
    _, header = rows[0]
    header = [h.strip() for h in header]
    if not header or header[0] != "stimulus_id":
        raise DataError("line 1: header must start with stimulus_id")
    if "score" in header:
        return _parse_long(rows[1:], header, m)
    if len(header) > 1 and header[1] == "n1":
        return _parse_aggregate(rows[1:], header, m)
    raise DataError("line 1: header must be stimulus_id,rater_id,score or stimulus_id,n1,...,nM")


def parse_scores_csv(path, m: int = 5) -> ParsedScores:
    """Read a UTF-8 CSV of scores.

    Long layout: header ``stimulus_id,rater_id,score`` (rater_id may be
    empty or the column absent). Aggregate layout: ``stimulus_id,n1,...,nM``.
    Errors name the offending line.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not valid UTF-8") from None
    return parse_scores_text(text, m)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no infinities; keep them readable and unambiguous
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2)


def write_csv(handle, header, rows) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
