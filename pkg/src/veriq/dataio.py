"""Verification-record tabular IO and synthetic dataset generation.

The on-disk format is a plain CSV with header
``probe_id,ref_id,score,label,q1,...,qM`` and optional trailing reference
quality columns ``g1,...,gM``. Labels are ``match`` or ``nonmatch``. Scores
are similarities: higher means more similar. Floats are written with
``repr`` so that write -> parse is an exact inverse.
"""

from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MATCH = "match"
NONMATCH = "nonmatch"
LABELS = (MATCH, NONMATCH)

_FIXED_COLUMNS = ("probe_id", "ref_id", "score", "label")


class RecordsError(ValidationError):
    """Malformed records input. ``errors`` lists per-line messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class VerificationRecord:
    """One verification attempt: a score, its label, and quality features."""

    probe_id: str
    ref_id: str
    score: float
    label: str
    quality: tuple[float, ...]


@dataclass(frozen=True)
class RecordSet:
    """Ordered collection of records with a common quality dimension."""

    records: tuple[VerificationRecord, ...]
    quality_dim: int
    ref_quality: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.quality_dim <= 0:
            raise ValidationError("quality_dim must be positive")
        if self.ref_quality and self.quality_dim % 2 != 0:
            raise ValidationError("reference quality implies an even quality_dim")
        for rec in self.records:
            if len(rec.quality) != self.quality_dim:
                raise ValidationError(
                    f"record {rec.probe_id!r} has quality length {len(rec.quality)}, "
                    f"expected {self.quality_dim}"
                )

    def __len__(self):
        return len(self.records)

    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records], dtype=float)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=object)

    def is_match(self) -> np.ndarray:
        return np.array([r.label == MATCH for r in self.records], dtype=bool)

    def quality_matrix(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, self.quality_dim), dtype=float)
        return np.array([r.quality for r in self.records], dtype=float)


def _quality_header(quality_dim: int, ref_quality: bool) -> list[str]:
    if ref_quality:
        m = quality_dim // 2
        return [f"q{i}" for i in range(1, m + 1)] + [f"g{i}" for i in range(1, m + 1)]
    return [f"q{i}" for i in range(1, quality_dim + 1)]


def _as_lines(source) -> list[str]:
    if isinstance(source, str):
        text = source
    elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        text = source.read()
    else:
        return [str(line).rstrip("\r\n") for line in source]
    return text.splitlines()


def _parse_header(line: str):
    cols = [c.strip() for c in line.split(",")]
    if len(cols) < 5 or tuple(cols[:4]) != _FIXED_COLUMNS:
        raise RecordsError(
            [f"line 1: expected header starting with {','.join(_FIXED_COLUMNS)},q1,..."]
        )
    tail = cols[4:]
    m = 0
    while m < len(tail) and tail[m] == f"q{m + 1}":
        m += 1
    if m == 0:
        raise RecordsError(["line 1: expected at least one quality column q1"])
    rest = tail[m:]
    if not rest:
        return m, False
    expected_g = [f"g{i}" for i in range(1, m + 1)]
    if rest != expected_g:
        raise RecordsError(
            [f"line 1: trailing columns {rest!r} are neither q-continuation nor g1..g{m}"]
        )
    return 2 * m, True


def parse_records(source, meta: dict | None = None) -> RecordSet:
    """Parse CSV text (string, stream, or line iterable) into a RecordSet.

    All malformed lines are gathered and raised together as a RecordsError
    whose messages carry 1-based line numbers.
    """
    lines = _as_lines(source)
    if not lines or not lines[0].strip():
        raise RecordsError(["line 1: missing header"])
    quality_dim, ref_quality = _parse_header(lines[0])
    n_cols = 4 + quality_dim

    records = []
    problems = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != n_cols:
            problems.append(
                f"line {lineno}: expected {n_cols} columns, found {len(parts)}"
            )
            continue
        probe_id, ref_id, score_tok, label = (p.strip() for p in parts[:4])
        ok = True
        try:
            score = float(score_tok)
        except ValueError:
            problems.append(f"line {lineno}: non-numeric score {score_tok!r}")
            ok = False
            score = math.nan
        if ok and not math.isfinite(score):
            problems.append(f"line {lineno}: non-finite score {score_tok!r}")
            ok = False
        if label not in LABELS:
            problems.append(f"line {lineno}: unknown label {label!r}")
            ok = False
        quality = []
        for col, tok in enumerate(parts[4:], start=1):
            tok = tok.strip()
            try:
                val = float(tok)
            except ValueError:
                problems.append(
                    f"line {lineno}: non-numeric quality value {tok!r} (column {col})"
                )
                ok = False
                break
            if not math.isfinite(val):
                problems.append(
                    f"line {lineno}: non-finite quality value {tok!r} (column {col})"
                )
                ok = False
                break
            quality.append(val)
        if ok:
            records.append(
                VerificationRecord(probe_id, ref_id, score, label, tuple(quality))
            )
    if problems:
        raise RecordsError(problems)
    return RecordSet(tuple(records), quality_dim, ref_quality, meta or {})


def _format_float(x: float) -> str:
    return repr(float(x))


def records_to_text(records: RecordSet) -> str:
    header = ",".join(
        list(_FIXED_COLUMNS) + _quality_header(records.quality_dim, records.ref_quality)
    )
    lines = [header]
    for rec in records.records:
        for ident in (rec.probe_id, rec.ref_id):
            if "," in ident or "\n" in ident or "\r" in ident:
                raise ValidationError(f"identifier {ident!r} contains a delimiter")
        row = [rec.probe_id, rec.ref_id, _format_float(rec.score), rec.label]
        row.extend(_format_float(v) for v in rec.quality)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_records(records: RecordSet, sink) -> None:
    """Write a RecordSet as CSV to a path or text stream (LF line endings)."""
    text = records_to_text(records)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        atomic_write_text(sink, text)


def atomic_write_text(path, text: str) -> None:
    """Write text to path atomically (temp file in same dir, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path_or_stream, header: list[str], rows) -> None:
    """Emit a small CSV: floats via repr, everything else via str."""

    def fmt(value):
        if isinstance(value, (bool, np.bool_)):
            return str(bool(value)).lower()
        if isinstance(value, (float, np.floating)):
            return _format_float(value)
        return str(value)

    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(text)
    else:
        atomic_write_text(path_or_stream, text)


def parse_quality_csv(source) -> np.ndarray:
    """Parse a CSV with header q1..qM into an (N, M) float matrix."""
    lines = _as_lines(source)
    if not lines or not lines[0].strip():
        raise RecordsError(["line 1: missing header"])
    cols = [c.strip() for c in lines[0].split(",")]
    expected = [f"q{i}" for i in range(1, len(cols) + 1)]
    if cols != expected:
        raise RecordsError([f"line 1: expected header q1,...,q{len(cols)}"])
    rows = []
    problems = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != len(cols):
            problems.append(
                f"line {lineno}: expected {len(cols)} columns, found {len(parts)}"
            )
            continue
        try:
            vals = [float(tok) for tok in parts]
        except ValueError:
            problems.append(f"line {lineno}: non-numeric quality value")
            continue
        if not all(math.isfinite(v) for v in vals):
            problems.append(f"line {lineno}: non-finite quality value")
            continue
        rows.append(vals)
    if problems:
        raise RecordsError(problems)
    return np.array(rows, dtype=float) if rows else np.empty((0, len(cols)))


@dataclass(frozen=True)
class ScoreModel:
    """Gaussian score generator: class mean is affine in mean quality.

    match score  ~ N(match_base + match_gain * qbar, match_spread^2)
    nonmatch score ~ N(nonmatch_base + nonmatch_gain * qbar, nonmatch_spread^2)
    where qbar is the mean of the quality vector. Spreads must be positive.
    """

    match_base: float = 3.0
    match_gain: float = 2.0
    match_spread: float = 0.5
    nonmatch_base: float = 0.0
    nonmatch_gain: float = 0.0
    nonmatch_spread: float = 0.5

    def __post_init__(self):
        if self.match_spread <= 0 or self.nonmatch_spread <= 0:
            raise ValidationError("score spreads must be positive")

    def match_mean(self, quality) -> float:
        return self.match_base + self.match_gain * float(np.mean(quality))

    def nonmatch_mean(self, quality) -> float:
        return self.nonmatch_base + self.nonmatch_gain * float(np.mean(quality))

    def fnmr(self, quality, threshold: float) -> float:
        # P(match score < t) under the Gaussian model
        z = (threshold - self.match_mean(quality)) / self.match_spread
        return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

    def fmr(self, quality, threshold: float) -> float:
        # P(nonmatch score >= t)
        z = (threshold - self.nonmatch_mean(quality)) / self.nonmatch_spread
        return 1.0 - 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for synthesize_dataset; a pure function of its fields."""

    n_subjects: int
    scores_per_cell: int
    quality_grid: tuple[tuple[float, ...], ...]
    score_model: ScoreModel
    seed: int
    quality_jitter: float = 0.0

    def __post_init__(self):
        if self.scores_per_cell < 1:
            raise ValidationError("scores_per_cell must be >= 1")
        if not self.quality_grid:
            raise ValidationError("quality_grid must not be empty")
        dims = {len(anchor) for anchor in self.quality_grid}
        if len(dims) != 1 or 0 in dims:
            raise ValidationError("quality anchors must share a positive dimension")
        if self.n_subjects < 2:
            raise ValidationError("need at least 2 subjects for nonmatch pairs")
        if self.quality_jitter < 0:
            raise ValidationError("quality_jitter must be >= 0")


def synthesize_dataset(config: SynthConfig) -> RecordSet:
    """Generate scores_per_cell match + nonmatch records per quality anchor.

    Deterministic given config.seed. Ground-truth error rates at any
    threshold come from config.score_model.fnmr / .fmr.
    """
    rng = np.random.default_rng(config.seed)
    dim = len(config.quality_grid[0])
    model = config.score_model
    records = []
    counter = 0
    for anchor in config.quality_grid:
        anchor_arr = np.asarray(anchor, dtype=float)
        for label in (MATCH, NONMATCH):
            mean_fn = model.match_mean if label == MATCH else model.nonmatch_mean
            spread = model.match_spread if label == MATCH else model.nonmatch_spread
            for _ in range(config.scores_per_cell):
                subject = counter % config.n_subjects
                if label == MATCH:
                    ref = subject
                else:
                    ref = (subject + 1 + counter % (config.n_subjects - 1)) % config.n_subjects
                if config.quality_jitter > 0:
                    quality = anchor_arr + config.quality_jitter * rng.standard_normal(dim)
                else:
                    quality = anchor_arr
                score = float(rng.normal(mean_fn(quality), spread))
                records.append(
                    VerificationRecord(
                        probe_id=f"s{subject:04d}",
                        ref_id=f"s{ref:04d}",
                        score=score,
                        label=label,
                        quality=tuple(float(v) for v in quality),
                    )
                )
                counter += 1
    return RecordSet(tuple(records), dim, False, {"source": "synthetic"})
