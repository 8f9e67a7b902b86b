"""Clinical-note corpus model: ingestion, filtering, splits, idf statistics.

The on-disk format is two JSONL files. `notes.jsonl` holds one object per
note: {"note_id", "patient_id", "category", "chart_time" (ISO-8601),
"text", "age_years", "admission_count"}. `patients.jsonl` holds one object
per patient: {"patient_id", "died_30d", "died_1y"} with booleans or null
for unknown. Everything downstream (frame extraction, embedding training,
the mortality probe) consumes the `PatientRecord` objects produced here
and treats them as immutable.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

HORIZONS = ("30d", "1y")

# Trailing abbreviations that do not end a sentence ("pt. was stable").
# Dots are stripped before comparison, so "e.g." matches "eg".
DEFAULT_ABBREVIATIONS = frozenset(
    {"dr", "mr", "mrs", "ms", "st", "jr", "sr", "vs", "etc", "eg", "ie",
     "pt", "wt", "ht", "approx", "resp", "neuro", "psych"}
)

# Words, decimals like "98.6", or single punctuation marks.
_TOKEN_RE = re.compile(r"\d+\.\d+|[A-Za-z0-9]+(?:'[A-Za-z0-9]+)?|[^\sA-Za-z0-9]")
_ABBREV_TAIL_RE = re.compile(r"([A-Za-z][A-Za-z.]*)\.$")


class CorpusFormatError(ValueError):
    """Raised when an input file violates the JSONL note/patient schema."""


class NoteCategory(str, Enum):
    DISCHARGE_SUMMARY = "DischargeSummary"
    NURSING = "Nursing"
    RADIOLOGY = "Radiology"
    ECHO = "Echo"
    ECG = "ECG"
    PHYSICIAN = "Physician"

    @classmethod
    def parse(cls, raw: str) -> "NoteCategory":
        key = re.sub(r"[\s_-]", "", str(raw)).lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise KeyError(raw)


@dataclass
class Sentence:
    """One sentence of a note: surface tokens plus offsets into the raw text."""

    words: list[str]
    char_span: tuple[int, int]

    def __post_init__(self):
        if not self.words:
            raise ValueError("sentence must contain at least one token")
        start, end = self.char_span
        if not 0 <= start < end:
            raise ValueError(f"invalid char span {self.char_span}")


@dataclass
class Note:
    note_id: str
    patient_id: str
    category: NoteCategory
    raw_text: str
    sentences: list[Sentence]
    chart_time: datetime | None = None

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"note {self.note_id}: at least one sentence required")
        spans = [s.char_span for s in self.sentences]
        if any(b[0] < a[1] for a, b in zip(spans, spans[1:])):
            raise ValueError(f"note {self.note_id}: sentence offsets must increase")


@dataclass
class PatientRecord:
    patient_id: str
    notes: list[Note]
    died_30d: bool | None
    died_1y: bool | None
    age_years: int

    def __post_init__(self):
        if not self.notes:
            raise ValueError(f"patient {self.patient_id}: notes must be non-empty")
        if self.age_years < 18:
            raise ValueError(f"patient {self.patient_id}: adults only (age {self.age_years})")
        if self.died_30d is True and self.died_1y is False:
            raise ValueError(
                f"patient {self.patient_id}: died within 30 days but not within 1 year"
            )

    def label(self, horizon: str) -> bool | None:
        if horizon not in HORIZONS:
            raise ValueError(f"unknown horizon {horizon!r}; expected one of {HORIZONS}")
        return self.died_30d if horizon == "30d" else self.died_1y


@dataclass
class CorpusStats:
    """Per-word inverse document frequency with one note as the document unit."""

    idf: dict[str, float]
    document_count: int
    vocabulary: list[str] = field(default_factory=list)

    def idf_of(self, word: str) -> float:
        key = word.lower()
        if key in self.idf:
            return self.idf[key]
        # unseen word: smoothed zero-document-frequency value
        return math.log((1.0 + self.document_count) / 1.0) + 1.0


# ----------------------------------------------------------------------
# tokenization and sentence splitting
# ----------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _sentence_break_positions(line: str, abbreviations) -> list[int]:
    """Indices just after a sentence-final '. ' within one line."""
    breaks = []
    for m in re.finditer(r"\.(?=\s)", line):
        tail = _ABBREV_TAIL_RE.search(line[: m.end()])
        if tail and tail.group(1).replace(".", "").lower() in abbreviations:
            continue
        breaks.append(m.end())
    return breaks


def split_sentences(text: str, abbreviations=DEFAULT_ABBREVIATIONS) -> list[Sentence]:
    """Split raw note text into sentences.

    Clinical notes are line-structured, so newline is the primary
    boundary; within a line, a period followed by whitespace also splits
    unless the preceding token is a known abbreviation (decimals such as
    "98.6" never match because they have no following space).
    """
    sentences = []
    offset = 0
    for line in text.split("\n"):
        cuts = [0] + _sentence_break_positions(line, abbreviations) + [len(line)]
        for a, b in zip(cuts, cuts[1:]):
            chunk = line[a:b]
            words = tokenize(chunk)
            if not words:
                continue
            lead = len(chunk) - len(chunk.lstrip())
            trail = len(chunk) - len(chunk.rstrip())
            sentences.append(
                Sentence(words=words, char_span=(offset + a + lead, offset + b - trail))
            )
        offset += len(line) + 1
    return sentences


# ----------------------------------------------------------------------
# ingestion
# ----------------------------------------------------------------------

_REQUIRED_NOTE_FIELDS = (
    "note_id", "patient_id", "category", "chart_time", "text", "age_years", "admission_count",
)


def _read_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc


def load_patient_labels(path) -> dict[str, tuple[bool | None, bool | None]]:
    labels = {}
    for lineno, obj in _read_jsonl(Path(path)):
        try:
            pid = str(obj["patient_id"])
        except (KeyError, TypeError) as exc:
            raise CorpusFormatError(f"{path}: line {lineno}: missing patient_id") from exc
        labels[pid] = (obj.get("died_30d"), obj.get("died_1y"))
    return labels


def load_notes(notes_path, patients_path=None, abbreviations=DEFAULT_ABBREVIATIONS) -> list[PatientRecord]:
    """Load the JSONL corpus into per-patient records.

    Notes are grouped by patient and sorted by chart time. Patients
    younger than 18 or with more than one hospital admission are
    excluded; notes with a category outside the six supported ones are
    skipped (counted in a warning). A malformed line raises
    `CorpusFormatError` naming the line number.
    """
    notes_path = Path(notes_path)
    per_patient: dict[str, list[tuple[datetime, Note]]] = {}
    ages: dict[str, tuple[datetime, int]] = {}
    excluded: set[str] = set()
    skipped_category = 0

    for lineno, obj in _read_jsonl(notes_path):
        missing = [f for f in _REQUIRED_NOTE_FIELDS if f not in obj]
        if missing:
            raise CorpusFormatError(
                f"{notes_path}: line {lineno}: missing field(s) {', '.join(missing)}"
            )
        try:
            category = NoteCategory.parse(obj["category"])
        except KeyError:
            skipped_category += 1
            continue
        try:
            chart_time = datetime.fromisoformat(str(obj["chart_time"]))
        except ValueError as exc:
            raise CorpusFormatError(
                f"{notes_path}: line {lineno}: bad chart_time {obj['chart_time']!r}"
            ) from exc
        pid = str(obj["patient_id"])
        try:
            age = int(obj["age_years"])
            admissions = int(obj["admission_count"])
        except (TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{notes_path}: line {lineno}: {exc}") from exc
        if age < 18 or admissions != 1:
            excluded.add(pid)
            continue
        sentences = split_sentences(str(obj["text"]), abbreviations)
        if not sentences:
            logger.warning("note %s has no tokenizable text; skipped", obj["note_id"])
            continue
        note = Note(
            note_id=str(obj["note_id"]),
            patient_id=pid,
            category=category,
            raw_text=str(obj["text"]),
            sentences=sentences,
            chart_time=chart_time,
        )
        earliest = ages.get(pid)
        if earliest is None or chart_time < earliest[0]:
            ages[pid] = (chart_time, age)
        per_patient.setdefault(pid, []).append((chart_time, note))

    if skipped_category:
        logger.warning("skipped %d note(s) with unknown category", skipped_category)

    labels = load_patient_labels(patients_path) if patients_path is not None else {}
    records = []
    for pid in sorted(per_patient):
        if pid in excluded:
            continue
        notes = [n for _, n in sorted(per_patient[pid], key=lambda t: (t[0], t[1].note_id))]
        died_30d, died_1y = labels.get(pid, (None, None))
        records.append(
            PatientRecord(
                patient_id=pid,
                notes=notes,
                died_30d=died_30d,
                died_1y=died_1y,
                age_years=ages[pid][1],
            )
        )
    return records


# ----------------------------------------------------------------------
# cohort construction
# ----------------------------------------------------------------------


def subsample_negatives(records, horizon: str, target_neg: int, seed: int) -> list[PatientRecord]:
    """Keep all positives and a seeded uniform draw of `target_neg` negatives.

    Patients whose label for `horizon` is unknown are dropped (logged):
    they cannot serve as either class. Deterministic for a given seed
    regardless of input order, because the draw runs over negatives
    sorted by patient id.
    """
    positives = [r for r in records if r.label(horizon) is True]
    negatives = [r for r in records if r.label(horizon) is False]
    unknown = len(records) - len(positives) - len(negatives)
    if unknown:
        logger.info("subsample: dropped %d record(s) with unknown %s label", unknown, horizon)
    if target_neg > len(negatives):
        raise ValueError(
            f"target_neg={target_neg} exceeds available negatives ({len(negatives)})"
        )
    negatives_sorted = sorted(negatives, key=lambda r: r.patient_id)
    rng = np.random.default_rng(seed)
    chosen_idx = rng.choice(len(negatives_sorted), size=target_neg, replace=False)
    chosen = {negatives_sorted[i].patient_id for i in chosen_idx}
    return [r for r in records if r.label(horizon) is True or r.patient_id in chosen]


def split(records, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition records by patient into (train, test, validation).

    Sizes are floor(n * ratio) for train and test with the remainder
    going to validation; no patient straddles splits.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if len(records) < 3:
        raise ValueError(f"need at least 3 patients to split, got {len(records)}")
    ordered = sorted(records, key=lambda r: r.patient_id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_train = int(len(ordered) * ratios[0])
    n_test = int(len(ordered) * ratios[1])
    train = [ordered[i] for i in perm[:n_train]]
    test = [ordered[i] for i in perm[n_train : n_train + n_test]]
    validation = [ordered[i] for i in perm[n_train + n_test :]]
    return train, test, validation


def compute_idf(train_notes) -> CorpusStats:
    """Smoothed inverse document frequency with the note as document unit.

    idf(w) = ln((1 + D) / (1 + df(w))) + 1, where D is the number of
    training notes and df counts notes containing w (case-folded).
    Unseen words get the df=0 value of the same formula.
    """
    notes = list(train_notes)
    if not notes:
        raise ValueError("compute_idf requires at least one note")
    df: dict[str, int] = {}
    for note in notes:
        seen = {w.lower() for s in note.sentences for w in s.words}
        for w in seen:
            df[w] = df.get(w, 0) + 1
    d_total = len(notes)
    idf = {w: math.log((1.0 + d_total) / (1.0 + n)) + 1.0 for w, n in df.items()}
    return CorpusStats(idf=idf, document_count=d_total, vocabulary=sorted(idf))
