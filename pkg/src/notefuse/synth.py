"""Synthetic desk-scale corpus generator with known ground truth.

Positive patients' notes carry deterioration marker tokens adjacent to
lexicon concepts (an acute set for the 30-day horizon, a chronic set for
the 1-year horizon) at a configurable per-note injection rate; negative
notes draw from the same filler/concept distribution without markers, so
rate 0 makes the classes distributionally identical. Every note ships
with gold section labels and gold per-word type tags built by
construction (never by running the tagger), so frame extraction can be
tested against known answers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .corpus import Note, NoteCategory, PatientRecord, split_sentences, tokenize
from .frames import NEG_TAG, NULL_TAG, ConceptLexicon, SemanticFrame, load_section_inventory

# Table-style default class ratios: 1156/(1156+2500) and 3768/(3768+5000).
DEFAULT_PREVALENCE_30D = 1156 / 3656
DEFAULT_PREVALENCE_1Y = 3768 / 8768

# Filler vocabulary. Must stay disjoint from negation cues, from
# single-word lexicon entries, and from the first word of multi-word
# entries; `_check_vocabulary` enforces this at generation time so the
# gold tags stay exact.
FILLER_WORDS = (
    "patient remains stable today continues on current regimen monitor overnight "
    "family at bedside tolerating diet ambulating with assistance plan reviewed "
    "by team labs pending this morning repeat imaging ordered appetite fair "
    "alert and oriented follow up in clinic next week routine care provided "
    "resting comfortably daily weights recorded uneventful course so far"
).split()

# Deterioration/status words deliberately have no lexicon entry: like the
# status vocabulary around UMLS concepts in real notes, they are visible
# only to the text channel, so the structured view alone cannot separate
# the classes. They are injected adjacent to an ordinary lexicon concept.
ACUTE_MARKERS = ("worsening", "deteriorating", "unresponsive", "agonal")
CHRONIC_MARKERS = ("declining", "relapsing", "progressive", "refractory")
BENIGN_CONCEPTS = (
    "hypertension", "aspirin", "metoprolol", "edema", "nausea", "dialysis",
    "chest pain", "atrial fibrillation", "diabetes mellitus", "insulin",
    "fever", "pneumonia", "furosemide",
)

CATEGORY_WEIGHTS = {
    NoteCategory.DISCHARGE_SUMMARY: 0.40,
    NoteCategory.NURSING: 0.25,
    NoteCategory.RADIOLOGY: 0.15,
    NoteCategory.ECHO: 0.08,
    NoteCategory.ECG: 0.05,
    NoteCategory.PHYSICIAN: 0.07,
}


@dataclass
class SynthConfig:
    patients: int = 100
    notes_per_patient_mean: float = 2.2
    prevalence_30d: float = DEFAULT_PREVALENCE_30D
    prevalence_1y: float = DEFAULT_PREVALENCE_1Y
    marker_injection_rate: float = 0.8
    concept_rate: float = 0.5
    negation_rate: float = 0.15
    sections_min: int = 2
    sections_max: int = 4
    sentences_per_section_max: int = 3

    def __post_init__(self):
        for name in ("prevalence_30d", "prevalence_1y", "marker_injection_rate",
                     "concept_rate", "negation_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.prevalence_30d > self.prevalence_1y:
            raise ValueError("prevalence_30d cannot exceed prevalence_1y (30-day deaths are 1-year deaths)")
        if self.patients < 1:
            raise ValueError("patients must be >= 1")
        if self.notes_per_patient_mean < 1.0:
            raise ValueError("notes_per_patient_mean must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown synthetic-config key(s): {', '.join(sorted(unknown))}")
        return cls(**obj)


@dataclass
class SyntheticCorpus:
    records: list[PatientRecord]
    gold_frames: dict[str, list[SemanticFrame]]
    lexicon: ConceptLexicon

    def write(self, out_dir) -> dict[str, Path]:
        """Write notes.jsonl / patients.jsonl / lexicon.json / gold_frames.jsonl."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "notes": out / "notes.jsonl",
            "patients": out / "patients.jsonl",
            "lexicon": out / "lexicon.json",
            "gold_frames": out / "gold_frames.jsonl",
        }
        with open(paths["notes"], "w", encoding="utf-8") as fh:
            for rec in self.records:
                for note in rec.notes:
                    fh.write(json.dumps({
                        "note_id": note.note_id,
                        "patient_id": rec.patient_id,
                        "category": note.category.value,
                        "chart_time": note.chart_time.isoformat(),
                        "text": note.raw_text,
                        "age_years": rec.age_years,
                        "admission_count": 1,
                    }, sort_keys=True) + "\n")
        with open(paths["patients"], "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps({
                    "patient_id": rec.patient_id,
                    "died_30d": rec.died_30d,
                    "died_1y": rec.died_1y,
                }, sort_keys=True) + "\n")
        self.lexicon.to_json(paths["lexicon"])
        with open(paths["gold_frames"], "w", encoding="utf-8") as fh:
            for rec in self.records:
                for note in rec.notes:
                    for sent_idx, frame in enumerate(self.gold_frames[note.note_id]):
                        row = {"note_id": note.note_id, "sent_idx": sent_idx}
                        row.update(frame.to_dict())
                        fh.write(json.dumps(row, sort_keys=True) + "\n")
        return paths


def _check_vocabulary(lexicon: ConceptLexicon):
    # Gold tags are emitted by construction, so any unmapped word (filler
    # or marker) that the tagger could interpret (cue, single-word entry,
    # or the first word of a multi-word entry) would desynchronize gold
    # from extraction.
    first_words = {surface.split()[0] for surface in lexicon.entries}
    singles = {s for s in lexicon.entries if " " not in s}
    unmapped = set(FILLER_WORDS) | set(ACUTE_MARKERS) | set(CHRONIC_MARKERS)
    bad = unmapped & (first_words | singles | set(lexicon.negation_cues))
    if bad:
        raise AssertionError(f"unmapped generator words collide with lexicon/cues: {sorted(bad)}")


class _SentenceBuilder:
    """Accumulates (words, gold types, gold tokens) for one sentence."""

    def __init__(self):
        self.words: list[str] = []
        self.types: list[str] = []
        self.tokens: list[str] = []
        self.concept_start: int | None = None
        self._marked: set[int] = set()

    def filler(self, rng: np.random.Generator, k: int):
        for w in rng.choice(FILLER_WORDS, size=k):
            self.words.append(str(w))
            self.types.append(NULL_TAG)

    def cue(self, cue: str):
        self.words.append(cue)
        self.types.append(NEG_TAG)

    def concept(self, surface: str, tag: str):
        parts = surface.split()
        self.concept_start = len(self.words)
        self.words.extend(parts)
        self.types.extend([tag] * len(parts))
        self.tokens.append(surface)

    def mark(self, marker: str) -> bool:
        """Swap one filler word for a status word, preferring the slot just
        before the sentence's concept.

        A replacement (never an insertion) keeps word count, type sequence,
        and token sequence untouched, so the structured view of marked and
        unmarked sentences is exactly identically distributed; only the
        text channel can see the marker.
        """
        # type "O" marks replaceable filler: concept words and cues carry
        # other tags, and previously placed markers are tracked explicitly
        candidates = [i for i, t in enumerate(self.types)
                      if t == NULL_TAG and i not in self._marked]
        if not candidates:
            return False
        before_concept = (self.concept_start - 1) if self.concept_start is not None else None
        at = before_concept if before_concept in candidates else candidates[-1]
        self.words[at] = marker
        self._marked.add(at)
        return True


def _content_sentence(rng, cfg: SynthConfig, lexicon: ConceptLexicon) -> _SentenceBuilder:
    sb = _SentenceBuilder()
    sb.filler(rng, int(rng.integers(2, 6)))
    if rng.random() < cfg.concept_rate:
        if rng.random() < cfg.negation_rate:
            sb.cue(str(rng.choice(sorted(lexicon.negation_cues))))
        surface = str(rng.choice(BENIGN_CONCEPTS))
        sb.concept(surface, lexicon.entries[surface])
    sb.filler(rng, int(rng.integers(1, 4)))
    return sb


def generate_synthetic(config: SynthConfig, seed: int = 0) -> SyntheticCorpus:
    """Generate a seeded corpus of patients, notes, labels, and gold frames."""
    lexicon = ConceptLexicon.default()
    _check_vocabulary(lexicon)
    inventory = load_section_inventory()
    rng = np.random.default_rng(seed)
    categories = list(CATEGORY_WEIGHTS)
    cat_p = np.asarray([CATEGORY_WEIGHTS[c] for c in categories])
    cat_p = cat_p / cat_p.sum()
    base_time = datetime(2100, 1, 1)

    records = []
    gold_frames: dict[str, list[SemanticFrame]] = {}
    for p_idx in range(config.patients):
        pid = f"p{p_idx:05d}"
        u = rng.random()
        died_30d = bool(u < config.prevalence_30d)
        died_1y = bool(u < config.prevalence_1y)
        age = int(rng.integers(18, 95))
        n_notes = 1 + int(rng.poisson(config.notes_per_patient_mean - 1.0))

        notes = []
        for k in range(n_notes):
            note_id = f"{pid}-n{k}"
            category = categories[int(rng.choice(len(categories), p=cat_p))]
            headers = inventory[category.value]
            n_sections = int(rng.integers(config.sections_min, config.sections_max + 1))
            n_sections = min(n_sections, len(headers))
            picked = [headers[i] for i in sorted(rng.choice(len(headers), size=n_sections, replace=False))]

            builders: list[tuple[_SentenceBuilder, str]] = []
            content_idx: list[int] = []
            builders.append((_content_sentence(rng, config, lexicon), "Preamble"))
            content_idx.append(0)
            for header in picked:
                hb = _SentenceBuilder()
                hb.words = tokenize(header + ":")
                hb.types = [NULL_TAG] * len(hb.words)
                builders.append((hb, header))
                for _ in range(int(rng.integers(1, config.sentences_per_section_max + 1))):
                    content_idx.append(len(builders))
                    builders.append((_content_sentence(rng, config, lexicon), header))

            # status-word injection: each content sentence of a marked note
            # swaps one filler word per horizon for a marker, leaving every
            # frame component (types, tokens, lengths) class-identical
            marker_sets = []
            if died_30d and rng.random() < config.marker_injection_rate:
                marker_sets.append(ACUTE_MARKERS)
            if died_1y and rng.random() < config.marker_injection_rate:
                marker_sets.append(CHRONIC_MARKERS)
            for markers in marker_sets:
                for i in content_idx:
                    builders[i][0].mark(str(rng.choice(markers)))

            lines = [" ".join(sb.words) for sb, _ in builders]
            raw_text = "\n".join(lines)
            sentences = split_sentences(raw_text)
            if len(sentences) != len(builders):  # pragma: no cover - construction guard
                raise AssertionError(f"{note_id}: sentence count drifted from construction")
            note = Note(
                note_id=note_id,
                patient_id=pid,
                category=category,
                raw_text=raw_text,
                sentences=sentences,
                chart_time=base_time + timedelta(days=p_idx, hours=6 * k),
            )
            notes.append(note)
            gold_frames[note_id] = [
                SemanticFrame(
                    category=category.value,
                    subcategory=sub,
                    sem_tokens=list(sb.tokens),
                    sem_types=list(sb.types),
                )
                for sb, sub in builders
            ]

        records.append(
            PatientRecord(patient_id=pid, notes=notes, died_30d=died_30d, died_1y=died_1y, age_years=age)
        )
    return SyntheticCorpus(records=records, gold_frames=gold_frames, lexicon=lexicon)
