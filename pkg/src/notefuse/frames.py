"""Semantic-frame extraction: the dictionary-tagger stand-in for MetaMap.

Each sentence gets a frame made of the note category, the section
(sub-category) it falls under, the matched concept surfaces, and a
per-word semantic-type sequence aligned one-to-one with the sentence's
tokens. Unmapped words carry the null tag "O"; negation cue words carry
"neg" regardless of what the concept lexicon contains.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import Note, NoteCategory, Sentence

NULL_TAG = "O"
NEG_TAG = "neg"
PREAMBLE = "Preamble"

DEFAULT_NEGATION_CUES = frozenset({"no", "not", "denies", "without", "negative"})


def _load_packaged_json(name: str):
    with resources.files("notefuse").joinpath("data", name).open(encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class SemanticFrame:
    """Structured companion of one sentence."""

    category: str
    subcategory: str
    sem_tokens: list[str]
    sem_types: list[str]

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "subcategory": self.subcategory,
            "sem_tokens": list(self.sem_tokens),
            "sem_types": list(self.sem_types),
        }


@dataclass
class ConceptLexicon:
    """Surface-form to semantic-type map with longest-match-first lookup.

    entries keys are lowercase surface forms, possibly multi-word
    ("seizure disorder"); values are type tags. Multi-word entries win
    over shorter prefixes during tagging.
    """

    entries: dict[str, str]
    negation_cues: frozenset = DEFAULT_NEGATION_CUES
    _by_first_word: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        normalized = {}
        for surface, tag in self.entries.items():
            words = tuple(surface.lower().split())
            if not words:
                raise ValueError("lexicon contains an empty surface form")
            normalized[" ".join(words)] = str(tag)
        self.entries = normalized
        self.negation_cues = frozenset(w.lower() for w in self.negation_cues)
        by_first: dict[str, list] = {}
        for surface, tag in self.entries.items():
            words = tuple(surface.split())
            by_first.setdefault(words[0], []).append((words, surface, tag))
        for cands in by_first.values():
            cands.sort(key=lambda c: (-len(c[0]), c[1]))
        self._by_first_word = by_first

    @property
    def type_vocabulary(self) -> list[str]:
        return sorted(set(self.entries.values()))

    @classmethod
    def from_json(cls, path) -> "ConceptLexicon":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            entries=dict(obj["entries"]),
            negation_cues=frozenset(obj.get("negation_cues", DEFAULT_NEGATION_CUES)),
        )

    def to_json(self, path):
        payload = {
            "entries": dict(sorted(self.entries.items())),
            "negation_cues": sorted(self.negation_cues),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def default(cls) -> "ConceptLexicon":
        obj = _load_packaged_json("default_lexicon.json")
        return cls(entries=dict(obj["entries"]), negation_cues=frozenset(obj["negation_cues"]))


def load_section_inventory(path=None) -> dict[str, list[str]]:
    """Per-category section header lists; ships with editable defaults."""
    obj = _load_packaged_json("sections.json") if path is None else json.load(open(path, encoding="utf-8"))
    return {str(k): [str(h) for h in v] for k, v in obj.items()}


# ----------------------------------------------------------------------
# tagging
# ----------------------------------------------------------------------


def tag_sentence(sentence: Sentence, lexicon: ConceptLexicon) -> tuple[list[str], list[str]]:
    """Longest-match greedy left-to-right concept scan over one sentence.

    Returns (sem_tokens, sem_types). Every word of a matched concept
    repeats the concept's type tag; negation cues are always "neg" (a
    candidate concept span containing a cue word is rejected, so negation
    tagging never depends on lexicon content); everything else is "O".
    """
    words = [w.lower() for w in sentence.words]
    n = len(words)
    sem_types = [NULL_TAG] * n
    sem_tokens: list[str] = []
    cues = lexicon.negation_cues
    i = 0
    while i < n:
        if words[i] in cues:
            sem_types[i] = NEG_TAG
            i += 1
            continue
        matched = False
        for cand_words, surface, tag in lexicon._by_first_word.get(words[i], ()):
            k = len(cand_words)
            if i + k <= n and tuple(words[i : i + k]) == cand_words and not any(
                w in cues for w in cand_words
            ):
                sem_types[i : i + k] = [tag] * k
                sem_tokens.append(surface)
                i += k
                matched = True
                break
        if not matched:
            i += 1
    return sem_tokens, sem_types


def detect_sections(note: Note, inventory: dict[str, list[str]] | None = None) -> list[tuple[int, str]]:
    """Assign each sentence the most recent preceding section header.

    A header is a line starting (case-insensitively) with "<Header>:"
    where <Header> comes from the note category's inventory. Sentences
    before any header get "Preamble". Headerless notes are all Preamble.
    """
    inventory = inventory if inventory is not None else load_section_inventory()
    headers = inventory.get(
        note.category.value if isinstance(note.category, NoteCategory) else str(note.category), []
    )
    canon = {h.lower(): h for h in headers}
    pattern = None
    if headers:
        alts = "|".join(re.escape(h) for h in sorted(headers, key=len, reverse=True))
        pattern = re.compile(rf"^\s*({alts})\s*:", re.IGNORECASE)

    boundaries = [(0, PREAMBLE)]
    offset = 0
    for line in note.raw_text.split("\n"):
        if pattern is not None:
            m = pattern.match(line)
            if m:
                boundaries.append((offset, canon[m.group(1).lower()]))
        offset += len(line) + 1

    result = []
    for idx, sent in enumerate(note.sentences):
        start = sent.char_span[0]
        sub = PREAMBLE
        for b_off, b_name in boundaries:
            if b_off <= start:
                sub = b_name
            else:
                break
        result.append((idx, sub))
    return result


def build_frames(
    note: Note,
    lexicon: ConceptLexicon,
    inventory: dict[str, list[str]] | None = None,
) -> list[SemanticFrame]:
    """One semantic frame per sentence: sections + concept/type tagging."""
    sections = dict(detect_sections(note, inventory))
    category = note.category.value if isinstance(note.category, NoteCategory) else str(note.category)
    frames = []
    for idx, sentence in enumerate(note.sentences):
        sem_tokens, sem_types = tag_sentence(sentence, lexicon)
        frames.append(
            SemanticFrame(
                category=category,
                subcategory=sections[idx],
                sem_tokens=sem_tokens,
                sem_types=sem_types,
            )
        )
    return frames


def export_frames_jsonl(notes, lexicon: ConceptLexicon, out_path, inventory=None) -> int:
    """Write one JSON line per (note, sentence) frame; returns the line count."""
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for note in notes:
            for sent_idx, frame in enumerate(build_frames(note, lexicon, inventory)):
                row = {"note_id": note.note_id, "sent_idx": sent_idx}
                row.update(frame.to_dict())
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                count += 1
    return count
