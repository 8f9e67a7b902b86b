"""Semantic-frame extraction: sections, concept tagging, negation, golden files."""

import json

import pytest

from notefuse.corpus import Note, NoteCategory, split_sentences
from notefuse.frames import (
    ConceptLexicon,
    SemanticFrame,
    build_frames,
    detect_sections,
    export_frames_jsonl,
    load_section_inventory,
    tag_sentence,
)


def _note(text, category=NoteCategory.DISCHARGE_SUMMARY, note_id="n0"):
    return Note(note_id=note_id, patient_id="p0", category=category,
                raw_text=text, sentences=split_sentences(text))


@pytest.fixture
def lexicon():
    return ConceptLexicon(entries={
        "seizure disorder": "dsyn",
        "heart failure": "dsyn",
        "heart": "bpoc",
        "fever": "sosy",
    })


class TestTagSentence:
    def test_negated_concept(self, lexicon):
        note = _note("No seizure disorder")
        tokens, types = tag_sentence(note.sentences[0], lexicon)
        assert types == ["neg", "dsyn", "dsyn"]
        assert tokens == ["seizure disorder"]

    def test_no_hits_all_null(self, lexicon):
        note = _note("completely unremarkable visit")
        tokens, types = tag_sentence(note.sentences[0], lexicon)
        assert types == ["O", "O", "O"] and tokens == []

    def test_longest_match_wins(self, lexicon):
        note = _note("history of heart failure noted")
        tokens, types = tag_sentence(note.sentences[0], lexicon)
        assert tokens == ["heart failure"]
        assert types == ["O", "O", "dsyn", "dsyn", "O"]

    def test_single_word_entry_still_matches(self, lexicon):
        tokens, types = tag_sentence(_note("heart sounds normal").sentences[0], lexicon)
        assert tokens == ["heart"] and types == ["bpoc", "O", "O"]

    def test_case_insensitive(self, lexicon):
        tokens, types = tag_sentence(_note("FEVER resolved").sentences[0], lexicon)
        assert tokens == ["fever"] and types == ["sosy", "O"]

    def test_negation_independent_of_lexicon(self):
        # even if a lexicon entry contains a cue word, the cue stays "neg"
        lex = ConceptLexicon(entries={"not tender": "fndg", "no": "qlco"})
        tokens, types = tag_sentence(_note("abdomen not tender").sentences[0], lex)
        assert types == ["O", "neg", "O"] and tokens == []

    def test_all_cues_tagged(self, lexicon):
        _, types = tag_sentence(_note("denies fever without chills").sentences[0], lexicon)
        assert types == ["neg", "sosy", "neg", "O"]


class TestDetectSections:
    def test_header_assigns_following_sentences(self, lexicon):
        note = _note("Family History:\nNo seizure disorder")
        sections = dict(detect_sections(note))
        assert sections[1] == "Family History"
        assert sections[0] == "Family History"  # the header line itself

    def test_headerless_note_is_preamble(self):
        note = _note("just plain text\nmore plain text")
        assert all(sub == "Preamble" for _, sub in detect_sections(note))

    def test_two_headers_partition_at_second(self):
        note = _note(
            "intro line\n"
            "Past Medical History:\nalpha beta\ngamma delta\n"
            "Family History:\nepsilon zeta"
        )
        subs = [sub for _, sub in detect_sections(note)]
        assert subs == ["Preamble", "Past Medical History", "Past Medical History",
                        "Past Medical History", "Family History", "Family History"]

    def test_header_matching_is_case_insensitive(self):
        note = _note("FAMILY HISTORY:\nnothing notable")
        assert dict(detect_sections(note))[1] == "Family History"

    def test_unknown_header_is_not_a_section(self):
        note = _note("Random Thing:\nsome text")
        assert all(sub == "Preamble" for _, sub in detect_sections(note))

    def test_inventory_respects_category(self):
        # "Findings" is a Radiology header, not a DischargeSummary one
        text = "Findings:\nclear lungs"
        assert dict(detect_sections(_note(text, NoteCategory.RADIOLOGY)))[1] == "Findings"
        assert dict(detect_sections(_note(text, NoteCategory.DISCHARGE_SUMMARY)))[1] == "Preamble"


class TestBuildFrames:
    def test_one_frame_per_sentence(self, lexicon):
        note = _note("one sentence\ntwo sentence\nthree sentence")
        frames = build_frames(note, lexicon)
        assert len(frames) == len(note.sentences) == 3

    def test_category_inherited(self, lexicon):
        note = _note("alpha\nbeta", category=NoteCategory.ECHO)
        assert all(f.category == "Echo" for f in build_frames(note, lexicon))

    def test_alignment_invariant(self, lexicon):
        note = _note("No seizure disorder today\nheart failure and fever\nplain words")
        for frame, sentence in zip(build_frames(note, lexicon), note.sentences):
            assert len(frame.sem_types) == len(sentence.words)

    def test_deterministic(self, lexicon):
        note = _note("No seizure disorder\nheart failure")
        assert build_frames(note, lexicon) == build_frames(note, lexicon)

    def test_figure_style_fixture(self, lexicon):
        note = _note("Family History:\nNo seizure disorder")
        frames = build_frames(note, lexicon)
        assert frames[1] == SemanticFrame(
            category="DischargeSummary",
            subcategory="Family History",
            sem_tokens=["seizure disorder"],
            sem_types=["neg", "dsyn", "dsyn"],
        )


class TestLexiconIO:
    def test_round_trip(self, tmp_path, lexicon):
        path = tmp_path / "lexicon.json"
        lexicon.to_json(path)
        loaded = ConceptLexicon.from_json(path)
        assert loaded.entries == lexicon.entries
        assert loaded.negation_cues == lexicon.negation_cues

    def test_empty_surface_rejected(self):
        with pytest.raises(ValueError, match="empty surface"):
            ConceptLexicon(entries={"  ": "dsyn"})

    def test_default_lexicon_loads(self):
        lex = ConceptLexicon.default()
        assert lex.entries["seizure disorder"] == "dsyn"
        assert "no" in lex.negation_cues

    def test_type_vocabulary_sorted(self, lexicon):
        assert lexicon.type_vocabulary == sorted(set(lexicon.entries.values()))


class TestExport:
    def test_jsonl_schema(self, tmp_path, lexicon):
        note = _note("Family History:\nNo seizure disorder")
        out = tmp_path / "frames.jsonl"
        count = export_frames_jsonl([note], lexicon, out)
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert count == len(rows) == 2
        assert set(rows[0]) == {"note_id", "sent_idx", "category", "subcategory", "sem_tokens", "sem_types"}
        assert rows[1]["sem_types"] == ["neg", "dsyn", "dsyn"]


def test_section_inventory_has_all_categories():
    inventory = load_section_inventory()
    assert set(inventory) == {c.value for c in NoteCategory}
    assert "Family History" in inventory["DischargeSummary"]
