"""Synthetic corpus generator: gold frames, class structure, separability."""

import numpy as np
import pytest

from notefuse.classify import fit_classifier
from notefuse.corpus import load_notes
from notefuse.evaluate import auc_roc
from notefuse.frames import build_frames
from notefuse.synth import (
    ACUTE_MARKERS,
    CHRONIC_MARKERS,
    SynthConfig,
    generate_synthetic,
)

ALL_MARKERS = set(ACUTE_MARKERS) | set(CHRONIC_MARKERS)


@pytest.fixture(scope="module")
def corpus_small():
    return generate_synthetic(SynthConfig(patients=60), seed=11)


class TestStructure:
    def test_label_coherence(self, corpus_small):
        for rec in corpus_small.records:
            assert not (rec.died_30d and not rec.died_1y)

    def test_all_adults_single_admission(self, corpus_small):
        assert all(r.age_years >= 18 for r in corpus_small.records)

    def test_mean_notes_per_patient(self):
        corpus = generate_synthetic(SynthConfig(patients=400), seed=5)
        counts = [len(r.notes) for r in corpus.records]
        assert np.mean(counts) == pytest.approx(2.2, abs=0.25)
        assert min(counts) >= 1

    def test_prevalence_tracks_config(self):
        cfg = SynthConfig(patients=2000, prevalence_30d=0.3, prevalence_1y=0.45)
        corpus = generate_synthetic(cfg, seed=3)
        p30 = np.mean([r.died_30d for r in corpus.records])
        p1y = np.mean([r.died_1y for r in corpus.records])
        assert p30 == pytest.approx(0.3, abs=0.04)
        assert p1y == pytest.approx(0.45, abs=0.04)

    def test_deterministic_per_seed(self):
        a = generate_synthetic(SynthConfig(patients=20), seed=7)
        b = generate_synthetic(SynthConfig(patients=20), seed=7)
        texts_a = [n.raw_text for r in a.records for n in r.notes]
        texts_b = [n.raw_text for r in b.records for n in r.notes]
        assert texts_a == texts_b
        assert [r.died_1y for r in a.records] == [r.died_1y for r in b.records]


class TestGoldFrames:
    def test_extraction_matches_gold_exactly(self, corpus_small):
        for rec in corpus_small.records:
            for note in rec.notes:
                got = build_frames(note, corpus_small.lexicon)
                assert got == corpus_small.gold_frames[note.note_id], note.note_id

    def test_gold_alignment(self, corpus_small):
        for rec in corpus_small.records:
            for note in rec.notes:
                for frame, sent in zip(corpus_small.gold_frames[note.note_id], note.sentences):
                    assert len(frame.sem_types) == len(sent.words)


class TestMarkerSignal:
    def test_injection_rate_zero_means_no_markers(self):
        corpus = generate_synthetic(SynthConfig(patients=80, marker_injection_rate=0.0), seed=2)
        words = {w.lower() for r in corpus.records for n in r.notes
                 for s in n.sentences for w in s.words}
        assert not (words & ALL_MARKERS)

    def test_full_injection_is_linearly_separable(self):
        # rate 1, prevalence 0.5: a bag-of-words probe must reach AUC > 0.99
        cfg = SynthConfig(patients=120, marker_injection_rate=1.0,
                          prevalence_30d=0.5, prevalence_1y=0.5)
        corpus = generate_synthetic(cfg, seed=13)
        vocab = sorted({w.lower() for r in corpus.records for n in r.notes
                        for s in n.sentences for w in s.words})
        index = {w: i for i, w in enumerate(vocab)}
        X = np.zeros((len(corpus.records), len(vocab)))
        y = np.zeros(len(corpus.records))
        for i, rec in enumerate(corpus.records):
            y[i] = bool(rec.died_30d)
            for note in rec.notes:
                for sent in note.sentences:
                    for w in sent.words:
                        X[i, index[w.lower()]] += 1.0
        clf = fit_classifier(X, y, horizon="30d", l2=1.0)
        assert auc_roc(clf.decision(X), y) > 0.99


class TestConfigValidation:
    def test_rates_outside_unit_interval(self):
        with pytest.raises(ValueError, match="marker_injection_rate"):
            SynthConfig(marker_injection_rate=1.5)

    def test_prevalence_ordering(self):
        with pytest.raises(ValueError, match="cannot exceed"):
            SynthConfig(prevalence_30d=0.6, prevalence_1y=0.4)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            SynthConfig.from_dict({"patience": 5})


class TestRoundTrip:
    def test_written_files_reload_identically(self, tmp_path, corpus_small):
        paths = corpus_small.write(tmp_path)
        reloaded = load_notes(paths["notes"], paths["patients"])
        assert [r.patient_id for r in reloaded] == [r.patient_id for r in corpus_small.records]
        for got, want in zip(reloaded, corpus_small.records):
            assert [n.raw_text for n in got.notes] == [n.raw_text for n in want.notes]
            assert (got.died_30d, got.died_1y) == (want.died_30d, want.died_1y)
