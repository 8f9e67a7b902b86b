"""Static HTML rendering of word-importance and sentence-salience weights.

One HTML file per note, no scripts: each word is shaded on an orange
scale by its min-max normalized gate weight and each sentence row on a
blue scale by its normalized salience. A constant-weight note renders
uniformly (the normalizer maps a flat range to 0.5).
"""

from __future__ import annotations

import html
from pathlib import Path

import numpy as np

from .corpus import Note
from .model import FusionModel, NoteFeatures

_PAGE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>note {note_id}</title>
<style>
body {{ font-family: sans-serif; max-width: 60em; margin: 2em auto; }}
p.meta {{ color: #555; }}
div.sentence {{ padding: 0.35em 0.6em; margin: 0.25em 0; border-radius: 4px; }}
span.word {{ padding: 0.05em 0.15em; border-radius: 3px; }}
div.legend {{ margin-top: 1.5em; color: #555; font-size: 0.9em; }}
</style>
</head>
<body>
<h2>Note {note_id}</h2>
<p class="meta">category: {category} &middot; {n_sentences} sentences</p>
{body}
<div class="legend">word shade (orange): normalized importance weight &middot;
sentence shade (blue): normalized salience weight</div>
</body>
</html>
"""


def normalize_weights(values: np.ndarray) -> np.ndarray:
    """Min-max map to [0, 1]; a constant vector maps to all 0.5."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    lo, hi = values.min(), values.max()
    if hi - lo < 1e-12:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def _orange(intensity: float) -> str:
    return f"rgba(255, 140, 0, {0.85 * intensity:.3f})"


def _blue(intensity: float) -> str:
    return f"rgba(30, 100, 220, {0.45 * intensity:.3f})"


def render_note_html(note: Note, word_weights: list[np.ndarray], salience: np.ndarray) -> str:
    """Build the page from per-sentence word weights and sentence salience.

    Normalization is per note: word weights are scaled jointly over all
    of the note's words, salience over its sentences.
    """
    if len(word_weights) != len(note.sentences) or len(salience) != len(note.sentences):
        raise ValueError("weights do not align with the note's sentences")
    flat = np.concatenate([np.asarray(w, dtype=np.float64) for w in word_weights])
    norm_words = normalize_weights(flat)
    norm_salience = normalize_weights(salience)
    rows = []
    offset = 0
    for sent, sal in zip(note.sentences, norm_salience):
        spans = []
        for word in sent.words:
            w = norm_words[offset]
            offset += 1
            spans.append(
                f'<span class="word" style="background:{_orange(w)}" '
                f'title="{w:.3f}">{html.escape(word)}</span>'
            )
        rows.append(
            f'<div class="sentence" style="background:{_blue(float(sal))}" '
            f'title="{float(sal):.3f}">' + " ".join(spans) + "</div>"
        )
    return _PAGE.format(
        note_id=html.escape(note.note_id),
        category=html.escape(str(getattr(note.category, "value", note.category))),
        n_sentences=len(note.sentences),
        body="\n".join(rows),
    )


def visualize_note(model: FusionModel, feats: NoteFeatures, note: Note, out_path) -> Path:
    """Run an eval-mode forward pass and write the shaded HTML page."""
    fwd = model.encode_note(feats, train=False)
    if fwd.gates is not None:
        word_weights = [g.data for g in fwd.gates]
    else:  # frame-only ablation has no word gates; render words flat
        word_weights = [np.zeros(len(s.words)) for s in note.sentences]
    page = render_note_html(note, word_weights, fwd.alpha.data)
    out_path = Path(out_path)
    out_path.write_text(page, encoding="utf-8")
    return out_path
