"""Network assembly: feature extraction, parameters, per-note forwards.

The trainable surface is wired per ablation:

* "none" (full): term gating + SSM module build E_s, the structured
  encoder builds E_sf, the trilinear chain fuses them, and the salience
  head emits (alpha, c). alpha doubles as the match score for the
  contrastive loss.
* "no_struct": text only. Gating sees zeros in place of type
  embeddings, E_sf collapses to one trainable constant row, and there is
  no contrastive term (nothing to corrupt).
* "no_unstruct": frames only. Frame codes pass through their own
  salience head into c, and training supervises a logistic head on the
  configured horizon (the label-free losses need the text side).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .config import TrainConfig
from .correspondence import SalienceHead, correspondence_chain
from .corpus import CorpusStats, Note
from .embeddings import Vocab
from .encoder import (
    ConvStack,
    SsmEncoder,
    StructuredEncoder,
    TermGating,
    build_ssm,
    sentence_embedding,
    ssm_window,
)
from .frames import SemanticFrame, build_frames


@dataclass
class NoteFeatures:
    """Constant (non-trainable) inputs for one note's forward pass."""

    note_id: str
    frames: list[SemanticFrame] | None
    word_vectors: list[np.ndarray] | None  # per sentence, (N_i, emb_dim)
    idf_values: list[np.ndarray] | None    # per sentence, (N_i,)
    base_matrix: np.ndarray | None         # provider sentence vectors, (D, emb_dim)
    windows: list[np.ndarray] | None       # per sentence, (2w+1, D)

    @property
    def n_sentences(self) -> int:
        for attr in (self.frames, self.word_vectors, self.windows):
            if attr is not None:
                return len(attr)
        raise ValueError("empty features")


class FeatureExtractor:
    """Turns a Note into the frozen arrays the model consumes."""

    def __init__(self, config: TrainConfig, provider, stats: CorpusStats,
                 lexicon=None, inventory=None):
        self.config = config
        self.provider = provider
        self.stats = stats
        self.lexicon = lexicon
        self.inventory = inventory
        self.need_frames = config.ablation != "no_struct"
        self.need_text = config.ablation != "no_unstruct"
        if self.need_frames and lexicon is None:
            raise ValueError(f"ablation {config.ablation!r} requires a concept lexicon")

    def extract(self, note: Note, frames: list[SemanticFrame] | None = None) -> NoteFeatures:
        if self.need_frames and frames is None:
            frames = build_frames(note, self.lexicon, self.inventory)
        word_vectors = idf_values = base = windows = None
        if self.need_text:
            word_vectors = [self.provider.embed_words(s) for s in note.sentences]
            idf_values = [
                np.asarray([self.stats.idf_of(w) for w in s.words]) for s in note.sentences
            ]
            base = np.stack([self.provider.embed_sentence(s) for s in note.sentences])
            ssm = build_ssm(base)
            windows = [ssm_window(ssm, i, self.config.ssm_window_w)
                       for i in range(len(note.sentences))]
        return NoteFeatures(
            note_id=note.note_id,
            frames=frames if self.need_frames else None,
            word_vectors=word_vectors,
            idf_values=idf_values,
            base_matrix=base,
            windows=windows,
        )


@dataclass
class NoteForward:
    """Tensors from one note's forward pass (shared by the corrupted chains)."""

    e_s: Tensor | None           # (D, d_s)
    e_sf_rows: list[Tensor] | None
    e_sf: Tensor | None          # (D, d_s)
    gates: list[Tensor] | None   # per sentence, (N_i,)
    alpha: Tensor                # (D,)
    c: Tensor                    # note vector


class FusionModel:
    """All trainable tensors plus the forward passes, wired per ablation."""

    def __init__(self, config: TrainConfig, vocabs: dict[str, Vocab] | None):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 101]))
        d_s = config.d_s
        self.structured = None
        self.gating = None
        self.ssm_encoder = None
        self.w_s = None
        self.salience = None
        self.sf_const = None
        self.salience_sf = None
        self.clf_w = None
        self.clf_b = None

        if config.ablation != "no_struct":
            if not vocabs:
                raise ValueError("frame vocabularies required unless ablation is no_struct")
            self.structured = StructuredEncoder(
                vocabs, config.frame_emb_dim, config.pad_len_n, config.conv_filters,
                config.kernel_sizes, config.strides, config.f_L, rng,
            )
        if config.ablation != "no_unstruct":
            type_table = self.structured.tables["type"] if self.structured else None
            self.gating = TermGating(type_table, config.frame_emb_dim, config.emb_dim,
                                     config.d_sa, rng)
            self.ssm_encoder = SsmEncoder(config.ssm_window_w, config.ssm_filters,
                                          config.ssm_kernel, config.d_ssm, config.dropout, rng)

        if config.ablation == "no_unstruct":
            self.salience_sf = SalienceHead(d_s, rng, name="salience_sf")
            bound = np.sqrt(6.0 / (d_s + 1))
            self.clf_w = Parameter(rng.uniform(-bound, bound, size=d_s), name="clf/w")
            self.clf_b = Parameter(0.0, name="clf/b")
        else:
            bound = np.sqrt(6.0 / (3 * d_s + 1))
            self.w_s = Parameter(rng.uniform(-bound, bound, size=3 * d_s), name="trilinear/w_s")
            self.salience = SalienceHead(2 * d_s, rng, name="salience")
            if config.ablation == "no_struct":
                self.sf_const = Parameter(rng.uniform(-0.05, 0.05, size=d_s), name="struct_const")
            if config.end_to_end:
                bound = np.sqrt(6.0 / (2 * d_s + 1))
                self.clf_w = Parameter(rng.uniform(-bound, bound, size=2 * d_s), name="clf/w")
                self.clf_b = Parameter(0.0, name="clf/b")

        self.params: dict[str, Parameter] = {}
        self.sentence_param_names: list[str] = []
        self._register()

    def _register(self):
        sentence_parts, other_parts = [], []
        if self.structured is not None:
            sentence_parts.extend(self.structured.params())
        if self.gating is not None:
            sentence_parts.extend(self.gating.params())
        if self.ssm_encoder is not None:
            sentence_parts.extend(self.ssm_encoder.params())
        if self.sf_const is not None:
            sentence_parts.append(self.sf_const)
        if self.w_s is not None:
            other_parts.append(self.w_s)
        if self.salience is not None:
            other_parts.extend(self.salience.params())
        if self.salience_sf is not None:
            other_parts.extend(self.salience_sf.params())
        if self.clf_w is not None:
            other_parts.extend([self.clf_w, self.clf_b])
        for p in sentence_parts + other_parts:
            if p.name in self.params:
                raise ValueError(f"duplicate parameter name {p.name}")
            self.params[p.name] = p
        self.sentence_param_names = [p.name for p in sentence_parts]

    @property
    def representation_dim(self) -> int:
        return self.config.d_s if self.config.ablation == "no_unstruct" else 2 * self.config.d_s

    # ------------------------------------------------------------------
    # forwards
    # ------------------------------------------------------------------

    def _sentence_rows(self, feats: NoteFeatures, train: bool, rng) -> tuple[list[Tensor], list[Tensor]]:
        rows, gates_per_sentence = [], []
        for i in range(feats.n_sentences):
            sem_types = feats.frames[i].sem_types if feats.frames is not None else None
            gates = self.gating.gate_weights(sem_types, feats.idf_values[i])
            e_sa = self.gating.sentence_embedding(feats.word_vectors[i], gates)
            e_ssm = self.ssm_encoder.forward(feats.windows[i], train=train, rng=rng)
            rows.append(sentence_embedding(e_ssm, e_sa, self.config.d_s))
            gates_per_sentence.append(gates)
        return rows, gates_per_sentence

    def _frame_rows(self, feats: NoteFeatures) -> list[Tensor]:
        if self.config.ablation == "no_struct":
            return [self.sf_const] * feats.n_sentences
        return [self.structured.frame_embedding(f) for f in feats.frames]

    def encode_note(self, feats: NoteFeatures, train: bool = False,
                    rng: np.random.Generator | None = None) -> NoteForward:
        if self.config.ablation == "no_unstruct":
            e_sf_rows = self._frame_rows(feats)
            e_sf = ad.stack_rows(e_sf_rows)
            alpha, c = self.salience_sf.note_representation(e_sf)
            return NoteForward(e_s=None, e_sf_rows=e_sf_rows, e_sf=e_sf,
                               gates=None, alpha=alpha, c=c)
        e_s_rows, gates = self._sentence_rows(feats, train, rng)
        e_sf_rows = self._frame_rows(feats)
        e_s = ad.stack_rows(e_s_rows)
        e_sf = ad.stack_rows(e_sf_rows)
        alpha, c, _ = correspondence_chain(e_s, e_sf, self.w_s, self.salience)
        return NoteForward(e_s=e_s, e_sf_rows=e_sf_rows, e_sf=e_sf,
                           gates=gates, alpha=alpha, c=c)

    def corrupted_score(self, fwd: NoteForward, i: int, neg_frame: SemanticFrame) -> Tensor:
        """Salience of sentence i after swapping in a corrupted frame.

        Only the frame side is recomputed: E_s (and the SSM features
        inside it) are shared with the true pair, and the fusion chain
        reruns on the modified E_sf.
        """
        if self.config.ablation != "none":
            raise ValueError("corrupted pairs are only defined for the full model")
        rows = list(fwd.e_sf_rows)
        rows[i] = self.structured.frame_embedding(neg_frame)
        alpha, _, _ = correspondence_chain(fwd.e_s, ad.stack_rows(rows), self.w_s, self.salience)
        return alpha[i]

    def note_logit(self, c: Tensor) -> Tensor:
        if self.clf_w is None:
            raise ValueError("this configuration has no supervised head")
        return self.clf_w @ c + self.clf_b

    def representation(self, feats: NoteFeatures) -> np.ndarray:
        """Eval-mode note vector c as a plain array."""
        return self.encode_note(feats, train=False).c.data.copy()

    # ------------------------------------------------------------------
    # parameter plumbing
    # ------------------------------------------------------------------

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def sentence_params(self) -> list[Parameter]:
        return [self.params[n] for n in self.sentence_param_names]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            missing = set(self.params) - set(arrays)
            extra = set(arrays) - set(self.params)
            raise ValueError(f"parameter mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, value in arrays.items():
            p = self.params[name]
            if p.data.shape != value.shape:
                raise ValueError(f"{name}: shape {value.shape} != expected {p.data.shape}")
            p.data = np.asarray(value, dtype=np.float64).copy()
