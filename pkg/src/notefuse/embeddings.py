"""Word/sentence vectors and trainable frame-token embedding tables.

The contextual-embedding role is played by a frozen provider with two
backends: a pretrained token->vector table loaded from a word2vec-style
text file, and a deterministic-hash fallback that needs no downloads.
Both are frozen; only the frame-token tables train with the network.
"""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

FRAME_COMPONENTS = ("sc", "tok", "type")


def _words_of(sentence_or_words):
    return sentence_or_words.words if hasattr(sentence_or_words, "words") else list(sentence_or_words)


class HashEmbeddingProvider:
    """Deterministic pseudo-random word vectors, stable across platforms.

    Each (lowercased) token is hashed with blake2b keyed by the seed; the
    digest seeds a PCG64 stream whose standard normals form the vector,
    so entries have unit variance and identical tokens always map to
    identical vectors. Out-of-vocabulary is impossible by construction.
    """

    backend = "deterministic_hash"

    def __init__(self, dim: int = 50, seed: int = 0):
        self.dim = int(dim)
        self.seed = int(seed)
        self.oov_count = 0
        self._cache: dict[str, np.ndarray] = {}

    def word_vector(self, token: str) -> np.ndarray:
        key = token.lower()
        vec = self._cache.get(key)
        if vec is None:
            digest = hashlib.blake2b(
                key.encode("utf-8"), digest_size=8, key=str(self.seed).encode("utf-8")
            ).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
            vec = rng.standard_normal(self.dim)
            self._cache[key] = vec
        return vec

    def embed_words(self, sentence) -> np.ndarray:
        """Row j is the vector of word j; shape (N, dim)."""
        words = _words_of(sentence)
        return np.stack([self.word_vector(w) for w in words]) if words else np.zeros((0, self.dim))

    def embed_sentence(self, sentence) -> np.ndarray:
        return self.embed_words(sentence).mean(axis=0)

    def spec(self) -> dict:
        return {"backend": self.backend, "dim": self.dim, "seed": self.seed}


class TableEmbeddingProvider:
    """Pretrained token->vector table ("token v1 ... vd" per line).

    Tokens are matched case-folded. Out-of-vocabulary tokens fall back to
    the deterministic hash backend (counted exactly in `oov_count`).
    The native sentence vector of a static table is the mean of its word
    vectors.
    """

    backend = "pretrained_table"

    def __init__(self, vectors_path, seed: int = 0):
        self.vectors_path = str(vectors_path)
        self.table: dict[str, np.ndarray] = {}
        dim = None
        with open(vectors_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue  # optional word2vec count/dim header
                if len(parts) < 2:
                    continue
                vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise ValueError(
                        f"{vectors_path}: line {lineno}: expected {dim} values, got {vec.size}"
                    )
                self.table[parts[0].lower()] = vec
        if dim is None:
            raise ValueError(f"{vectors_path}: no vectors found")
        self.dim = int(dim)
        self.seed = int(seed)
        self.oov_count = 0
        self._fallback = HashEmbeddingProvider(dim=self.dim, seed=seed)

    def word_vector(self, token: str) -> np.ndarray:
        vec = self.table.get(token.lower())
        if vec is None:
            self.oov_count += 1
            return self._fallback.word_vector(token)
        return vec

    def embed_words(self, sentence) -> np.ndarray:
        words = _words_of(sentence)
        return np.stack([self.word_vector(w) for w in words]) if words else np.zeros((0, self.dim))

    def embed_sentence(self, sentence) -> np.ndarray:
        return self.embed_words(sentence).mean(axis=0)

    def spec(self) -> dict:
        return {
            "backend": self.backend,
            "dim": self.dim,
            "seed": self.seed,
            "vectors_path": self.vectors_path,
        }


def make_provider(backend: str, dim: int, seed: int, vectors_path=None):
    if backend == "deterministic_hash":
        return HashEmbeddingProvider(dim=dim, seed=seed)
    if backend == "pretrained_table":
        if vectors_path is None:
            raise ValueError("pretrained_table backend requires a vectors file")
        provider = TableEmbeddingProvider(vectors_path, seed=seed)
        if provider.dim != dim:
            logger.info("vectors file dimension %d overrides configured %d", provider.dim, dim)
        return provider
    raise ValueError(f"unknown embedding backend {backend!r}")


# ----------------------------------------------------------------------
# frame-token vocabularies and tables
# ----------------------------------------------------------------------


class Vocab:
    """Token list with reserved <pad>=0 and <unk>=1 ids, sorted for determinism."""

    def __init__(self, tokens):
        seen = sorted(set(tokens) - {PAD_TOKEN, UNK_TOKEN})
        self.tokens = [PAD_TOKEN, UNK_TOKEN] + seen
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, tokens, length: int | None = None) -> np.ndarray:
        """Id sequence, zero-padded (and truncated) to `length` if given."""
        ids = [self.id_of(t) for t in tokens]
        if length is not None:
            ids = ids[:length] + [PAD_ID] * max(0, length - len(ids))
        return np.asarray(ids, dtype=np.int64)

    def to_list(self) -> list[str]:
        return list(self.tokens[2:])

    @classmethod
    def from_list(cls, tokens) -> "Vocab":
        return cls(tokens)


class FrameEmbeddingTable:
    """Trainable (dim x vocab) embedding matrix for one frame component.

    Initialized seeded-uniform in [-0.05, 0.05]; the pad column is zero
    and stays out of both lookups and gradients.
    """

    def __init__(self, component: str, vocab: Vocab, dim: int, rng: np.random.Generator):
        if component not in FRAME_COMPONENTS:
            raise ValueError(f"unknown frame component {component!r}")
        weights = rng.uniform(-0.05, 0.05, size=(dim, len(vocab)))
        weights[:, PAD_ID] = 0.0
        self.component = component
        self.vocab = vocab
        self.dim = int(dim)
        self.table = Parameter(weights, name=f"frame_table/{component}")

    def lookup(self, ids) -> Tensor:
        """Columns for `ids`, shape (dim, n); pad ids give zero columns."""
        return ad.lookup(self.table, ids, pad_id=PAD_ID)

    def encode_and_lookup(self, tokens, length: int | None = None) -> Tensor:
        return self.lookup(self.vocab.encode(tokens, length))
