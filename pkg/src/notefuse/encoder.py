"""Per-sentence encoders.

Three pieces produce the two sentence-level views that the
correspondence module fuses:

* term gating: softmax importance over a sentence's words from the
  frame's type-tag embeddings concatenated with idf, then a projected
  weighted sum of the (frozen) word vectors;
* a ConvNet stack per frame component (category/sub-category, concept
  tokens, type tags) whose final conv layer spans the whole remaining
  length, so the fully-connected output is position-free;
* the self-similarity module: cosine-distance matrix over the note's
  sentence vectors, a fixed-height window per sentence, then
  conv -> global max-pool -> dropout -> dense.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .embeddings import FrameEmbeddingTable, Vocab

logger = logging.getLogger(__name__)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


# ----------------------------------------------------------------------
# term gating
# ----------------------------------------------------------------------


class TermGating:
    """Word-importance gate driven by frame-type embeddings and idf.

    Gate logits are w_g . [type_embedding(t_j); idf(w_j)]; the softmax
    over the sentence's words weights the frozen word vectors, and a
    trainable projection maps the weighted sum from the provider
    dimension into the sentence-embedding subspace.
    """

    def __init__(self, type_table: FrameEmbeddingTable | None, frame_dim: int,
                 emb_dim: int, out_dim: int, rng: np.random.Generator):
        self.type_table = type_table
        self.frame_dim = int(frame_dim)
        # start at the idf-gating prior (rare words matter, function words do
        # not); the type-embedding interaction is learned on top of it
        w_g = np.append(0.1 * _glorot(rng, (frame_dim,), frame_dim + 1, 1), 1.0)
        self.w_g = Parameter(w_g, name="gating/w_g")
        self.projection = Parameter(
            _glorot(rng, (out_dim, emb_dim), emb_dim, out_dim), name="gating/projection"
        )

    def params(self) -> list[Parameter]:
        return [self.w_g, self.projection]

    def gate_weights(self, sem_types, idf_values: np.ndarray) -> Tensor:
        """Softmax importance weights over the sentence's words, shape (N,)."""
        n = len(idf_values)
        if n == 0:
            raise ValueError("cannot gate an empty sentence")
        if self.type_table is not None:
            if len(sem_types) != n:
                raise ValueError(f"alignment broken: {len(sem_types)} type tags for {n} words")
            type_emb = self.type_table.encode_and_lookup(sem_types)
        else:
            # text-only ablation: the frame channel contributes nothing
            type_emb = Tensor(np.zeros((self.frame_dim, n)))
        feats = ad.concat([type_emb, Tensor(np.asarray(idf_values, float).reshape(1, n))], axis=0)
        return ad.softmax(self.w_g @ feats, axis=-1)

    def sentence_embedding(self, word_vectors: np.ndarray, gates: Tensor) -> Tensor:
        """Projected gate-weighted sum of word vectors, shape (out_dim,)."""
        return self.projection @ (gates @ Tensor(word_vectors))


# ----------------------------------------------------------------------
# frame ConvNet
# ----------------------------------------------------------------------


class ConvStack:
    """Stacked valid-mode 1-D convolutions collapsing (d, n) to (f_L,).

    The final conv layer's kernel spans the entire remaining length, so
    its output length is 1 and the fully-connected layer sees no spatial
    axis. Conv biases are per-position (one per filter and output slot),
    ReLU throughout.
    """

    def __init__(self, name: str, in_dim: int, seq_len: int, conv_filters, kernel_sizes,
                 strides, out_dim: int, rng: np.random.Generator):
        conv_filters = list(conv_filters)
        kernel_sizes = list(kernel_sizes)
        strides = list(strides)
        if len(kernel_sizes) != len(conv_filters) - 1:
            raise ValueError("need one kernel size per conv layer except the final full-span one")
        if len(strides) != len(conv_filters):
            raise ValueError("need one stride per conv layer")

        self.layers = []
        length = seq_len
        channels = in_dim
        for i, (f, s) in enumerate(zip(conv_filters, strides)):
            v = kernel_sizes[i] if i < len(conv_filters) - 1 else length
            if length < v:
                raise ValueError(
                    f"{name}: layer {i + 1} input length {length} shorter than kernel {v}"
                )
            out_len = (length - v) // s + 1
            w = Parameter(_glorot(rng, (f, channels, v), channels * v, f), name=f"{name}/conv{i + 1}/w")
            b = Parameter(np.zeros((f, out_len)), name=f"{name}/conv{i + 1}/b")
            self.layers.append((w, b, s))
            length, channels = out_len, f
        if length != 1:
            raise ValueError(f"{name}: final conv layer left spatial length {length}, expected 1")
        self.fc_w = Parameter(_glorot(rng, (out_dim, channels), channels, out_dim), name=f"{name}/fc/w")
        # slightly positive bias keeps the ReLU codes alive at init; dead
        # zero dimensions would null out the Hadamard fusion downstream
        self.fc_b = Parameter(np.full(out_dim, 0.1), name=f"{name}/fc/b")
        self.out_dim = int(out_dim)

    def params(self) -> list[Parameter]:
        out = []
        for w, b, _ in self.layers:
            out.extend([w, b])
        out.extend([self.fc_w, self.fc_b])
        return out

    def forward(self, seq: Tensor) -> Tensor:
        x = seq
        for w, b, stride in self.layers:
            x = ad.relu(ad.conv1d(x, w, stride=stride) + b)
        h = x.reshape(x.shape[0])  # spatial length is 1 by construction
        return ad.relu(self.fc_w @ h + self.fc_b)


class StructuredEncoder:
    """Three component tables + conv stacks; output is their concatenation."""

    def __init__(self, vocabs: dict[str, Vocab], frame_dim: int, pad_len: int,
                 conv_filters, kernel_sizes, strides, f_l: int, rng: np.random.Generator):
        self.pad_len = int(pad_len)
        self.tables = {
            z: FrameEmbeddingTable(z, vocabs[z], frame_dim, rng) for z in ("sc", "tok", "type")
        }
        self.stacks = {
            z: ConvStack(f"struct/{z}", frame_dim, pad_len, conv_filters, kernel_sizes,
                         strides, f_l, rng)
            for z in ("sc", "tok", "type")
        }
        self.out_dim = 3 * int(f_l)

    def params(self) -> list[Parameter]:
        out = []
        for z in ("sc", "tok", "type"):
            out.append(self.tables[z].table)
            out.extend(self.stacks[z].params())
        return out

    @staticmethod
    def component_tokens(frame, component: str) -> list[str]:
        if component == "sc":
            return [frame.category] + frame.subcategory.split()
        if component == "tok":
            return list(frame.sem_tokens)
        if component == "type":
            return list(frame.sem_types)
        raise ValueError(f"unknown frame component {component!r}")

    def encode_component(self, frame, component: str) -> Tensor:
        seq = self.tables[component].encode_and_lookup(
            self.component_tokens(frame, component), self.pad_len
        )
        return self.stacks[component].forward(seq)

    def frame_embedding(self, frame) -> Tensor:
        """Concatenated component codes, shape (3 * f_L,)."""
        return ad.concat([self.encode_component(frame, z) for z in ("sc", "tok", "type")])


# ----------------------------------------------------------------------
# self-similarity module
# ----------------------------------------------------------------------


def build_ssm(sentence_vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine-distance matrix (D, D): symmetric, zero diagonal.

    Zero vectors have no direction; by convention they sit at distance 1
    from everything else (logged once per call).
    """
    x = np.asarray(sentence_vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    if zero.any():
        logger.info("build_ssm: %d zero sentence vector(s); using distance-1 convention", zero.sum())
    safe = np.where(zero, 1.0, norms)
    unit = x / safe[:, None]
    dist = 1.0 - unit @ unit.T
    dist[zero, :] = 1.0
    dist[:, zero] = 1.0
    np.fill_diagonal(dist, 0.0)
    return dist


def ssm_window(ssm: np.ndarray, i: int, w: int = 1) -> np.ndarray:
    """Rows i-w..i+w of the SSM, shifted inward at the edges.

    The first row takes the 2w rows below it and the last the 2w rows
    above, so every window is (2w+1, D). Notes shorter than 2w+1
    sentences repeat the edge rows (logged).
    """
    d = ssm.shape[0]
    size = 2 * w + 1
    if not 0 <= i < d:
        raise IndexError(f"sentence index {i} out of range for D={d}")
    if d >= size:
        start = min(max(i - w, 0), d - size)
        return ssm[start : start + size]
    logger.info("ssm_window: D=%d < %d; repeating edge rows", d, size)
    idx = np.clip(np.arange(i - w, i + w + 1), 0, d - 1)
    return ssm[idx]


class SsmEncoder:
    """conv -> ReLU -> global max-pool over sentences -> dropout -> dense.

    The max-pool handles the variable note length D; the conv bias is
    per-channel for the same reason.
    """

    def __init__(self, window: int, filters: int, kernel: int, out_dim: int,
                 dropout_rate: float, rng: np.random.Generator):
        self.window = int(window)
        self.kernel = int(kernel)
        self.dropout_rate = float(dropout_rate)
        rows = 2 * self.window + 1
        self.conv_w = Parameter(_glorot(rng, (filters, rows, kernel), rows * kernel, filters),
                                name="ssm/conv/w")
        self.conv_b = Parameter(np.zeros((filters, 1)), name="ssm/conv/b")
        self.dense_w = Parameter(_glorot(rng, (out_dim, filters), filters, out_dim), name="ssm/dense/w")
        self.dense_b = Parameter(np.zeros(out_dim), name="ssm/dense/b")
        self.out_dim = int(out_dim)

    def params(self) -> list[Parameter]:
        return [self.conv_w, self.conv_b, self.dense_w, self.dense_b]

    def forward(self, sub_matrix: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        sub = np.asarray(sub_matrix, dtype=np.float64)
        if sub.shape[0] != 2 * self.window + 1:
            raise ValueError(f"window sub-matrix must have {2 * self.window + 1} rows, got {sub.shape[0]}")
        if sub.shape[1] < self.kernel:  # very short note: zero-pad the sentence axis
            pad = self.kernel - sub.shape[1]
            sub = np.pad(sub, ((0, 0), (0, pad)))
        h = ad.relu(ad.conv1d(Tensor(sub), self.conv_w) + self.conv_b)
        pooled = ad.max_along(h, axis=1)
        if train and self.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs a generator")
            pooled = ad.dropout(pooled, self.dropout_rate, rng)
        return self.dense_w @ pooled + self.dense_b


def sentence_embedding(e_ssm: Tensor, e_sa: Tensor, d_s: int) -> Tensor:
    """Final unstructured sentence embedding [e_ssm; e_sa], shape (d_s,)."""
    got = e_ssm.shape[0] + e_sa.shape[0]
    if got != d_s:
        raise ValueError(f"dimension mismatch: {e_ssm.shape[0]} + {e_sa.shape[0]} != d_s={d_s}")
    return ad.concat([e_ssm, e_sa])
