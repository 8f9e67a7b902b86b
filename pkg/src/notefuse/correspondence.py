"""Bidirectional trilinear fusion of sentence and frame embeddings.

Given the note's sentence-embedding matrix E_s and frame-embedding
matrix E_sf (both D x d_s), a trilinear similarity matrix is normalized
row-wise and column-wise into two attention maps, read out against the
opposite view, fused by Hadamard products into V (D x 2*d_s), and
aggregated into the note vector c by unnormalized salience weights.
The salience weight doubles as the match score of a sentence-frame pair
in the contrastive loss, which is why it stays unnormalized here;
min-max scaling happens only in visualization.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def _check_pair(e_s: Tensor, e_sf: Tensor):
    if e_s.shape != e_sf.shape or e_s.ndim != 2:
        raise ValueError(f"expected equal (D, d_s) matrices, got {e_s.shape} and {e_sf.shape}")


def similarity_matrix(e_s: Tensor, e_sf: Tensor, w_s: Tensor) -> Tensor:
    """Trilinear similarities: SIM[i,k] = w_s . [e_s[i]; e_sf[k]; e_s[i] * e_sf[k]]."""
    _check_pair(e_s, e_sf)
    d_s = e_s.shape[1]
    if w_s.shape != (3 * d_s,):
        raise ValueError(f"trilinear weight must have shape ({3 * d_s},), got {w_s.shape}")
    w1, w2, w3 = w_s[:d_s], w_s[d_s : 2 * d_s], w_s[2 * d_s :]
    rows = (e_s @ w1).reshape(e_s.shape[0], 1)
    cols = (e_sf @ w2).reshape(1, e_s.shape[0])
    cross = (e_s * w3) @ e_sf.T
    return rows + cols + cross


def bidirectional_attention(sim: Tensor, e_s: Tensor, e_sf: Tensor) -> tuple[Tensor, Tensor]:
    """Row/column-softmax attention readouts (text->frame, frame->text).

    Row-stochastic normalization feeds the text-to-frame readout; the
    frame-to-text direction composes both normalizations before reading
    the sentence matrix back out.
    """
    text2sem = ad.softmax(sim, axis=1)
    sem2text = ad.softmax(sim, axis=0)
    u_t2s = text2sem @ e_sf
    u_s2t = text2sem @ sem2text.T @ e_s
    return u_t2s, u_s2t


def fuse(e_s: Tensor, e_sf: Tensor, u_t2s: Tensor, u_s2t: Tensor) -> Tensor:
    """Fused sentence rows V = [E_s * U_t2s ; E_sf * U_s2t], shape (D, 2*d_s)."""
    _check_pair(e_s, e_sf)
    _check_pair(u_t2s, u_s2t)
    if e_s.shape != u_t2s.shape:
        raise ValueError(f"attention shape {u_t2s.shape} does not match embeddings {e_s.shape}")
    return ad.concat([e_s * u_t2s, e_sf * u_s2t], axis=1)


class SalienceHead:
    """Linear per-sentence salience and the weighted-sum note vector."""

    def __init__(self, dim: int, rng: np.random.Generator, name: str = "salience"):
        # near-uniform salience at init: c starts as a plain sum over the
        # fused rows, and training learns which sentences to up/down-weight
        self.w_n = Parameter(rng.uniform(-0.01, 0.01, size=dim), name=f"{name}/w_n")
        self.b_n = Parameter(1.0, name=f"{name}/b_n")

    def params(self) -> list[Parameter]:
        return [self.w_n, self.b_n]

    def note_representation(self, v: Tensor) -> tuple[Tensor, Tensor]:
        """(alpha, c): raw salience per sentence and c = sum_i alpha_i v_i."""
        alpha = v @ self.w_n + self.b_n
        return alpha, alpha @ v


def correspondence_chain(e_s: Tensor, e_sf: Tensor, w_s: Tensor,
                         head: SalienceHead) -> tuple[Tensor, Tensor, Tensor]:
    """Full fusion chain; returns (alpha, c, V)."""
    sim = similarity_matrix(e_s, e_sf, w_s)
    u_t2s, u_s2t = bidirectional_attention(sim, e_s, e_sf)
    v = fuse(e_s, e_sf, u_t2s, u_s2t)
    alpha, c = head.note_representation(v)
    return alpha, c, v
