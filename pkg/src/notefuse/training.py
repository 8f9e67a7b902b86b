"""Joint training: losses, negative sampling, optimizer loop, checkpoints, eval.

The objective is the contrastive max-margin loss over true vs corrupted
sentence-frame pairs (scores are the salience weights) plus a smooth-L1
term tying the note vector to a fixed random projection of the note's
frozen sentence-vector matrix, plus an L2 penalty on the sentence-module
parameters. Mortality classification stays out of the objective by
default; it is a frozen-representation probe (see `evaluate_checkpoint`).
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .classify import fit_classifier, patient_representation
from .config import TrainConfig
from .corpus import CorpusStats, compute_idf, split, subsample_negatives
from .embeddings import Vocab, make_provider
from .encoder import StructuredEncoder
from .evaluate import EvalReport, auc_roc
from .frames import ConceptLexicon, SemanticFrame, build_frames
from .model import FeatureExtractor, FusionModel, NoteFeatures

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NFCKPT01"


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------


def l2_penalty(params) -> Tensor:
    """Sum of squared entries over an explicit parameter list."""
    total = Tensor(0.0)
    for p in params:
        total = total + (p * p).sum()
    return total


def contrastive_loss(score_pos, score_neg, sentence_params=(), lambda_l2: float = 0.0,
                     margin: float = 1.0) -> Tensor:
    """Hinge sum over pair scores plus the L2 term on sentence-module params.

    score_pos[j] and score_neg[j] are the salience scores of the j-th
    true pair and its corrupted partner; each unsatisfied margin
    contributes max(0, margin - pos + neg).
    """
    pos = _stack_scores(score_pos)
    neg = _stack_scores(score_neg)
    if pos.shape != neg.shape:
        raise ValueError(f"pair count mismatch: {pos.shape} vs {neg.shape}")
    hinge = ad.relu(neg - pos + margin).sum()
    if lambda_l2 > 0.0 and sentence_params:
        hinge = hinge + lambda_l2 * l2_penalty(sentence_params)
    return hinge


def _stack_scores(scores) -> Tensor:
    if isinstance(scores, Tensor):
        return scores
    return ad.concat([s.reshape(1) for s in scores])


def smooth_l1(c: Tensor, target: np.ndarray) -> Tensor:
    """Per-coordinate Huber between the note vector and its fixed target."""
    target = np.asarray(target, dtype=np.float64)
    if c.shape != target.shape:
        raise ValueError(f"dimension mismatch: note vector {c.shape}, target {target.shape}")
    return ad.huber_sum(c - Tensor(target))


class SmoothL1TargetProjector:
    """Fixed seeded random projections of flattened sentence-vector matrices.

    One non-trainable matrix per note length D, entries N(0, 1/(D*emb_dim)),
    cached so the target of a given note never moves during training.
    """

    def __init__(self, emb_dim: int, out_dim: int, seed: int):
        self.emb_dim = int(emb_dim)
        self.out_dim = int(out_dim)
        self.seed = int(seed)
        self._cache: dict[int, np.ndarray] = {}

    def _matrix(self, d: int) -> np.ndarray:
        mat = self._cache.get(d)
        if mat is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 7919, d]))
            mat = rng.normal(0.0, np.sqrt(1.0 / (d * self.emb_dim)),
                             size=(self.out_dim, d * self.emb_dim))
            self._cache[d] = mat
        return mat

    def target(self, base_matrix: np.ndarray) -> np.ndarray:
        base = np.asarray(base_matrix, dtype=np.float64)
        return self._matrix(base.shape[0]) @ base.ravel()


# ----------------------------------------------------------------------
# negative sampling
# ----------------------------------------------------------------------


class NegativeFramePool:
    """Training frames indexed by type-sequence length for corruption draws."""

    def __init__(self, frames):
        self.frames = list(frames)
        if not self.frames:
            raise ValueError("negative pool is empty")
        self.by_length: dict[int, list[SemanticFrame]] = {}
        for f in self.frames:
            self.by_length.setdefault(len(f.sem_types), []).append(f)
        self.fallback_draws = 0

    def sample(self, frame: SemanticFrame, rng: np.random.Generator) -> SemanticFrame:
        """Uniform same-length draw, never equal to the true frame.

        When no same-length candidate differs from `frame`, the nearest
        length is used and its type sequence truncated or padded with
        "O" (counted in `fallback_draws`).
        """
        length = len(frame.sem_types)
        candidates = [f for f in self.by_length.get(length, ()) if f != frame]
        if candidates:
            return candidates[int(rng.integers(len(candidates)))]
        self.fallback_draws += 1
        logger.debug("no same-length negative for length %d; using nearest length", length)
        for other in sorted(self.by_length, key=lambda l: (abs(l - length), l)):
            pool = [f for f in self.by_length[other] if f != frame]
            if not pool:
                continue
            donor = pool[int(rng.integers(len(pool)))]
            types = list(donor.sem_types[:length])
            types += ["O"] * (length - len(types))
            adjusted = SemanticFrame(category=donor.category, subcategory=donor.subcategory,
                                     sem_tokens=list(donor.sem_tokens), sem_types=types)
            if adjusted != frame:
                return adjusted
        raise ValueError("negative pool exhausted: every candidate equals the true frame")


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ----------------------------------------------------------------------
# training pipeline
# ----------------------------------------------------------------------


def build_vocabs(frames_iter) -> dict[str, Vocab]:
    tokens = {"sc": [], "tok": [], "type": []}
    for frame in frames_iter:
        for z in ("sc", "tok", "type"):
            tokens[z].extend(StructuredEncoder.component_tokens(frame, z))
    return {z: Vocab(toks) for z, toks in tokens.items()}


@dataclass
class TrainResult:
    model: FusionModel
    config: TrainConfig
    stats: CorpusStats
    vocabs: dict[str, Vocab] | None
    splits: dict[str, list[str]]
    log: list[dict]
    extractor: FeatureExtractor
    checkpoint_path: Path | None = None
    log_path: Path | None = None


@dataclass
class _NoteBatchItem:
    features: NoteFeatures
    frames: list[SemanticFrame] | None
    target: np.ndarray | None
    label: bool | None


def _note_losses(model: FusionModel, item: _NoteBatchItem, pool, config: TrainConfig,
                 rng, train: bool):
    """(hinge, smooth, supervised) scalar Tensors for one note; None where off."""
    fwd = model.encode_note(item.features, train=train, rng=rng)
    hinge = smooth = supervised = None
    if config.ablation == "none":
        pos, neg = [], []
        for i in range(item.features.n_sentences):
            for _ in range(config.negatives_per_pair):
                neg_frame = pool.sample(item.frames[i], rng)
                pos.append(fwd.alpha[i])
                neg.append(model.corrupted_score(fwd, i, neg_frame))
        hinge = contrastive_loss(pos, neg, margin=config.margin)
    if config.ablation != "no_unstruct":
        smooth = smooth_l1(fwd.c, item.target)
    needs_head = config.ablation == "no_unstruct" or config.end_to_end
    if needs_head and item.label is not None:
        supervised = ad.bce_with_logits(model.note_logit(fwd.c).reshape(1),
                                        np.asarray([float(item.label)]))
    return hinge, smooth, supervised


def train(records, config: TrainConfig, lexicon: ConceptLexicon | None = None,
          out_dir=None, data_paths: dict | None = None, inventory=None) -> TrainResult:
    """Run the full representation-learning pipeline on a loaded corpus.

    Subsamples negatives when configured, splits by patient, fits idf and
    frame vocabularies on the train split only, then optimizes the joint
    loss with Adam. Deterministic for a given config: all randomness
    flows from config.seed. Writes checkpoint.bin and training_log.jsonl
    under `out_dir` when given.
    """
    if config.target_neg:
        records = subsample_negatives(records, config.horizon, config.target_neg, config.seed)
    train_recs, test_recs, val_recs = split(records, seed=config.seed)
    splits = {
        "train": [r.patient_id for r in train_recs],
        "test": [r.patient_id for r in test_recs],
        "validation": [r.patient_id for r in val_recs],
    }
    train_notes = [note for rec in train_recs for note in rec.notes]
    if not train_notes:
        raise ValueError("training split is empty")
    stats = compute_idf(train_notes)

    need_frames = config.ablation != "no_struct"
    vocabs = None
    frames_by_note: dict[str, list[SemanticFrame]] = {}
    if need_frames:
        if lexicon is None:
            lexicon = ConceptLexicon.default()
        for note in train_notes:
            frames_by_note[note.note_id] = build_frames(note, lexicon, inventory)
        vocabs = build_vocabs(f for frames in frames_by_note.values() for f in frames)

    provider = make_provider(config.provider_backend, config.emb_dim, config.seed,
                             config.vectors_file)
    model = FusionModel(config, vocabs)
    extractor = FeatureExtractor(config, provider, stats, lexicon, inventory)
    projector = SmoothL1TargetProjector(provider.dim, 2 * config.d_s, config.seed)

    items = []
    label_by_pid = {r.patient_id: r.label(config.horizon) for r in train_recs}
    for rec in train_recs:
        for note in rec.notes:
            feats = extractor.extract(note, frames_by_note.get(note.note_id))
            target = projector.target(feats.base_matrix) if feats.base_matrix is not None else None
            items.append(_NoteBatchItem(
                features=feats,
                frames=frames_by_note.get(note.note_id),
                target=target,
                label=label_by_pid[rec.patient_id],
            ))

    pool = None
    if config.ablation == "none":
        pool = NegativeFramePool([f for frames in frames_by_note.values() for f in frames])

    optimizer = Adam(model.params.values(), lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 202]))
    log: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        sums = {"L_cmm": 0.0, "L_smooth": 0.0, "total": 0.0}
        for start in range(0, len(order), config.batch_size):
            batch = [items[i] for i in order[start : start + config.batch_size]]
            model.zero_grad()
            terms = []
            for item in batch:
                hinge, smooth, supervised = _note_losses(model, item, pool, config, rng, train=True)
                for term, key in ((hinge, "L_cmm"), (smooth, "L_smooth")):
                    if term is not None:
                        sums[key] += term.item()
                        terms.append(term)
                if supervised is not None:
                    terms.append(supervised)
            if not terms:  # e.g. supervised ablation on unlabeled records
                continue
            total = terms[0]
            for term in terms[1:]:
                total = total + term
            total = total / len(batch)  # per-note mean keeps step sizes batch-size-free
            if config.lambda_l2 > 0.0:
                total = total + config.lambda_l2 * l2_penalty(model.sentence_params())
            sums["total"] += total.item() * len(batch)
            if not np.isfinite(total.item()):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch starting at {start} (loss={total.item()!r})"
                )
            total.backward()
            optimizer.step()
        n = len(items)
        entry = {"epoch": epoch, "L_cmm": sums["L_cmm"] / n,
                 "L_smooth": sums["L_smooth"] / n, "total": sums["total"] / n}
        log.append(entry)
        logger.info("epoch %d: total %.4f (cmm %.4f, smooth %.4f)",
                    epoch, entry["total"], entry["L_cmm"], entry["L_smooth"])

    result = TrainResult(model=model, config=config, stats=stats, vocabs=vocabs,
                         splits=splits, log=log, extractor=extractor)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = out / "checkpoint.bin"
        save_checkpoint(result.checkpoint_path, model, config, stats, vocabs, splits,
                        data_paths or {}, provider.spec())
        result.log_path = out / "training_log.jsonl"
        with open(result.log_path, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return result


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------


def save_checkpoint(path, model: FusionModel, config: TrainConfig, stats: CorpusStats,
                    vocabs, splits, data_paths: dict, provider_spec: dict):
    """Versioned binary dump: JSON header + raw float64 buffers.

    Byte-for-byte deterministic for identical state (no timestamps or
    archive metadata), which the determinism acceptance check relies on.
    """
    arrays = model.state_arrays()
    header = {
        "format_version": 1,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "idf": {"values": dict(sorted(stats.idf.items())), "document_count": stats.document_count},
        "vocabs": {z: v.to_list() for z, v in vocabs.items()} if vocabs else None,
        "splits": splits,
        "data_paths": {k: (str(v) if v is not None else None) for k, v in data_paths.items()},
        "provider": provider_spec,
        "params": [{"name": name, "shape": list(arrays[name].shape)} for name in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack(">Q", len(blob)))
        fh.write(blob)
        for name in arrays:
            fh.write(np.ascontiguousarray(arrays[name], dtype=np.float64).tobytes())


@dataclass
class CheckpointBundle:
    config: TrainConfig
    model: FusionModel
    stats: CorpusStats
    vocabs: dict[str, Vocab] | None
    splits: dict[str, list[str]]
    data_paths: dict
    provider_spec: dict

    def make_extractor(self, lexicon=None, inventory=None) -> FeatureExtractor:
        provider = make_provider(
            self.provider_spec["backend"], self.provider_spec["dim"],
            self.provider_spec["seed"], self.provider_spec.get("vectors_path"),
        )
        return FeatureExtractor(self.config, provider, self.stats, lexicon, inventory)


def load_checkpoint(path) -> CheckpointBundle:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack(">Q", raw[offset : offset + 8])
    offset += 8
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    if header["format_version"] != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {header['format_version']}")

    config = TrainConfig.from_dict(header["config"])
    vocabs = None
    if header["vocabs"] is not None:
        vocabs = {z: Vocab.from_list(tokens) for z, tokens in header["vocabs"].items()}
    stats = CorpusStats(
        idf=dict(header["idf"]["values"]),
        document_count=int(header["idf"]["document_count"]),
        vocabulary=sorted(header["idf"]["values"]),
    )
    arrays = {}
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        buf = np.frombuffer(raw, dtype=np.float64, count=count, offset=offset).reshape(shape)
        arrays[spec["name"]] = buf.copy()
        offset += count * 8
    model = FusionModel(config, vocabs)
    model.load_state(arrays)
    return CheckpointBundle(config=config, model=model, stats=stats, vocabs=vocabs,
                            splits=header["splits"], data_paths=header["data_paths"],
                            provider_spec=header["provider"])


# ----------------------------------------------------------------------
# evaluation pipeline
# ----------------------------------------------------------------------


def patient_vectors(model: FusionModel, extractor: FeatureExtractor, records) -> np.ndarray:
    """Frozen patient representations: mean of eval-mode note vectors."""
    reps = []
    for rec in records:
        reps.append(patient_representation(
            [model.representation(extractor.extract(note)) for note in rec.notes]
        ))
    return np.stack(reps)


def evaluate_split(model: FusionModel, extractor: FeatureExtractor, train_records,
                   eval_records, horizon: str, classifier_l2: float, seed: int,
                   config_hash: str) -> EvalReport:
    """Fit the frozen-representation probe on train, report AUC on eval."""
    train_records = [r for r in train_records if r.label(horizon) is not None]
    eval_records = [r for r in eval_records if r.label(horizon) is not None]
    if not train_records or not eval_records:
        raise ValueError(f"no labeled records for horizon {horizon}")
    x_train = patient_vectors(model, extractor, train_records)
    x_eval = patient_vectors(model, extractor, eval_records)
    mean = x_train.mean(axis=0)
    std = np.maximum(x_train.std(axis=0), 1e-8)
    clf = fit_classifier((x_train - mean) / std,
                         [r.label(horizon) for r in train_records],
                         horizon=horizon, l2=classifier_l2)
    scores = clf.predict_proba((x_eval - mean) / std)
    labels = np.asarray([r.label(horizon) for r in eval_records], dtype=bool)
    return EvalReport(
        horizon=horizon,
        auc_roc=auc_roc(scores, labels),
        n_pos=int(labels.sum()),
        n_neg=int((~labels).sum()),
        seed=seed,
        config_hash=config_hash,
    )


def evaluate_records(bundle: CheckpointBundle, records, horizon: str,
                     lexicon=None, inventory=None, split_name: str = "test") -> EvalReport:
    """Evaluate a checkpoint against loaded records using its stored splits."""
    by_id = {r.patient_id: r for r in records}
    missing = [pid for name in ("train", split_name) for pid in bundle.splits[name]
               if pid not in by_id]
    if missing:
        raise ValueError(
            f"records do not match checkpoint splits; {len(missing)} patient id(s) missing "
            f"(first: {missing[0]})"
        )
    extractor = bundle.make_extractor(lexicon, inventory)
    train_records = [by_id[pid] for pid in bundle.splits["train"]]
    eval_records = [by_id[pid] for pid in bundle.splits[split_name]]
    return evaluate_split(bundle.model, extractor, train_records, eval_records, horizon,
                          bundle.config.classifier_l2, bundle.config.seed,
                          bundle.config.config_hash())
