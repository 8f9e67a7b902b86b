"""Hierarchical fusion of clinical note text with structured semantic frames.

The library learns note-level representations by aligning each sentence
with its semantic frame (note category/section, concept tokens, per-word
type tags) through gated word pooling, self-similarity features,
ConvNet frame codes, and bidirectional trilinear attention, trained
label-free with a contrastive max-margin plus smooth-L1 objective.
Downstream post-discharge mortality prediction is a frozen-representation
logistic probe evaluated with exact rank-statistic AUC-ROC.
"""

from .classify import MortalityClassifier, fit_classifier, patient_representation
from .config import TrainConfig
from .corpus import (
    CorpusStats,
    Note,
    NoteCategory,
    PatientRecord,
    Sentence,
    compute_idf,
    load_notes,
    split,
    split_sentences,
    subsample_negatives,
)
from .embeddings import (
    FrameEmbeddingTable,
    HashEmbeddingProvider,
    TableEmbeddingProvider,
    Vocab,
    make_provider,
)
from .evaluate import EvalReport, auc_roc
from .frames import (
    ConceptLexicon,
    SemanticFrame,
    build_frames,
    detect_sections,
    export_frames_jsonl,
    load_section_inventory,
    tag_sentence,
)
from .model import FeatureExtractor, FusionModel
from .synth import SynthConfig, SyntheticCorpus, generate_synthetic
from .training import (
    NegativeFramePool,
    contrastive_loss,
    evaluate_records,
    load_checkpoint,
    smooth_l1,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ConceptLexicon",
    "CorpusStats",
    "EvalReport",
    "FeatureExtractor",
    "FrameEmbeddingTable",
    "FusionModel",
    "HashEmbeddingProvider",
    "MortalityClassifier",
    "NegativeFramePool",
    "Note",
    "NoteCategory",
    "PatientRecord",
    "SemanticFrame",
    "Sentence",
    "SynthConfig",
    "SyntheticCorpus",
    "TableEmbeddingProvider",
    "TrainConfig",
    "Vocab",
    "auc_roc",
    "build_frames",
    "compute_idf",
    "contrastive_loss",
    "detect_sections",
    "evaluate_records",
    "export_frames_jsonl",
    "fit_classifier",
    "generate_synthetic",
    "load_checkpoint",
    "load_notes",
    "load_section_inventory",
    "make_provider",
    "patient_representation",
    "smooth_l1",
    "split",
    "split_sentences",
    "subsample_negatives",
    "tag_sentence",
    "train",
]
