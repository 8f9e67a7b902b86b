"""Run configuration: one flat TOML file for every open hyperparameter."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ABLATIONS = ("none", "no_struct", "no_unstruct")
BACKENDS = ("deterministic_hash", "pretrained_table")


@dataclass
class TrainConfig:
    """Hyperparameters of the embedding network and its training loop.

    `f_L` fixes the per-component frame-code width, so the sentence
    embedding dimension is d_s = 3*f_L and the gated-projection width is
    d_sa = d_s - d_ssm.
    """

    # embedding dimensions
    emb_dim: int = 50          # frozen word/sentence vector width
    frame_emb_dim: int = 50    # trainable frame-token table width
    # frame ConvNet (conv_layers includes the final fully-connected layer)
    f_L: int = 64
    conv_layers: int = 3
    conv_filters: tuple = (64, 64)
    kernel_sizes: tuple = (3,)
    strides: tuple = (1, 1)
    pad_len_n: int = 32
    # self-similarity module
    d_ssm: int = 64
    ssm_window_w: int = 1
    ssm_filters: int = 32
    ssm_kernel: int = 3
    dropout: float = 0.1
    # joint training
    margin: float = 1.0
    lambda_l2: float = 1e-4
    negatives_per_pair: int = 1
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 8
    seed: int = 0
    ablation: str = "none"
    horizon: str = "30d"
    end_to_end: bool = False
    # downstream probe / cohort
    classifier_l2: float = 1.0
    target_neg: int = 0        # 0 disables negative subsampling
    # embedding provider
    provider_backend: str = "deterministic_hash"
    vectors_file: str | None = None

    def __post_init__(self):
        self.conv_filters = tuple(int(x) for x in self.conv_filters)
        self.kernel_sizes = tuple(int(x) for x in self.kernel_sizes)
        self.strides = tuple(int(x) for x in self.strides)
        if self.conv_layers < 2:
            raise ValueError("conv_layers counts conv layers plus the final dense layer; need >= 2")
        if len(self.conv_filters) != self.conv_layers - 1:
            raise ValueError(
                f"conv_filters needs {self.conv_layers - 1} entries, got {len(self.conv_filters)}"
            )
        if len(self.kernel_sizes) != self.conv_layers - 2:
            raise ValueError(
                f"kernel_sizes needs {self.conv_layers - 2} entries (the last conv kernel "
                f"is full-span), got {len(self.kernel_sizes)}"
            )
        if len(self.strides) != self.conv_layers - 1:
            raise ValueError(f"strides needs {self.conv_layers - 1} entries, got {len(self.strides)}")
        if self.d_sa <= 0:
            raise ValueError(f"d_ssm={self.d_ssm} must be smaller than d_s={self.d_s}")
        if self.lambda_l2 < 0:
            raise ValueError("lambda_l2 must be non-negative")
        if self.negatives_per_pair < 1:
            raise ValueError("negatives_per_pair must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.horizon not in ("30d", "1y"):
            raise ValueError(f"horizon must be '30d' or '1y', got {self.horizon!r}")
        if self.provider_backend not in BACKENDS:
            raise ValueError(f"provider_backend must be one of {BACKENDS}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.target_neg < 0:
            raise ValueError("target_neg must be >= 0 (0 disables subsampling)")

    @property
    def d_s(self) -> int:
        return 3 * self.f_L

    @property
    def d_sa(self) -> int:
        return self.d_s - self.d_ssm

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("conv_filters", "kernel_sizes", "strides"):
            out[key] = list(out[key])
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs)


def write_config(config: TrainConfig, path):
    """Serialize as flat TOML (the format `from_file` reads back)."""
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            continue
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, (int, float)):
            rendered = repr(value)
        elif isinstance(value, list):
            rendered = "[" + ", ".join(repr(v) for v in value) + "]"
        else:
            rendered = json.dumps(value)
        lines.append(f"{key} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
