from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sprite_imputer.schemas.metrics import LossBreakdown, MetricsReport, StepLoss

# P(drop 0), P(drop 1), P(drop 2)
DropProbabilities = Tuple[float, float, float]


class DropoutKind(str, Enum):
    NONE = "none"
    ORIGINAL = "original"
    CURRICULUM = "curriculum"
    CONSERVATIVE = "conservative"


DEFAULT_DROP_PROBABILITIES: Dict[DropoutKind, DropProbabilities] = {
    DropoutKind.NONE: (1.0, 0.0, 0.0),
    DropoutKind.ORIGINAL: (1 / 3, 1 / 3, 1 / 3),
    # used for the second half of curriculum training
    DropoutKind.CURRICULUM: (1 / 3, 1 / 3, 1 / 3),
    DropoutKind.CONSERVATIVE: (0.6, 0.3, 0.1),
}


class DropoutStrategy(BaseModel):
    """How many source slots to zero out per training example."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: DropoutKind = DropoutKind.CONSERVATIVE
    probabilities: Optional[DropProbabilities] = Field(
        None, description="Override of P(drop 0/1/2); for curriculum, the post-curriculum distribution"
    )
    curriculum_end_fraction: float = Field(
        0.5, gt=0, le=1, description="Fraction of training covered by the three curriculum phases"
    )

    @model_validator(mode="before")
    @classmethod
    def accept_kind_name(cls, data: Any) -> Any:
        if isinstance(data, (str, DropoutKind)):
            return {"kind": data}
        return data

    @field_validator("probabilities")
    @classmethod
    def validate_probabilities(cls, value: Optional[DropProbabilities]) -> Optional[DropProbabilities]:
        if value is None:
            return value
        if any(p < 0 for p in value):
            raise ValueError("drop probabilities must be non-negative")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"drop probabilities must sum to 1, got {sum(value)}")
        return value

    @model_validator(mode="after")
    def validate_none_kind(self) -> "DropoutStrategy":
        if self.kind == DropoutKind.NONE and self.probabilities not in (None, (1.0, 0.0, 0.0)):
            raise ValueError("dropout kind 'none' never drops a source")
        return self

    @property
    def drop_probabilities(self) -> DropProbabilities:
        return self.probabilities or DEFAULT_DROP_PROBABILITIES[self.kind]


class ReplacementKind(str, Enum):
    ORIGINAL = "original"
    FORWARD_ONLY = "forward_only"


class ReplacementStrategy(BaseModel):
    """Which slots receive the forward output when building the cyclic inputs."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ReplacementKind = ReplacementKind.FORWARD_ONLY

    @model_validator(mode="before")
    @classmethod
    def accept_kind_name(cls, data: Any) -> Any:
        if isinstance(data, (str, ReplacementKind)):
            return {"kind": data}
        return data


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_reg: float = Field(100.0, ge=0)
    lambda_dmn: float = Field(10.0, ge=0)
    lambda_ssim: float = Field(10.0, ge=0)
    lambda_mcyc: float = Field(10.0, ge=0)


class TrainConfig(BaseModel):
    """All training hyperparameters. Defaults reproduce the full-scale protocol."""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    total_steps: int = Field(240_000, gt=0)
    batch_size: int = Field(4, ge=1)
    lr_initial: float = Field(1e-4, gt=0)
    adam_beta1: float = Field(0.5, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    eval_every: int = Field(1_000, ge=1)
    eval_subsample: int = Field(256, ge=1)
    eval_sources: int = Field(3, ge=1, le=3)
    eval_fid: bool = False
    checkpoint_every: Optional[int] = Field(None, ge=1)
    keep_checkpoints: int = Field(3, ge=1)
    log_every: int = Field(100, ge=1)
    dropout_strategy: DropoutStrategy = Field(default_factory=DropoutStrategy)
    replacement_strategy: ReplacementStrategy = Field(default_factory=ReplacementStrategy)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    width_multiplier: float = Field(1.0, gt=0)
    discriminator_width_multiplier: Optional[float] = Field(None, gt=0)
    seed: int = 0
    hue_augmentation: bool = True
    adversarial_on_forward_output: bool = False
    freeze_discriminator: bool = False
    final_evaluation: bool = True
    extractor: str = "random-projection"
    device: str = "cpu"

    @property
    def checkpoint_interval(self) -> int:
        return self.checkpoint_every or self.eval_every

    @property
    def discriminator_width(self) -> float:
        return self.discriminator_width_multiplier or self.width_multiplier


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: Path
    test_root: Optional[Path] = Field(None, description="Separate test directory; otherwise root is split")
    manifest: Optional[Path] = Field(None, description="Dataset manifest with split membership")
    split_ratio: float = Field(0.85, gt=0, le=1)
    split_seed: int = 0
    max_train: Optional[int] = Field(None, ge=1)
    max_test: Optional[int] = Field(None, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run_name: Optional[str] = None
    run_dir: Path = Path("runs/default")
    data: DataConfig
    train: TrainConfig = Field(default_factory=TrainConfig)

    @property
    def label(self) -> str:
        return self.run_name or self.run_dir.name


class EvalRecord(BaseModel):
    """One periodic evaluation during training."""
    step: int
    l1: float
    fid: Optional[float] = None
    per_target_l1: Dict[str, float] = Field(default_factory=dict)
    losses: Optional[LossBreakdown] = None


class TrainingRun(BaseModel):
    run_dir: Path
    best_step: int
    best_l1: float
    best_checkpoint: Optional[Path] = None
    evaluations: List[EvalRecord] = Field(default_factory=list)
    loss_history: List[StepLoss] = Field(default_factory=list)
    final_reports: List[MetricsReport] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_best(self) -> "TrainingRun":
        if self.evaluations and self.best_l1 != min(e.l1 for e in self.evaluations):
            raise ValueError("best_l1 must equal the minimum recorded evaluation L1")
        return self


# Ablation ladder: original CollaGAN widths and training choices, then each modification in turn
ABLATION_LADDER: Dict[str, Dict[str, Any]] = {
    "baseline": {
        "width_multiplier": 0.25,
        "dropout_strategy": {"kind": "original"},
        "replacement_strategy": {"kind": "original"},
    },
    "capacity": {
        "width_multiplier": 1.0,
        "dropout_strategy": {"kind": "original"},
        "replacement_strategy": {"kind": "original"},
    },
    "forward_only": {
        "width_multiplier": 1.0,
        "dropout_strategy": {"kind": "original"},
        "replacement_strategy": {"kind": "forward_only"},
    },
    "conservative": {
        "width_multiplier": 1.0,
        "dropout_strategy": {"kind": "conservative"},
        "replacement_strategy": {"kind": "forward_only"},
    },
}

ABLATION_ORDER: List[str] = list(ABLATION_LADDER)
