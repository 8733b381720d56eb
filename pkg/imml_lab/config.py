import json
import tomllib
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from imml_lab.errors import DimensionMismatch


class SynthConfig(BaseModel):
    n_train: int = Field(512, ge=1)
    n_val: int = Field(256, ge=1)
    n_test: int = Field(512, ge=1)
    dim_p: int = Field(16, ge=1)
    dim_a: int = Field(16, ge=1)
    num_classes: int = Field(4, ge=2)
    # share of the class-mean separation given to modality P; above 0.5 P is predominant
    predominance: float = Field(0.9, ge=0.0, le=1.0)
    separation: float = Field(3.0, gt=0.0)
    noise_ratio: float = Field(0.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _room_for_class_means(self) -> "SynthConfig":
        if min(self.dim_p, self.dim_a) < self.num_classes:
            raise DimensionMismatch(
                f"Feature dims ({self.dim_p}, {self.dim_a}) must be at least num_classes={self.num_classes}."
            )
        return self


class ModelConfig(BaseModel):
    hidden_dim: int = Field(64, ge=1)
    feature_dim_p: int = Field(32, ge=1)
    feature_dim_a: int = Field(32, ge=1)
    init_scale: float = Field(1.0, gt=0.0)


class LossConfig(BaseModel):
    tau: float = Field(0.5, gt=0.0)
    gamma1: float = Field(0.1, ge=0.0)
    gamma2: float = Field(1.0, ge=0.0)
    n_unpaired: int = Field(2, ge=1)
    beta_a: float = Field(0.1, gt=0.0)
    beta_b: float = Field(0.1, gt=0.0)
    proj_dim: int = Field(16, ge=1)
    task_loss: Literal["xent", "mse"] = "xent"


class FusionSpec(BaseModel):
    kind: Literal["concat", "weighted_sum"] = "concat"
    lambda_source: Literal["sampled", "fixed"] = "sampled"
    fixed_lambda: Optional[float] = Field(None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _fixed_needs_value(self) -> "FusionSpec":
        if self.lambda_source == "fixed" and self.fixed_lambda is None:
            raise ValueError("lambda_source 'fixed' requires fixed_lambda.")
        return self


class OptimizerConfig(BaseModel):
    learning_rate: float = Field(0.1, gt=0.0)
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(32, ge=1)


class SweepConfig(BaseModel):
    mask_ratios: List[float] = [0.0, 0.2, 0.4, 0.6, 0.8]
    noise_ratios: List[float] = [0.0, 1.0, 2.0, 5.0]
    seeds: List[int] = list(range(10))
    gamma1_grid: List[float] = [0.0, 0.01, 0.1]
    gamma2_grid: List[float] = [0.0, 0.1, 1.0]
    n_unpaired_grid: List[int] = [1, 2, 3, 4]
    eps_sample_sizes: List[int] = [4, 16, 64, 256, 1024]
    eps_repetitions: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _ratios_in_range(self) -> "SweepConfig":
        for ratio in self.mask_ratios:
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"Mask ratio {ratio} is outside [0, 1].")
        return self


class ExperimentConfig(BaseModel):
    name: str = "imml"
    data: SynthConfig = SynthConfig()
    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    fusion: FusionSpec = FusionSpec()
    optimizer: OptimizerConfig = OptimizerConfig()
    sweep: SweepConfig = SweepConfig()

    @model_validator(mode="after")
    def _cross_section(self) -> "ExperimentConfig":
        if self.loss.gamma2 > 0 and self.optimizer.batch_size <= self.loss.n_unpaired:
            raise ValueError(
                f"batch_size={self.optimizer.batch_size} must exceed n_unpaired={self.loss.n_unpaired}."
            )
        if self.fusion.kind == "weighted_sum" and self.model.feature_dim_p != self.model.feature_dim_a:
            raise DimensionMismatch(
                "weighted_sum fusion needs equal feature dims, got "
                f"{self.model.feature_dim_p} and {self.model.feature_dim_a}."
            )
        return self

    def updated(self, **sections) -> "ExperimentConfig":
        """Copy with selected fields of each section replaced, re-validated."""
        payload = self.model_dump()
        for section, fields in sections.items():
            if isinstance(payload.get(section), dict):
                payload[section].update(fields)
            else:
                payload[section] = fields
        return ExperimentConfig.model_validate(payload)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"Config file '{path}' does not exist.")
    if path.suffix == ".toml":
        with open(path, 'rb') as rf:
            payload = tomllib.load(rf)
    elif path.suffix == ".json":
        with open(path, 'r', encoding='utf-8') as rf:
            payload = json.load(rf)
    else:
        raise ValueError(f"Unsupported config format '{path.suffix}', expected .toml or .json.")
    return ExperimentConfig.model_validate(payload)
