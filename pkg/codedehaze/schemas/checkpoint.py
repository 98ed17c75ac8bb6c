from typing import Any

from pydantic import BaseModel, Field

FORMAT_VERSION = 1


class TensorEntry(BaseModel):
    name: str = Field(..., description="Canonical tensor name")
    dtype: str = Field(..., description="Little-endian numpy dtype string, e.g. '<f4'")
    shape: list[int]


class CheckpointMetadata(BaseModel):
    format_version: int = FORMAT_VERSION
    stage: str
    step: int = 0
    settings: dict[str, Any]
    tensors: list[TensorEntry] = Field(default_factory=list)
    optimizers: dict[str, dict[str, Any]] = Field(default_factory=dict, description="Optimizer param_groups and step counters")
    rng: dict[str, Any] = Field(default_factory=dict, description="Generator state entries")
