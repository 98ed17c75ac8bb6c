from pydantic import BaseModel, Field


class DecodeStepRecord(BaseModel):
    t: int = Field(..., ge=1, description="Iteration index, 1-based")
    codes: list[list[int]] = Field(..., description="Sampled code sequence S, m x n")
    mask: list[list[int]] = Field(..., description="Next mask M_{t+1}, 1 = re-predict")
    mask_count: int = Field(..., ge=0)
    distances: list[list[float]] | None = Field(default=None, description="NN distances (nn mode only)")
    frame: str | None = Field(default=None, description="Decoded frame file name, if exported")


class DecodeTraceRecord(BaseModel):
    mode: str
    iters: int
    seed: int | None = None
    steps: list[DecodeStepRecord] = Field(default_factory=list)
