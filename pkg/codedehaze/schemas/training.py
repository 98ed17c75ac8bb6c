from typing import Literal

from pydantic import BaseModel, Field

Stage = Literal["vqgan", "predictor", "critic"]


class StepMetrics(BaseModel):
    """Scalar loss terms of one optimisation step."""
    stage: Stage
    step: int = Field(..., ge=0)
    terms: dict[str, float] = Field(default_factory=dict)

    def csv_row(self, columns: list[str]) -> list[str]:
        return [self.stage, str(self.step)] + [repr(self.terms.get(name, float("nan"))) for name in columns]
