from typing import ClassVar

from pydantic import BaseModel, Field


class EvalRow(BaseModel):
    image: str
    psnr_db: float = Field(..., ge=0)
    ssim: float = Field(..., ge=-1, le=1)
    code_accuracy: float = Field(..., ge=0, le=1)
    hazy_psnr_db: float = Field(..., ge=0, description="PSNR of the untouched hazy input")


class EvalReport(BaseModel):
    iters: int
    mode: str
    seed: int
    checkpoint_id: str
    rows: list[EvalRow] = Field(default_factory=list)
    mean_psnr_db: float = 0.0
    mean_ssim: float = 0.0
    mean_code_accuracy: float = 0.0
    mean_hazy_psnr_db: float = 0.0
    critic_auc: float | None = None

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("image", "iters", "mode", "seed", "psnr_db", "ssim", "code_accuracy", "hazy_psnr_db")
