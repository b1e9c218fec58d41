from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.config import settings


class RegistrationParams(BaseModel):
    tau_conf: float = Field(settings.TAU_CONF, gt=0, lt=1, description="confidence quantile")
    tau_in: float = Field(settings.TAU_IN, ge=0, le=1)
    anchor_window: int = Field(settings.ANCHOR_WINDOW, ge=1)
    alignment: Literal["anchor", "dense_overlap"] = Field(
        "anchor", description="dense_overlap registers every non-sky pixel of the whole overlap"
    )
    huber_delta_mode: Literal["mad", "fixed"] = "mad"
    huber_delta: Optional[float] = Field(None, gt=0, description="meters, used when the mode is fixed")
    max_iters: int = Field(settings.IRLS_MAX_ITERS, ge=1)
    min_valid: int = Field(10, ge=3)
    inlier_cut: float = Field(2.5, gt=0, description="multiples of the robust scale")
    workers: int = Field(settings.REGISTRATION_WORKERS, ge=1)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_fixed_delta(self):
        if self.huber_delta_mode == "fixed" and self.huber_delta is None:
            raise ValueError("huber_delta is required when huber_delta_mode is 'fixed'")
        return self
