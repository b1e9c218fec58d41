from pydantic import BaseModel, Field

from app.config import settings


class MotionParams(BaseModel):
    tau_flow: float = Field(settings.TAU_FLOW, gt=0, description="pixels")
    tau_static: float = Field(settings.TAU_STATIC, gt=0, lt=1)
    tau_turn: float = Field(settings.TAU_TURN, gt=0, description="pixels of mean |f_x|")
    smoothing_sigma: float = Field(settings.SMOOTHING_SIGMA, ge=0, description="frames")

    class Config:
        extra = "forbid"
