from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from app.config import settings


class LMParams(BaseModel):
    max_iters: int = Field(settings.LM_MAX_ITERS, ge=1)
    lambda_init: float = Field(1e-4, gt=0)
    lambda_max: float = Field(1e10, gt=0)
    rel_tol: float = Field(1e-10, gt=0, description="relative cost change")
    step_tol: float = Field(1e-12, gt=0)
    jacobian_step: float = Field(1e-6, gt=0)
    robust: bool = True
    huber_threshold: Optional[float] = Field(None, gt=0)
    huber_floor: float = Field(settings.HUBER_FLOOR, gt=0)

    class Config:
        extra = "forbid"


class OptimizeReport(BaseModel):
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    termination: str = ""
    huber_threshold: Optional[float] = None
    residual_norms: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_monotone(self):
        if self.final_cost > self.initial_cost * (1 + 1e-12) + 1e-300:
            raise ValueError("final cost exceeds initial cost")
        return self
