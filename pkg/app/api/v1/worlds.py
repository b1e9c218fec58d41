from pathlib import Path
from typing import Dict, List

from fastapi import APIRouter, Depends, HTTPException, status

from app.api.errors import http_error
from app.dependencies import get_run_directory
from app.exceptions import SlamError
from app.models.pipeline import PipelineMode
from app.schemas.pipeline import GenerateResponse, PipelineConfig
from app.schemas.world import PRESETS
from app.services.pipeline_service import PipelineService

router = APIRouter()


@router.get("/presets", response_model=Dict[str, List[dict]])
def list_presets():
    """Built-in world presets and their primitives"""
    return {name: [p.model_dump() for p in primitives] for name, primitives in PRESETS.items()}


@router.post("/generate", response_model=GenerateResponse, status_code=status.HTTP_201_CREATED)
def generate_world(config: PipelineConfig, run_dir: Path = Depends(get_run_directory)):
    """Write a synthetic world as replay inputs"""
    if config.mode != PipelineMode.SYNTHETIC:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="worlds are generated from a synthetic configuration",
        )
    try:
        return PipelineService.generate_replay(config, run_dir)
    except SlamError as exc:
        raise http_error(exc)
