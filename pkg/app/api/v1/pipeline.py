from pathlib import Path

from fastapi import APIRouter, Depends

from app.api.errors import http_error
from app.dependencies import get_run_directory
from app.exceptions import SlamError
from app.schemas.pipeline import PartitionResponse, PipelineConfig, PipelineReport
from app.services.pipeline_service import PipelineService

router = APIRouter()


@router.post("/run", response_model=PipelineReport)
def run_pipeline(config: PipelineConfig, run_dir: Path = Depends(get_run_directory)):
    """Run every stage; artifacts go to a fresh directory under OUTPUT_DIR"""
    try:
        return PipelineService.run_pipeline(config, run_dir)
    except SlamError as exc:
        raise http_error(exc)


@router.post("/partition", response_model=PartitionResponse)
def run_partition(config: PipelineConfig):
    """Motion analysis and submap partition only"""
    try:
        return PipelineService.run_partition(config)
    except SlamError as exc:
        raise http_error(exc)
