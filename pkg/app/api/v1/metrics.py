from fastapi import APIRouter, File, Form, HTTPException, UploadFile, status

from app.api.errors import http_error
from app.exceptions import SlamError
from app.models.trajectory import TrajectoryFormat
from app.schemas.metrics import MetricReport
from app.services.metrics_service import MetricsService
from app.utils.trajectory_io import parse_trajectory

router = APIRouter()


async def _read_upload(upload: UploadFile) -> str:
    try:
        return (await upload.read()).decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"{upload.filename} is not UTF-8 text",
        )


@router.post("/eval", response_model=MetricReport)
async def evaluate(
    estimate: UploadFile = File(...),
    reference: UploadFile = File(...),
    format: TrajectoryFormat = Form(TrajectoryFormat.TUM),
    stride: int = Form(1, ge=1),
):
    """ATE and drift of an uploaded estimate against an uploaded reference"""
    estimate_text = await _read_upload(estimate)
    reference_text = await _read_upload(reference)
    try:
        return MetricsService.evaluate(
            parse_trajectory(estimate_text, format),
            parse_trajectory(reference_text, format),
            stride=stride,
        )
    except SlamError as exc:
        raise http_error(exc)
