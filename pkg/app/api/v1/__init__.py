from fastapi import APIRouter
from app.api.v1 import pipeline, metrics, worlds

api_router = APIRouter()

api_router.include_router(pipeline.router, prefix="/pipeline", tags=["Pipeline"])
api_router.include_router(metrics.router, prefix="/metrics", tags=["Metrics"])
api_router.include_router(worlds.router, prefix="/worlds", tags=["Worlds"])
