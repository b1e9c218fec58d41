# dependencies.py
import uuid
from pathlib import Path

from fastapi import Depends

from app.config import Settings, get_settings


def get_output_root(settings: Settings = Depends(get_settings)) -> Path:
    root = Path(settings.OUTPUT_DIR)
    root.mkdir(parents=True, exist_ok=True)
    return root


def get_run_directory(root: Path = Depends(get_output_root)) -> Path:
    """
    A fresh directory under OUTPUT_DIR for one API run.
    """
    run_dir = root / f"run-{uuid.uuid4().hex[:12]}"
    run_dir.mkdir(parents=True)
    return run_dir
