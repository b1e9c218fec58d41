#!/usr/bin/env python3
"""
Startup script for the submap SLAM backend API
"""

import sys
from pathlib import Path


def check_requirements():
    """Check if all requirements are installed"""
    print("Checking requirements...")
    try:
        import fastapi  # noqa: F401
        import uvicorn  # noqa: F401
        import numpy  # noqa: F401
        import scipy  # noqa: F401
        import pandas  # noqa: F401
        import pydantic_settings  # noqa: F401
        print("✓ All required packages are installed")
        return True
    except ImportError as e:
        print(f"✗ Missing package: {e}")
        print("Please run: pip install -r requirements.txt")
        return False


def check_env_file():
    """An .env file is optional; defaults apply without one"""
    if Path(".env").exists():
        print("✓ .env file found")
    else:
        print("• no .env file, using built-in defaults")
    return True


def check_output_dir():
    """Check that the run output directory is writable"""
    from app.config import settings

    output = Path(settings.OUTPUT_DIR)
    try:
        output.mkdir(parents=True, exist_ok=True)
        marker = output / ".write-test"
        marker.write_text("ok")
        marker.unlink()
        print(f"✓ Output directory {output} is writable")
        return True
    except OSError as e:
        print(f"✗ Output directory {output} is not writable: {e}")
        return False


def check_partition_smoke():
    """Partition the straight-line world to exercise the numeric stack"""
    from app.schemas.pipeline import PipelineConfig
    from app.services.pipeline_service import PipelineService

    config = PipelineConfig(world={"preset": "straight_line"})
    try:
        response = PipelineService.run_partition(config)
    except Exception as e:
        print(f"✗ Partition smoke test failed: {e}")
        return False
    print(f"✓ Partition smoke test: {response.n_frames} frames, {len(response.submaps)} submap(s)")
    return True


def start_server():
    """Start the FastAPI server"""
    from app.config import settings
    from app.utils.logging import configure_logging

    configure_logging()
    print(f"Starting {settings.APP_NAME} server...")
    print(f"Server will be available at: http://localhost:{settings.PORT}")
    print(f"API Documentation: http://localhost:{settings.PORT}/docs")
    print("Press Ctrl+C to stop the server")
    print("-" * 50)

    try:
        import uvicorn

        uvicorn.run(
            "app.main:app",
            host=settings.HOST,
            port=settings.PORT,
            reload=settings.DEBUG,
            log_level="info"
        )
    except KeyboardInterrupt:
        print("\nServer stopped by user")
    except Exception as e:
        print(f"Server error: {e}")


def main():
    """Main startup function"""
    print("=" * 50)
    print("Submap SLAM backend - Startup")
    print("=" * 50)

    checks = [
        check_requirements,
        check_env_file,
        check_output_dir,
        check_partition_smoke,
    ]

    for check in checks:
        if not check():
            print("\n❌ Startup failed. Please fix the issues above.")
            return 1
        print()

    print("✅ All checks passed! Starting server...")
    print()

    start_server()
    return 0


if __name__ == "__main__":
    sys.exit(main())
