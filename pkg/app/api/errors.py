from fastapi import HTTPException, status

from app.exceptions import CLIENT_ERRORS, SlamError, StageError


def status_for(exc: SlamError) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, CLIENT_ERRORS):
        return status.HTTP_400_BAD_REQUEST
    return status.HTTP_422_UNPROCESSABLE_ENTITY


def http_error(exc: SlamError) -> HTTPException:
    """Translate a backend error into the HTTP error a router raises"""
    return HTTPException(
        status_code=status_for(exc),
        detail={"message": exc.message, "stage": exc.stage, "error": type(exc).__name__},
    )
