from __future__ import annotations

import hashlib
from typing import Any

from fastapi.responses import JSONResponse

_SEVERITY = {
    "INPUT_INVALID": "low",
    "NOT_FOUND": "low",
    "SCHEMA_UNSUPPORTED": "low",
    "PERMISSION": "medium",
    "UPSTREAM": "medium",
    "TIMEOUT": "medium",
    "INTERNAL": "high",
}


def fingerprint(tool: str, stage: str, error_class: str, code: str, http_status: int) -> str:
    raw = f"{tool}|{stage}|{error_class}|{code}|{http_status}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def make_error(
    code: str,
    message: str,
    retryable: bool = False,
    details: dict[str, Any] | None = None,
    status_code: int = 400,
) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={
            "error": {
                "code": code,
                "message": message,
                "retryable": retryable,
                "details": details or {},
            }
        },
    )


class DetectorError(Exception):
    """Base of every error the detector raises on purpose.

    ``code`` is stable and machine-readable; ``details`` carries the values a
    caller needs to act on the failure (paths, indices, class names).
    """

    code = "DETECTOR_ERROR"
    error_class = "INTERNAL"
    http_status = 500
    retryable = False

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_structured(self, tool: str, stage: str, path: str = "") -> dict[str, Any]:
        return {
            "class": self.error_class,
            "code": self.code,
            "message": self.message,
            "retryable": self.retryable,
            "severity": _SEVERITY.get(self.error_class, "medium"),
            "where": {"tool": tool, "stage": stage, "path": path},
            "http_status": self.http_status,
            "fingerprint": fingerprint(tool, stage, self.error_class, self.code, self.http_status),
        }


class _InputError(DetectorError):
    error_class = "INPUT_INVALID"
    http_status = 400


# sensor


class PermissionDenied(DetectorError):
    code = "RAPL_PERMISSION_DENIED"
    error_class = "PERMISSION"
    http_status = 403


class IoError(DetectorError):
    code = "RAPL_READ_FAILED"
    error_class = "UPSTREAM"
    http_status = 502
    retryable = True


class ParseError(DetectorError):
    code = "RAPL_PARSE_FAILED"
    error_class = "UPSTREAM"
    http_status = 502


class SourceExhausted(DetectorError):
    code = "SOURCE_EXHAUSTED"
    error_class = "INPUT_INVALID"
    http_status = 400


class HookFailed(DetectorError):
    code = "HOOK_FAILED"
    error_class = "UPSTREAM"
    http_status = 502

    def __init__(self, message: str, index: int, partial: list[Any] | None = None, **details: Any) -> None:
        super().__init__(message, index=index, **details)
        self.index = index
        self.partial = list(partial or [])


class UnknownGenerator(_InputError):
    code = "UNKNOWN_GENERATOR"


class InputInvalid(_InputError):
    code = "INPUT_INVALID"


class InvalidConfig(_InputError):
    code = "CONFIG_INVALID"


# traceio


class FormatError(_InputError):
    code = "TRACE_FORMAT_INVALID"

    def __init__(self, message: str, line: int, **details: Any) -> None:
        super().__init__(message, line=line, **details)
        self.line = line


class EmptyClass(_InputError):
    code = "EMPTY_CLASS"


class UnknownAttackName(_InputError):
    code = "UNKNOWN_ATTACK_NAME"


class InsufficientTraces(_InputError):
    code = "INSUFFICIENT_TRACES"


class TooShort(_InputError):
    code = "TRACE_TOO_SHORT"


class DegenerateData(_InputError):
    code = "DEGENERATE_DATA"


class EmptyDataset(_InputError):
    code = "EMPTY_DATASET"


# nn / models


class ShapeMismatch(_InputError):
    code = "SHAPE_MISMATCH"


class ShapeUnderflow(ShapeMismatch):
    code = "SHAPE_UNDERFLOW"


class LengthMismatch(_InputError):
    code = "LENGTH_MISMATCH"


class DivergenceDetected(DetectorError):
    code = "TRAINING_DIVERGED"


class VersionMismatch(_InputError):
    code = "MODEL_VERSION_MISMATCH"


class CorruptModel(_InputError):
    code = "MODEL_CORRUPT"


class ModelNotFound(DetectorError):
    code = "MODEL_NOT_FOUND"
    error_class = "NOT_FOUND"
    http_status = 404


# baselines / metrics


class SingleClass(_InputError):
    code = "SINGLE_CLASS"


class NotBinary(_InputError):
    code = "NOT_BINARY"


class SingleClassTruth(_InputError):
    code = "SINGLE_CLASS_TRUTH"


# engine


class SinkError(DetectorError):
    code = "ALERT_SINK_FAILED"
    error_class = "UPSTREAM"
    http_status = 502


class CommandFailed(DetectorError):
    code = "COMMAND_FAILED"
    error_class = "UPSTREAM"
    http_status = 502


class SamplerFailed(DetectorError):
    code = "SAMPLER_FAILED"
