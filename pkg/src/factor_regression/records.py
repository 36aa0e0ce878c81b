"""
Per-iteration records and the JSON-lines files that hold them. Each file
starts with a header line naming its format and version; every following
line is one record.
"""

import json
from pathlib import Path
from typing import List, Optional, Type, TypeVar

from pydantic import BaseModel  # pylint: disable=no-name-in-module

from factor_regression.errors import CheckpointError

TRACE_FORMAT = "factor-regression-trace"
TIMING_FORMAT = "factor-regression-timing"
RECORD_VERSION = 1

RecordT = TypeVar("RecordT", bound=BaseModel)


class TraceRecord(BaseModel):  # pylint: disable=too-few-public-methods
    """Deterministic summary of one MCMC iteration."""

    iteration: int
    k: int
    joint_log_likelihood: float
    test_log_likelihood: Optional[float] = None
    temperature: float
    births_proposed: int = 0
    births_accepted: int = 0
    features_born: int = 0
    features_died: int = 0


class TimingRecord(BaseModel):  # pylint: disable=too-few-public-methods
    """Time spent in one MCMC iteration. Kept apart from the trace."""

    iteration: int
    cpu_seconds: float
    wall_seconds: float


def _header(file_format: str) -> str:
    return json.dumps({"format": file_format, "version": RECORD_VERSION})


def append_record(path: Path, file_format: str, record: BaseModel) -> None:
    """Append a record, writing the header first when the file is new."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", encoding="utf-8") as handle:
        if fresh:
            handle.write(_header(file_format) + "\n")
        handle.write(json.dumps(record.dict()) + "\n")


def read_records(path: Path, file_format: str, model: Type[RecordT]) -> List[RecordT]:
    """Read every record of a JSON-lines file, checking its header."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Record file {path} does not exist")
    with path.open("r", encoding="utf-8") as handle:
        lines = [line for line in handle.read().splitlines() if line.strip()]
    if not lines:
        return []
    header = json.loads(lines[0])
    if header.get("format") != file_format:
        raise CheckpointError(f"{path} is not a {file_format} file")
    if header.get("version") != RECORD_VERSION:
        raise CheckpointError(
            f"{path} has version {header.get('version')}, expected {RECORD_VERSION}"
        )
    return [model.parse_obj(json.loads(line)) for line in lines[1:]]


def truncate_records(
    path: Path, file_format: str, model: Type[RecordT], count: int
) -> None:
    """
    Keep only the first count records. Used when resuming so that records
    written after the last checkpoint are not duplicated.
    """
    path = Path(path)
    if not path.exists():
        return
    records = read_records(path, file_format, model)[:count]
    with path.open("w", encoding="utf-8") as handle:
        handle.write(_header(file_format) + "\n")
        for record in records:
            handle.write(json.dumps(record.dict()) + "\n")
