"""
Artifact files of the output directory.

Every stage writes its results here and the next stage reads them back, so
stages can run one at a time (--stage) or chained (full) with identical
files.

Functions:
    ensure_out_dir(out: str) -> str
        Create the output directory if needed

    write_json(out: str, key: str, data: dict) -> str
        Write an artifact atomically (tmp file + rename)

    write_csv(out: str, key: str, header: List[str], rows: List[list]) -> str
        Write a CSV artifact atomically

    read_json(out: str, key: str) -> dict
        Read an artifact; StageDependencyError names the stage that produces it

    merge_report(out: str, section: str, data: dict) -> str
        Add or replace one section of report.json

    record_timing(out: str, stage: str, seconds: float) -> str
        Per-stage wall time, kept out of report.json

Flow:
    1. A tmp file is created next to the target with mkstemp and registered
       in utils.temp_files
    2. Content is written through the file descriptor
    3. os.replace() moves it over the target and the tmp entry is dropped
       from temp_files; an interrupt in between removes the tmp file
"""

import csv
import json
import os
import tempfile
from typing import Any, Dict, List

import numpy as np

from gsdual.constants import ARTIFACTS
from gsdual.errors import StageDependencyError
from gsdual.utils import debug_print, temp_files

# Stage that writes each artifact, for error messages. report.json and
# timings.json are written by every stage and have no entry.
PRODUCERS = {
    "estimate": "estimate",
    "initial_data": "estimate",
    "initial_csv": "estimate",
    "design": "design",
    "solver_status": "design",
    "exploration": "explore",
    "exploration_data": "explore",
    "exploration_csv": "explore",
    "validation": "validate",
    "validation_csv": "validate",
}


def _to_builtin(value: Any) -> Any:
    """json.dumps fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"object of type {type(value).__name__} is not JSON serializable")


def ensure_out_dir(out: str) -> str:
    if not os.path.isdir(out):
        os.makedirs(out, exist_ok=True)
        debug_print(f"Created output directory: {out}")
    return out


def artifact_path(out: str, key: str) -> str:
    return os.path.join(out, ARTIFACTS[key])


def _atomic_write(path: str, text: str) -> str:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".gsdual-", suffix=".tmp", dir=directory)
    temp_files.append(tmp)
    debug_print(f"Writing {len(text)} bytes to {tmp}")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    finally:
        if tmp in temp_files:
            temp_files.remove(tmp)
    debug_print(f"Wrote artifact: {path}")
    return path


def dumps(data: Any) -> str:
    """Canonical JSON text (sorted keys, fixed indent) so reruns are byte-identical."""
    return json.dumps(data, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_json(out: str, key: str, data: Dict[str, Any]) -> str:
    ensure_out_dir(out)
    return _atomic_write(artifact_path(out, key), dumps(data))


def write_csv(out: str, key: str, header: List[str], rows: List[list]) -> str:
    ensure_out_dir(out)

    class _Buffer(list):
        def write(self, chunk: str) -> None:
            self.append(chunk)

    buffer = _Buffer()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return _atomic_write(artifact_path(out, key), "".join(buffer))


def _remedy(key: str, missing: bool) -> str:
    stage = PRODUCERS.get(key)
    if stage is None:
        return "every stage writes to it; rerun the stages in order, or 'full'"
    return f"run the '{stage}' stage first" if missing else f"rerun the '{stage}' stage"


def read_json(out: str, key: str) -> Dict[str, Any]:
    """
    Read one artifact.

    Raises:
        StageDependencyError: the file is missing or unreadable; the message
                              names the stage to run first
    """
    path = artifact_path(out, key)
    if not os.path.isfile(path):
        raise StageDependencyError(f"{path} not found; {_remedy(key, missing=True)}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise StageDependencyError(f"{path} is unreadable ({exc}); {_remedy(key, missing=False)}") from exc
    debug_print(f"Read artifact: {path}")
    return data


def merge_report(out: str, section: str, data: Any) -> str:
    """Replace `section` of report.json, creating the file if needed."""
    path = artifact_path(out, "report")
    report: Dict[str, Any] = {}
    if os.path.isfile(path):
        report = read_json(out, "report")
    report[section] = data
    return write_json(out, "report", report)


def record_timing(out: str, stage: str, seconds: float) -> str:
    path = artifact_path(out, "timings")
    timings: Dict[str, Any] = {}
    if os.path.isfile(path):
        try:
            timings = read_json(out, "timings")
        except StageDependencyError:
            timings = {}
    timings[stage] = round(float(seconds), 6)
    return write_json(out, "timings", timings)
