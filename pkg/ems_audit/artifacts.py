"""
Artifact file handling.

Every stage of the pipeline reads and writes its inputs and outputs through
this module. Writes are atomic: content goes to a temporary file in the
destination directory which is then renamed over the target, so an
interrupted run never leaves a half-written artifact for a later stage.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Tuple


def atomic_write_bytes(path: Path | str, data: bytes) -> Path:
    """Write ``data`` to ``path`` atomically.

    Args:
        path: Destination file. Parent directories are created when missing.
        data: Raw bytes to write.

    Returns:
        The destination path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        # Leave no temp file behind on failure
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logging.debug(f"Wrote {len(data)} bytes to {path}")
    return path


def atomic_write_text(path: Path | str, text: str) -> Path:
    """Write UTF-8 text to ``path`` atomically."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path | str, data: Any) -> Path:
    """Write a JSON document with stable key order and indentation."""
    return atomic_write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def write_jsonl(path: Path | str, rows: Iterable[Dict[str, Any]]) -> Path:
    """Write one JSON object per line."""
    lines = [json.dumps(row, ensure_ascii=False) for row in rows]
    text = "\n".join(lines) + ("\n" if lines else "")
    return atomic_write_text(path, text)


def iter_jsonl(path: Path | str) -> Iterator[Tuple[int, str]]:
    """Yield ``(line_number, raw_line)`` for every non-blank line of a file.

    Line numbers are 1-based. An unreadable file raises ``OSError``.
    """
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if line.strip():
                yield line_number, line


def read_jsonl(path: Path | str) -> List[Dict[str, Any]]:
    """Read a JSONL file into a list of dicts.

    Raises:
        ValueError: If a line is not a JSON object.
    """
    rows = []
    for line_number, line in iter_jsonl(path):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: line {line_number}: invalid JSON ({e.msg})") from e
        if not isinstance(row, dict):
            raise ValueError(f"{path}: line {line_number}: expected a JSON object")
        rows.append(row)
    return rows
