"""File helpers shared by the stages: atomic writes and delimited tables."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingArtifactError


def format_float(x: float) -> str:
    """Shortest repr that round-trips; ``nan`` for undefined values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0.0:
        return "0.0"
    return repr(x)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(
    path: str | os.PathLike,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    delimiter: str = ",",
) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_table(path: str | os.PathLike, delimiter: str = ",") -> list[dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"required file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh, delimiter=delimiter))


def require(path: str | os.PathLike, producer: str) -> Path:
    """Fail with a message naming the stage that produces ``path``."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run `accnet {producer}` first"
        )
    return path
