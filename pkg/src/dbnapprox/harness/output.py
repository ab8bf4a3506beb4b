"""CSV rendering and atomic file output."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile

CSV_VERSION = "dbnapprox-csv v1"


def fmt(value) -> str:
    """Shortest exact text for a cell: ``repr`` for floats, lowercase booleans."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(float(value))
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def render_csv(columns, rows, experiment: str, config_hash: str) -> str:
    """Version comment, header row, then one line per row; LF endings."""
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} experiment={experiment} config={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(path: str):
    """Parse a CSV written by :func:`render_csv`; returns ``(columns, rows as dicts)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    if not lines:
        return [], []
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, [dict(zip(columns, r)) for r in reader]


def write_all(out_dir: str, files: dict):
    """Write every file or none: stage all to temporaries, then rename each into place."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, os.path.join(out_dir, name)))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]
