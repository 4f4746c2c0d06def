"""CSV and aligned-markdown writers with fixed column order."""

import csv
import math
from pathlib import Path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.4g}"
    return str(v)


def write_csv(rows, path, columns=None):
    if columns is None:
        columns = list(rows[0]) if rows else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def markdown_table(rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    line = lambda vals: "| " + " | ".join(v.ljust(w) for v, w in zip(vals, widths)) + " |"
    out = [line(columns), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(row) for row in cells]
    return "\n".join(out)


def write_outputs(rows, out_dir, stem, columns=None, title=None):
    """``<stem>.csv`` and ``<stem>.md`` in ``out_dir``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_csv(rows, out_dir / f"{stem}.csv", columns)
    md = markdown_table(rows, columns)
    if title:
        md = f"## {title}\n\n{md}"
    md_path = out_dir / f"{stem}.md"
    md_path.write_text(md + "\n")
    return csv_path, md_path
