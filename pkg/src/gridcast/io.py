"""Placement files and result tables.

A placement file lists one Byzantine node per line as two integers ``i j``;
blank lines and text after ``#`` are ignored.  Tables are written twice: as
CSV with the parameter block repeated in leading columns, and as JSON lines
whose first record (``"type": "params"``) holds the same block.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .grid import Node


def parse_placement(text: str, side: int | None = None) -> list[Node]:
    nodes: list[Node] = []
    seen: set = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {raw.strip()!r}")
        try:
            node = (int(parts[0]), int(parts[1]))
        except ValueError:
            raise ValueError(f"line {lineno}: coordinates must be integers, got {raw.strip()!r}") from None
        if side is not None and not (0 <= node[0] < side and 0 <= node[1] < side):
            raise ValueError(f"line {lineno}: node {node} outside the {side}x{side} grid")
        if node in seen:
            raise ValueError(f"line {lineno}: node {node} listed twice")
        seen.add(node)
        nodes.append(node)
    return nodes


def read_placement(path, side: int | None = None) -> list[Node]:
    return parse_placement(Path(path).read_text(), side)


def format_placement(nodes, header: str | None = None) -> str:
    lines = [f"# {header}"] if header else []
    lines += [f"{i} {j}" for i, j in nodes]
    return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, separators=(",", ":"))
    return v


def write_table(out_dir, name: str, rows: list[dict], params: dict) -> tuple[Path, Path]:
    """Write ``name.csv`` and ``name.jsonl`` under ``out_dir``; return both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, jsonl_path = out / f"{name}.csv", out / f"{name}.jsonl"
    prefix = {f"param_{k}": _cell(v) for k, v in params.items()}
    columns: list[str] = list(prefix)
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({**prefix, **{k: _cell(v) for k, v in row.items()}})
    with jsonl_path.open("w") as fh:
        fh.write(json.dumps({"type": "params", **params}) + "\n")
        for row in rows:
            fh.write(json.dumps({"type": "row", **row}) + "\n")
    return csv_path, jsonl_path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
