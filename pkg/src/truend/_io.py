"""Deterministic text/CSV formatting shared by every writer."""

import math
from pathlib import Path


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if hasattr(x, "item"):
        return fmt(x.item())
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_kv(path, items) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(kv_text(items))
    return path


def kv_text(items) -> str:
    if hasattr(items, "items"):
        items = items.items()
    return "".join(f"{k}={fmt(v)}\n" for k, v in items)
