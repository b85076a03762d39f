"""Run manifests and deterministic text serialization."""

import csv
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

TIMING_KEYS = ("timing", "timings", "wall_time", "seconds", "created")


def fmt(x) -> str:
    """Round-trip text for a float (17 significant digits)."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return fmt(obj)
    return obj


def dumps(obj, indent: Optional[int] = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    enc = json.JSONEncoder(indent=indent)
    it = json.encoder._make_iterencode(
        {},
        enc.default,
        json.encoder.py_encode_basestring,
        " " * indent if indent else None,
        lambda v: f"{v:.17g}",
        enc.key_separator,
        enc.item_separator,
        False,
        False,
        True,
    )
    return "".join(it(_jsonable(obj), 0))


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def write_csv(path, header: List[str], rows: Iterable[Iterable[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def git_describe() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


@dataclass
class RunManifest:
    """What produced an artifact: command, resolved config, seed, version, timings."""

    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    timings: Dict[str, float] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        from . import __version__

        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "software": {"package": "mvgeostat", "version": __version__, "git": git_describe(), "python": sys.version.split()[0]},
            "outputs": list(self.outputs),
            "timings": dict(self.timings),
        }

    def write(self, path) -> None:
        write_json(path, self.to_dict())


def strip_timing(obj):
    """Copy of a JSON-like object without timing fields (for reproducibility checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj
