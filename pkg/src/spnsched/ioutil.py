"""Small shared I/O helpers: float formatting, config digests, CSV writers.

Everything written to disk must be a pure function of the inputs, so these
helpers avoid timestamps, locale-dependent formatting and dict-ordering
surprises.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "fmt",
    "canonical_json",
    "config_digest",
    "version_string",
    "write_stats_csv",
    "read_stats_csv",
    "write_json",
    "STATS_COLUMNS",
]

#: Column schema of every study's stats.csv.
STATS_COLUMNS = ("t", "policy", "mean_total", "se_total", "mean_sumsq")


def fmt(x: float) -> str:
    """Render a float with 17 significant digits (lossless round trip)."""
    return "%.17g" % x


def _jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays to plain Python for stable JSON."""
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed separators; input order never
    leaks into the bytes."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=True)


def config_digest(config: dict) -> str:
    """Hex SHA-256 of the canonical JSON form of a configuration dict."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


_VERSION_CACHE: str | None = None


def version_string() -> str:
    """A git-describe-style identifier of the running code, no timestamps.

    Falls back to the static package version when not running from a git
    checkout (e.g. an installed wheel).
    """
    global _VERSION_CACHE
    if _VERSION_CACHE is None:
        root = Path(__file__).resolve().parent
        try:
            out = subprocess.run(
                ["git", "describe", "--always", "--dirty", "--tags"],
                cwd=root, capture_output=True, text=True, timeout=10,
            )
            desc = out.stdout.strip()
        except (OSError, subprocess.SubprocessError):
            desc = ""
        if desc:
            _VERSION_CACHE = f"spnsched-{desc}"
        else:
            from spnsched import __version__
            _VERSION_CACHE = f"spnsched-{__version__}"
    return _VERSION_CACHE


def write_stats_csv(path: str | Path, digest: str,
                    rows: Iterable[Sequence]) -> None:
    """Write a stats.csv: digest comment line, header, then data rows.

    Each row is (t, policy, mean_total, se_total, mean_sumsq); floats go out
    with 17 significant digits so reruns are byte-comparable.
    """
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(f"# config_digest={digest}\n")
        fh.write(",".join(STATS_COLUMNS) + "\n")
        for t, policy, mean_total, se_total, mean_sumsq in rows:
            fh.write(f"{int(t)},{policy},{fmt(mean_total)},{fmt(se_total)},"
                     f"{fmt(mean_sumsq)}\n")


def read_stats_csv(path: str | Path) -> tuple[str, list[dict]]:
    """Parse a stats.csv back into (digest, row dicts). Inverse of the writer;
    used by tests, not by the hot paths."""
    path = Path(path)
    digest = ""
    rows: list[dict] = []
    with path.open() as fh:
        first = fh.readline().strip()
        if first.startswith("# config_digest="):
            digest = first.split("=", 1)[1]
            header = fh.readline().strip().split(",")
        else:
            header = first.split(",")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            row: dict[str, Any] = {}
            for name, value in zip(header, parts):
                if name == "t":
                    row[name] = int(value)
                elif name == "policy":
                    row[name] = value
                else:
                    row[name] = float(value)
            rows.append(row)
    return digest, rows


def write_json(path: str | Path, obj: dict) -> None:
    """Write a summary/config JSON with sorted keys and a trailing newline."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")
