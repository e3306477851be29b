"""Run manifests and report envelopes.

Every report carries a manifest and a ``checksum``: the SHA-256 of the
canonical JSON of the report with the manifest timestamp and the checksum
itself removed. Two runs with equal manifests therefore produce equal
checksums.
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import io as _io
import json
from pathlib import Path
from typing import Mapping

from .. import __version__
from ..io import sha256_file


def build_manifest(command: str, config: Mapping, inputs: Mapping[str, str | Path | None], seed: int | None) -> dict:
    checksums = {}
    for role, path in sorted(inputs.items()):
        if path is None:
            continue
        p = Path(path)
        checksums[role] = {"file": p.name, "sha256": sha256_file(p)}
    return {
        "command": command,
        "config": dict(config),
        "inputs": checksums,
        "seed": seed,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def report_checksum(report: Mapping) -> str:
    stripped = copy.deepcopy(dict(report))
    stripped.pop("checksum", None)
    stripped.get("manifest", {}).pop("timestamp", None)
    return hashlib.sha256(canonical(stripped).encode("utf-8")).hexdigest()


def envelope(manifest: dict, results, warnings: list | None = None, **extra) -> dict:
    report = {"manifest": manifest, **extra, "results": results, "warnings": list(warnings or [])}
    report["checksum"] = report_checksum(report)
    return report


def dump_json(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def dump_csv(header: list[str], rows: list[list]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
