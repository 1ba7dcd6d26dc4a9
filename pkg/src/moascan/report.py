"""Serialization of scan and evaluation reports.

The machine-readable form is canonical JSON (sorted keys, fixed indentation,
trailing newline) so byte equality of two files means equal reports.
"""

from __future__ import annotations

import json
import os
import posixpath
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import MoascanError

if TYPE_CHECKING:
    from .catalog import Catalog
    from .pipeline import ScanReport

FORMATS = ("json", "table")


class ReportWriteError(MoascanError):
    pass


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_scan_table(report: "ScanReport", catalog: "Catalog | None" = None) -> str:
    """Vulnerability | File(s) | Status, grouped per vulnerability and status."""

    def name(v: str) -> str:
        return catalog[v].canonical_name if catalog is not None and v in catalog else v

    paths = {f.file_path for f in report.findings} | {t.task.file_path for t in report.traces}
    bases = [posixpath.basename(p) for p in paths]

    def show(p: str) -> str:
        b = posixpath.basename(p)
        return b if bases.count(b) <= 1 else p

    groups: dict[tuple[str, str], list[str]] = {}
    if report.traces:
        decided: dict[tuple[str, str], str] = {}
        for t in report.traces:
            key = (t.task.vuln_id, t.task.file_path)
            if t.verdict.decision == "present" or key not in decided:
                decided[key] = t.verdict.decision
        for (v, p), d in decided.items():
            groups.setdefault((v, "Confirmed" if d == "present" else "Rejected"), []).append(p)
        header = "Vulnerability | File(s) | Verdict"
    else:
        for f in report.findings:
            groups.setdefault((f.vuln_id, "Reported"), []).append(f.file_path)
        header = "Vulnerability | File(s) | Status"

    lines = [header]
    for (v, status), files in sorted(groups.items(), key=lambda kv: (kv[0][1] != "Confirmed", kv[0][1], name(kv[0][0]))):
        lines.append(f"{name(v)} | {', '.join(show(p) for p in sorted(files))} | {status}")
    if report.traces:
        s = report.as_dict()["summary"]
        lines.append("")
        lines.append(
            f"{s['confirmed_vulnerabilities']} confirmed / {s['rejected_vulnerabilities']} rejected "
            f"vulnerabilities ({s['confirmed_checks']} / {s['rejected_checks']} file checks)"
        )
    if report.unresolved_names:
        lines.append("")
        lines.append("Unmapped names: " + "; ".join(report.unresolved_names))
    return "\n".join(lines) + "\n"


def render_report(report: "ScanReport", fmt: str = "json", catalog: "Catalog | None" = None,
                  include_timings: bool = False) -> str:
    if fmt == "json":
        return dumps_canonical(report.as_dict(include_timings=include_timings))
    if fmt == "table":
        return render_scan_table(report, catalog)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_text(text: str, path: str | os.PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    return path


def write_report(report: "ScanReport", path: str | os.PathLike, fmt: str = "json",
                 catalog: "Catalog | None" = None, include_timings: bool = False) -> Path:
    return write_text(render_report(report, fmt, catalog, include_timings), path)


def read_json(path: str | os.PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise MoascanError(f"cannot read {path}: {exc}") from exc
