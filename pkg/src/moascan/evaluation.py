"""Score scan reports against ground truth."""

from __future__ import annotations

import hashlib
import json
import posixpath
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from .catalog import GroundTruth
from .errors import EvaluationError
from .moa import CheckTask

if TYPE_CHECKING:
    from .catalog import Catalog, VulnerabilityList
    from .pipeline import ScanReport

CLASSES = ("TP", "FP", "FN", "TN")
EVAL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0


@dataclass(frozen=True)
class EvalRow:
    vuln_id: str
    classification: str
    files: tuple[str, ...]
    detected: bool


@dataclass(frozen=True)
class EvalReport:
    counts: ConfusionCounts
    detection_rate: float
    precision: float
    detected_vulns: tuple[str, ...]
    missed_vulns: tuple[str, ...]
    rows: tuple[EvalRow, ...]
    # every non-TN universe pair -> class; absent pairs of the universe are TN
    classifications: dict = field(default_factory=dict)
    universe_digest: str = ""

    @property
    def per_vuln_rows(self) -> tuple[EvalRow, ...]:
        return self.rows

    def classification_of(self, vuln_id: str, file_path: str) -> str:
        return self.classifications.get((vuln_id, file_path), "TN")

    def as_dict(self) -> dict:
        c = self.counts
        return {
            "schema_version": EVAL_SCHEMA_VERSION,
            "kind": "eval-report",
            "counts": {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
            "detection_rate": self.detection_rate,
            "precision": self.precision,
            "recall": c.recall,
            "detected_vulns": list(self.detected_vulns),
            "missed_vulns": list(self.missed_vulns),
            "rows": [
                {"vuln_id": r.vuln_id, "classification": r.classification, "files": list(r.files), "detected": r.detected}
                for r in self.rows
            ],
            "pairs": [
                {"vuln_id": v, "file_path": p, "classification": k}
                for (v, p), k in sorted(self.classifications.items())
            ],
            "universe_digest": self.universe_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("kind") != "eval-report":
            raise EvaluationError("not an evaluation document")
        c = d["counts"]
        return cls(
            counts=ConfusionCounts(c["tp"], c["fp"], c["fn"], c["tn"]),
            detection_rate=float(d["detection_rate"]),
            precision=float(d["precision"]),
            detected_vulns=tuple(d["detected_vulns"]),
            missed_vulns=tuple(d["missed_vulns"]),
            rows=tuple(EvalRow(r["vuln_id"], r["classification"], tuple(r["files"]), r["detected"]) for r in d["rows"]),
            classifications={(p["vuln_id"], p["file_path"]): p["classification"] for p in d["pairs"]},
            universe_digest=d.get("universe_digest", ""),
        )


def universe_digest(universe: Iterable[CheckTask]) -> str:
    pairs = sorted({(t.vuln_id, t.file_path) for t in universe})
    return hashlib.sha256(json.dumps(pairs).encode("utf-8")).hexdigest()


def evaluation_universe(
    corpus_paths: Sequence[str], vuln_list: "VulnerabilityList", report: "ScanReport | None" = None
) -> list[CheckTask]:
    """Files x list members, widened by any off-list pairs the report contains."""
    tasks = {CheckTask(p, v) for p in corpus_paths for v in vuln_list.members}
    if report is not None:
        tasks |= {CheckTask(f.file_path, f.vuln_id) for f in report.findings}
    return sorted(tasks)


def evaluate(report: "ScanReport", truth: GroundTruth, universe: Iterable[CheckTask]) -> EvalReport:
    """Classify every universe pair as TP/FP/FN/TN.

    A universe pair is a truth pair when the ground truth lists its
    vulnerability for a file whose path is a suffix of the pair's path.
    Detection rate counts headline vulnerabilities with at least one TP.
    """
    universe = list(universe)
    pairs = {(t.vuln_id, t.file_path) for t in universe}
    reported = report.finding_pairs()
    outside = sorted(reported - pairs)
    if outside:
        raise EvaluationError(f"findings outside the evaluated universe: {outside[:5]}")

    classes: dict[tuple[str, str], str] = {}
    tp = fp = fn = tn = 0
    for pair in sorted(pairs):
        is_true = truth.contains(*pair)
        is_reported = pair in reported
        if is_reported and is_true:
            tp += 1
            classes[pair] = "TP"
        elif is_reported:
            fp += 1
            classes[pair] = "FP"
        elif is_true:
            fn += 1
            classes[pair] = "FN"
        else:
            tn += 1
    counts = ConfusionCounts(tp, fp, fn, tn)

    in_scope = {v for v, p in pairs if v in truth.headline_ids and truth.contains(v, p)}
    detected = {v for (v, _), k in classes.items() if k == "TP" and v in in_scope}
    missed = in_scope - detected
    rate = len(detected) / len(in_scope) if in_scope else 0.0

    any_tp = {v for (v, _), k in classes.items() if k == "TP"}
    grouped: dict[tuple[str, str], list[str]] = {}
    for (v, p), k in classes.items():
        grouped.setdefault((k, v), []).append(p)
    order = {"TP": 0, "FP": 1, "FN": 2}
    rows = tuple(
        EvalRow(v, k, tuple(sorted(files)), v in any_tp)
        for (k, v), files in sorted(grouped.items(), key=lambda kv: (order[kv[0][0]], kv[0][1]))
    )
    return EvalReport(
        counts=counts,
        detection_rate=rate,
        precision=counts.precision,
        detected_vulns=tuple(sorted(detected)),
        missed_vulns=tuple(sorted(missed)),
        rows=rows,
        classifications=classes,
        universe_digest=universe_digest(universe),
    )


@dataclass(frozen=True)
class Transition:
    vuln_id: str
    file_path: str
    before: str
    after: str


def diff_reports(before: EvalReport, after: EvalReport) -> list[Transition]:
    """Pairs whose classification differs between two evaluations of one universe."""
    if before.universe_digest != after.universe_digest:
        raise EvaluationError("evaluations cover different universes")
    keys = set(before.classifications) | set(after.classifications)
    out = []
    for v, p in sorted(keys):
        b, a = before.classification_of(v, p), after.classification_of(v, p)
        if a != b:
            out.append(Transition(v, p, b, a))
    return out


def _display_files(paths: Sequence[str], all_paths: Iterable[str]) -> str:
    if not paths:
        return "-"
    bases = [posixpath.basename(p) for p in set(all_paths)]
    shown = []
    for p in paths:
        base = posixpath.basename(p)
        shown.append(base if bases.count(base) <= 1 else p)
    return ", ".join(shown)


def render_eval_table(report: EvalReport, catalog: "Catalog | None" = None) -> str:
    """Three-column table: vulnerability, file(s), classification.

    Missed headline vulnerabilities show '-' for files.
    """
    def name(v: str) -> str:
        return catalog[v].canonical_name if catalog is not None and v in catalog else v

    all_paths = [p for _, p in report.classifications]
    lines = ["Vulnerability | File(s) | Classification"]
    for row in report.rows:
        files = "-" if row.classification == "FN" and row.vuln_id in report.missed_vulns else _display_files(row.files, all_paths)
        lines.append(f"{name(row.vuln_id)} | {files} | {row.classification}")
    c = report.counts
    lines.append("")
    lines.append(f"TP={c.tp} FP={c.fp} FN={c.fn} TN={c.tn}")
    lines.append(f"detection rate: {report.detection_rate:.4f} ({len(report.detected_vulns)}/{len(report.detected_vulns) + len(report.missed_vulns)})")
    lines.append(f"precision: {report.precision:.4f}")
    return "\n".join(lines) + "\n"


def render_diff(transitions: Sequence[Transition], catalog: "Catalog | None" = None) -> str:
    def name(v: str) -> str:
        return catalog[v].canonical_name if catalog is not None and v in catalog else v

    lines = ["Vulnerability | File | Before | After"]
    for t in transitions:
        lines.append(f"{name(t.vuln_id)} | {posixpath.basename(t.file_path)} | {t.before} | {t.after}")
    lines.append("")
    lines.append(f"{len(transitions)} classification change(s)")
    return "\n".join(lines) + "\n"
