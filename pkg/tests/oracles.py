"""Independent reference implementations used to cross-check the package."""

from __future__ import annotations

import math
import random

from moascan.catalog import GroundTruth
from moascan.moa import CheckTask
from moascan.pipeline import ReportFinding, ScanReport


def suffix_match(path: str, truth: str) -> bool:
    parts, tparts = path.split("/"), truth.split("/")
    return parts[-len(tparts):] == tparts


def confusion_oracle(universe, reported, truth_pairs, headline):
    """Brute-force confusion counts and detection rate."""
    counts = {"TP": 0, "FP": 0, "FN": 0, "TN": 0}
    classes = {}
    for v, p in universe:
        truthy = any(tv == v and suffix_match(p, tp) for tv, tp in truth_pairs)
        hit = (v, p) in reported
        k = ("TP" if truthy else "FP") if hit else ("FN" if truthy else "TN")
        counts[k] += 1
        classes[(v, p)] = k
    relevant = set()
    found = set()
    for (v, p), k in classes.items():
        if v in headline and k in ("TP", "FN"):
            relevant.add(v)
            if k == "TP":
                found.add(v)
    rate = len(found) / len(relevant) if relevant else 0.0
    return counts, classes, rate


def random_eval_instance(rng: random.Random):
    """A random universe, report, and ground truth over small synthetic names."""
    files = [f"{rng.choice(['a', 'b', 'a/b'])}/F{i}.java" for i in range(rng.randint(0, 6))]
    files = sorted(set(files))
    vulns = [f"v{i}" for i in range(rng.randint(1, 5))]
    universe = sorted({(v, f) for v in vulns for f in files})
    reported = {pair for pair in universe if rng.random() < 0.3}
    truth_pairs = set()
    for v in vulns:
        for f in files:
            if rng.random() < 0.25:
                truth_pairs.add((v, f.rsplit("/", 1)[-1] if rng.random() < 0.5 else f))
    if rng.random() < 0.3:
        truth_pairs.add((rng.choice(vulns), "Elsewhere.java"))
    headline = frozenset(v for v, _ in truth_pairs if rng.random() < 0.8)
    report = ScanReport("single-pass", findings=tuple(ReportFinding(v, f) for v, f in reported))
    truth = GroundTruth(frozenset(truth_pairs), headline)
    tasks = [CheckTask(f, v) for v, f in universe]
    return report, truth, tasks, universe, reported, truth_pairs, headline


def brute_force_top_k(doc_vectors, query, k):
    """Cosine scan over every document with the (-score, id) tie rule."""
    qn = math.sqrt(sum(x * x for x in query))
    scored = []
    for doc_id, vec in doc_vectors.items():
        dn = math.sqrt(sum(x * x for x in vec))
        dot = sum(a * b for a, b in zip(vec, query))
        score = dot / (qn * dn) if qn and dn else 0.0
        scored.append((-round(score, 12), doc_id, score))
    scored.sort()
    return [(doc_id, score) for _, doc_id, score in scored[:k]]
