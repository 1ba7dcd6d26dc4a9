"""End-to-end scan modes: single-pass scanning and RAG + agent-chain verification."""

from __future__ import annotations

import hashlib
import json
import logging
import posixpath
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from .catalog import Catalog, VulnerabilityList, normalize_name, path_matches
from .errors import BudgetExceededError, ConfigError, ProviderError
from .ingest import CodeCorpus, SourceFile, chunk_file, concatenate, estimate_tokens
from .knowledge import ContextBlock, KnowledgeBase, summarize_context
from .moa import AgentChain, CheckTask, CheckTrace, run_check
from .prompts import (
    agent_system_prompt,
    load_template,
    parse_findings,
    render_scan_prompt,
    scan_system_prompt,
)
from .providers import ChatClient, ChatMessage, ChatRequest, ModelSpec, enforce_budget

if TYPE_CHECKING:
    from .catalog import VulnerabilityType

logger = logging.getLogger(__name__)

MODES = ("single-pass", "verify-candidates", "verify-exhaustive")
REPORT_SCHEMA_VERSION = 1
# Slack for template text and estimator error when sizing code for agent prompts.
PROMPT_SLACK_TOKENS = 64


@dataclass(frozen=True)
class ScanConfig:
    mode: str
    vuln_list: VulnerabilityList
    scan_model: ModelSpec | None = None
    chain: AgentChain | None = None
    retrieval_k: int = 4
    context_budget_tokens: int = 2000
    concurrency_limit: int = 1
    strict: bool = True
    scan_max_tokens: int = 8192
    context_mode: str = "extractive"
    summary_model: ModelSpec | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.retrieval_k < 1 or self.context_budget_tokens < 1:
            raise ConfigError("retrieval_k and context_budget_tokens must be positive")
        if self.mode == "single-pass" and self.scan_model is None:
            raise ConfigError("single-pass mode needs a scan model")
        if self.mode != "single-pass" and self.chain is None:
            raise ConfigError(f"{self.mode} needs an agent chain")
        if self.context_mode not in ("extractive", "abstractive"):
            raise ConfigError("context_mode must be extractive or abstractive")
        if self.context_mode == "abstractive" and self.summary_model is None:
            raise ConfigError("abstractive context needs a summary model")

    def snapshot(self) -> dict:
        """Settings that determine results; execution knobs such as concurrency are left out."""
        d: dict = {
            "mode": self.mode,
            "vuln_list": {"name": self.vuln_list.name, "members": list(self.vuln_list.members)},
            "strict": self.strict,
        }
        if self.mode == "single-pass":
            d["scan_model"] = self.scan_model.as_dict()
            d["scan_max_tokens"] = self.scan_max_tokens
        else:
            d["chain"] = {
                "agents": [a.as_dict() for a in self.chain.agents],
                "aggregation_policy": self.chain.aggregation_policy,
                "full_history": self.chain.full_history,
                "max_tokens": self.chain.max_tokens,
            }
            d["retrieval_k"] = self.retrieval_k
            d["context_budget_tokens"] = self.context_budget_tokens
            d["context_mode"] = self.context_mode
            if self.summary_model is not None:
                d["summary_model"] = self.summary_model.as_dict()
        return d


@dataclass(frozen=True)
class ReportFinding:
    vuln_id: str
    file_path: str
    confidence: float | None = None
    raw_names: tuple[str, ...] = ()
    decision: str = "present"

    @property
    def key(self) -> tuple[str, str]:
        return (self.file_path, self.vuln_id)

    def as_dict(self) -> dict:
        return {
            "vuln_id": self.vuln_id,
            "file_path": self.file_path,
            "decision": self.decision,
            "confidence": self.confidence,
            "raw_names": list(self.raw_names),
        }


@dataclass(frozen=True)
class ScanReport:
    mode: str
    config: dict = field(default_factory=dict)
    findings: tuple[ReportFinding, ...] = ()
    traces: tuple[CheckTrace, ...] = ()
    unresolved_names: tuple[str, ...] = ()
    unmatched_files: tuple[tuple[str, str], ...] = ()
    warnings: tuple[str, ...] = ()
    corpus_digest: str | None = None
    cassette_digest: str | None = None
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(sorted(self.findings, key=lambda f: f.key)))
        object.__setattr__(
            self, "traces",
            tuple(sorted(self.traces, key=lambda t: (t.task.file_path, t.task.vuln_id, t.lines or (0, 0)))),
        )
        object.__setattr__(self, "unresolved_names", tuple(sorted(set(self.unresolved_names))))
        object.__setattr__(self, "unmatched_files", tuple(sorted(set(self.unmatched_files))))

    def with_provenance(self, cassette_digest: str | None = None) -> "ScanReport":
        return replace(self, cassette_digest=cassette_digest)

    def finding_pairs(self) -> set[tuple[str, str]]:
        return {(f.vuln_id, f.file_path) for f in self.findings}

    def as_dict(self, include_timings: bool = False) -> dict:
        d = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "scan-report",
            "mode": self.mode,
            "config": self.config,
            "corpus_digest": self.corpus_digest,
            "cassette_digest": self.cassette_digest,
            "findings": [f.as_dict() for f in self.findings],
            "traces": [t.as_dict(include_timings) for t in self.traces],
            "unresolved_names": list(self.unresolved_names),
            "unmatched_files": [list(p) for p in self.unmatched_files],
            "warnings": list(self.warnings),
        }
        if self.traces:
            d["summary"] = verification_summary(self)
        if include_timings:
            d["timings"] = self.timings
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScanReport":
        if d.get("kind") != "scan-report":
            raise ConfigError("not a scan report document")
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema version {d.get('schema_version')!r}")
        return cls(
            mode=d["mode"],
            config=d.get("config", {}),
            findings=tuple(
                ReportFinding(f["vuln_id"], f["file_path"], f.get("confidence"), tuple(f.get("raw_names", ())),
                              f.get("decision", "present"))
                for f in d.get("findings", [])
            ),
            traces=tuple(CheckTrace.from_dict(t) for t in d.get("traces", [])),
            unresolved_names=tuple(d.get("unresolved_names", ())),
            unmatched_files=tuple(tuple(p) for p in d.get("unmatched_files", ())),
            warnings=tuple(d.get("warnings", ())),
            corpus_digest=d.get("corpus_digest"),
            cassette_digest=d.get("cassette_digest"),
            timings=d.get("timings", {}),
        )


def verification_summary(report: ScanReport) -> dict:
    """Per-pair and per-vulnerability confirmed/rejected counts of a verify run."""
    decided: dict[tuple[str, str], str] = {}
    for t in report.traces:
        key = (t.task.vuln_id, t.task.file_path)
        if t.verdict.decision == "present" or key not in decided:
            decided[key] = t.verdict.decision
    by_vuln: dict[str, set[str]] = {}
    for (vuln_id, _), decision in decided.items():
        by_vuln.setdefault(vuln_id, set()).add(decision)
    rows = {v: ("confirmed" if s == {"present"} else "rejected" if s == {"absent"} else "mixed")
            for v, s in by_vuln.items()}
    return {
        "checks": len(decided),
        "confirmed_checks": sum(1 for d in decided.values() if d == "present"),
        "rejected_checks": sum(1 for d in decided.values() if d == "absent"),
        "vulnerabilities": len(rows),
        "confirmed_vulnerabilities": sum(1 for s in rows.values() if s == "confirmed"),
        "rejected_vulnerabilities": sum(1 for s in rows.values() if s == "rejected"),
        "mixed_vulnerabilities": sum(1 for s in rows.values() if s == "mixed"),
    }


def corpus_digest(corpus: CodeCorpus) -> str:
    h = hashlib.sha256()
    for f in corpus.files:
        h.update(json.dumps([f.path, f.content]).encode("utf-8"))
    return h.hexdigest()


def resolve_file(reported: str, corpus_paths: Sequence[str]) -> str | None:
    """Map a file name as reported by a model to a unique corpus path."""
    reported = reported.strip().replace("\\", "/")
    if not reported:
        return None
    if reported in corpus_paths:
        return reported
    matches = [p for p in corpus_paths if path_matches(p, reported)]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        base = posixpath.basename(reported)
        matches = [p for p in corpus_paths if posixpath.basename(p) == base]
        if len(matches) == 1:
            return matches[0]
    return None


def _scan_request(blob: str, config: ScanConfig, catalog: Catalog) -> ChatRequest:
    prompt = render_scan_prompt(blob, config.vuln_list, catalog)
    max_tokens = min(config.scan_max_tokens, config.scan_model.max_output_tokens)
    return ChatRequest(
        model=config.scan_model,
        messages=(ChatMessage("system", scan_system_prompt()), ChatMessage("user", prompt)),
        temperature=0.0,
        max_tokens=max_tokens,
    )


def _fits(request: ChatRequest) -> bool:
    try:
        enforce_budget(request)
        return True
    except BudgetExceededError:
        return False


def _scan_blobs(corpus: CodeCorpus, config: ScanConfig, catalog: Catalog) -> list[str]:
    """Whole corpus as one blob if it fits, else one blob per file (chunked when needed)."""
    whole = concatenate(corpus)
    if _fits(_scan_request(whole, config, catalog)):
        return [whole]
    logger.info("corpus exceeds the scan model window; scanning per file")
    overhead = estimate_tokens(_scan_request("", config, catalog).prompt_text) + PROMPT_SLACK_TOKENS
    budget = config.scan_model.context_window_tokens - min(config.scan_max_tokens, config.scan_model.max_output_tokens) - overhead
    blobs = []
    for f in corpus.files:
        single = concatenate(CodeCorpus.from_files(corpus.root, [f]))
        if _fits(_scan_request(single, config, catalog)):
            blobs.append(single)
            continue
        if budget <= 0:
            raise BudgetExceededError(overhead, config.scan_model.context_window_tokens)
        header_tokens = estimate_tokens(concatenate(CodeCorpus.from_files(corpus.root, [SourceFile(f.path, "")])))
        for chunk in chunk_file(f, max(1, budget - header_tokens)):
            blobs.append(concatenate(CodeCorpus.from_files(corpus.root, [SourceFile(f.path, chunk.content)])))
    return blobs


def run_single_pass(
    corpus: CodeCorpus,
    config: ScanConfig,
    client: ChatClient,
    catalog: Catalog,
) -> ScanReport:
    """Ask one model to find every listed vulnerability in the concatenated corpus."""
    started = time.perf_counter()
    if config.mode != "single-pass":
        config = replace(config, mode="single-pass")
    if not corpus.files:
        return ScanReport("single-pass", config.snapshot(), corpus_digest=corpus_digest(corpus))

    findings: dict[tuple[str, str], set[str]] = {}
    unresolved: list[str] = []
    unmatched: list[tuple[str, str]] = []
    warnings: list[str] = [f"unreadable file {p}: {e}" for p, e in corpus.errors]
    paths = corpus.paths
    for blob in _scan_blobs(corpus, config, catalog):
        request = _scan_request(blob, config, catalog)
        try:
            response = client.complete(request)
        except ProviderError as exc:
            if config.strict:
                raise
            warnings.append(f"scan request skipped: {exc}")
            continue
        if response.finish_reason == "length":
            warnings.append("scan response was truncated at max_tokens")
        doc = parse_findings(response.content)
        warnings.extend(doc.parse_warnings)
        for f in doc.findings:
            vuln_id = normalize_name(f.raw_vuln_name, catalog)
            if vuln_id is None:
                unresolved.append(f.raw_vuln_name)
                continue
            path = resolve_file(f.file_path, paths)
            if path is None:
                unmatched.append((f.raw_vuln_name, f.file_path))
                continue
            findings.setdefault((vuln_id, path), set()).add(f.raw_vuln_name)

    return ScanReport(
        mode="single-pass",
        config=config.snapshot(),
        findings=tuple(ReportFinding(v, p, None, tuple(sorted(raw))) for (v, p), raw in findings.items()),
        unresolved_names=tuple(unresolved),
        unmatched_files=tuple(unmatched),
        warnings=tuple(warnings),
        corpus_digest=corpus_digest(corpus),
        timings={"total_seconds": time.perf_counter() - started},
    )


def retrieval_query(vuln: "VulnerabilityType") -> str:
    return f"{vuln.canonical_name}\n{vuln.description}"


def build_context(vuln: "VulnerabilityType", kb: KnowledgeBase, config: ScanConfig, client: ChatClient) -> ContextBlock:
    hits = kb.retrieve(retrieval_query(vuln), config.retrieval_k)
    block = kb.synthesize_context(vuln, hits, config.context_budget_tokens)
    if config.context_mode == "abstractive" and hits:
        block = summarize_context(block, client, config.summary_model, config.context_budget_tokens)
    return block


def code_token_budget(chain: AgentChain, context: ContextBlock) -> int:
    """Tokens left for source code in the tightest agent's prompt."""
    window = min(a.context_window_tokens - chain.request_max_tokens(a) for a in chain.agents)
    overhead = (
        estimate_tokens(agent_system_prompt())
        + estimate_tokens(load_template("agent").text)
        + estimate_tokens(load_template("prior").text)
        + context.token_count
        + (chain.max_tokens * (len(chain.agents) - 1) if chain.full_history else chain.max_tokens)
        + PROMPT_SLACK_TOKENS
    )
    return window - overhead


def _check_file(
    task: CheckTask,
    source: SourceFile,
    vuln: "VulnerabilityType",
    context: ContextBlock,
    config: ScanConfig,
    client: ChatClient,
) -> list[CheckTrace]:
    budget = code_token_budget(config.chain, context)
    if budget <= 0:
        raise BudgetExceededError(-budget, min(a.context_window_tokens for a in config.chain.agents))
    if estimate_tokens(source.content) <= budget:
        return [run_check(task, source.content, vuln, context, config.chain, client, strict=config.strict)]
    traces = []
    for chunk in chunk_file(source, budget):
        traces.append(
            run_check(
                task, chunk.content, vuln, context, config.chain, client,
                strict=config.strict,
                file_label=f"{task.file_path} (lines {chunk.start_line}-{chunk.end_line})",
                lines=(chunk.start_line, chunk.end_line),
            )
        )
    return traces


def run_verification(
    corpus: CodeCorpus,
    tasks: Iterable[CheckTask],
    kb: KnowledgeBase,
    config: ScanConfig,
    client: ChatClient,
    catalog: Catalog,
) -> ScanReport:
    """Verify each (file, vulnerability) task with retrieval plus the agent chain.

    Tasks run concurrently up to ``config.concurrency_limit``; the report is
    assembled in canonical order, so it does not depend on scheduling. A task
    split into chunks is a finding if any chunk's verdict is present.
    """
    started = time.perf_counter()
    if config.chain is None:
        raise ConfigError("verification needs an agent chain")
    tasks = sorted(set(tasks))
    for t in tasks:
        catalog.require(t.vuln_id)
        try:
            corpus.get(t.file_path)
        except KeyError:
            raise ConfigError(f"task file {t.file_path!r} is not in the corpus") from None

    contexts: dict[str, ContextBlock] = {}
    for vuln_id in sorted({t.vuln_id for t in tasks}):
        contexts[vuln_id] = build_context(catalog[vuln_id], kb, config, client)

    def work(task: CheckTask) -> list[CheckTrace]:
        return _check_file(task, corpus.get(task.file_path), catalog[task.vuln_id], contexts[task.vuln_id], config, client)

    with ThreadPoolExecutor(max_workers=config.concurrency_limit) as pool:
        results = list(pool.map(work, tasks))

    traces: list[CheckTrace] = []
    findings: list[ReportFinding] = []
    agent_seconds = 0.0
    for task, task_traces in zip(tasks, results):
        traces.extend(task_traces)
        agent_seconds += sum(sum(t.elapsed_per_agent) for t in task_traces)
        present = [t.verdict.confidence for t in task_traces if t.verdict.decision == "present"]
        if present:
            findings.append(ReportFinding(task.vuln_id, task.file_path, max(present)))

    warnings = [f"{t.task.file_path} / {t.task.vuln_id}: {e}" for t in traces for e in t.errors]
    return ScanReport(
        mode=config.mode,
        config=config.snapshot(),
        findings=tuple(findings),
        traces=tuple(traces),
        warnings=tuple(warnings),
        corpus_digest=corpus_digest(corpus),
        timings={"total_seconds": time.perf_counter() - started, "agent_seconds": agent_seconds},
    )


def candidates_from_findings(report: ScanReport) -> list[CheckTask]:
    return sorted({CheckTask(f.file_path, f.vuln_id) for f in report.findings})


def exhaustive_tasks(corpus: CodeCorpus, vuln_list: VulnerabilityList) -> list[CheckTask]:
    return sorted(CheckTask(p, v) for p in corpus.paths for v in vuln_list.members)
