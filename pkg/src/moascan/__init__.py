"""LLM-driven vulnerability scanning with retrieval-backed agent-chain verification."""

from __future__ import annotations

from .catalog import Catalog, GroundTruth, VulnerabilityList, VulnerabilityType, default_catalog, normalize_name
from .errors import MoascanError
from .evaluation import EvalReport, diff_reports, evaluate, evaluation_universe
from .ingest import CodeCorpus, SourceFile, chunk_file, collect_sources, concatenate
from .knowledge import HashingEmbedder, KnowledgeBase, KnowledgeDocument
from .moa import AgentChain, CheckTask, aggregate, run_check
from .pipeline import ScanConfig, ScanReport, run_single_pass, run_verification
from .prompts import parse_assessment, parse_findings
from .providers import Cassette, ChatClient, ChatRequest, ChatResponse, ModelSpec, ScriptedBackend

__version__ = "0.1.0"

__all__ = [
    "AgentChain", "Cassette", "Catalog", "ChatClient", "ChatRequest", "ChatResponse", "CheckTask",
    "CodeCorpus", "EvalReport", "GroundTruth", "HashingEmbedder", "KnowledgeBase", "KnowledgeDocument",
    "ModelSpec", "MoascanError", "ScanConfig", "ScanReport", "ScriptedBackend", "SourceFile",
    "VulnerabilityList", "VulnerabilityType", "aggregate", "chunk_file", "collect_sources", "concatenate",
    "default_catalog", "diff_reports", "evaluate", "evaluation_universe", "normalize_name",
    "parse_assessment", "parse_findings", "run_check", "run_single_pass", "run_verification",
]
