"""Pipeline configuration files.

A config is YAML. Relative paths resolve against the config file's
directory; the special value ``builtin`` points at data shipped with the
package. Credentials are never stored here, only the names of the
environment variables that hold them.

Example::

    catalog: builtin
    ground_truth: ground_truth.yaml
    corpus: {root: app, include: ["**/*.java"]}
    knowledge_base: {docs: builtin, embedder: {kind: local, dims: 512}}
    models:
      gemini-1.5-pro:
        provider: remote-gemini-compatible
        base_url: https://generativelanguage.googleapis.com/v1beta
        api_key_env: GEMINI_API_KEY
        context_window_tokens: 2000000
        max_output_tokens: 8192
    scan: {model: gemini-1.5-pro, list: expanded, max_tokens: 8192}
    verify:
      chain: [gemini-1.5-pro]
      policy: last-agent
      retrieval_k: 4
      context_budget_tokens: 2000
      concurrency: 4
    strict: true
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import resources
from .catalog import Catalog, GroundTruth, VulnerabilityList, load_catalog, load_ground_truth, resolve_list
from .errors import ConfigError
from .ingest import DEFAULT_INCLUDE, CodeCorpus, collect_sources
from .knowledge import HashingEmbedder, KnowledgeBase, RemoteEmbedder
from .moa import AgentChain
from .pipeline import ScanConfig
from .providers import ModelSpec


@dataclass
class Settings:
    path: Path
    catalog_path: Path
    ground_truth_path: Path | None
    corpus_root: Path
    include: tuple[str, ...]
    kb_docs: Path | None
    kb_snapshot: Path | None
    embedder: dict
    models: dict[str, ModelSpec]
    scan_model: str | None
    scan_list: str
    scan_max_tokens: int
    chain: tuple[str, ...]
    policy: str
    full_history: bool
    agent_max_tokens: int
    retrieval_k: int
    context_budget_tokens: int
    context_mode: str
    summary_model: str | None
    concurrency: int
    strict: bool
    mode: str
    cassette: Path | None
    raw: dict = field(default_factory=dict)

    def load_catalog(self) -> Catalog:
        return load_catalog(self.catalog_path)

    def load_ground_truth(self, catalog: Catalog) -> GroundTruth:
        if self.ground_truth_path is None:
            raise ConfigError("config has no ground_truth")
        return load_ground_truth(self.ground_truth_path, catalog)

    def collect_corpus(self) -> CodeCorpus:
        return collect_sources(self.corpus_root, self.include)

    def make_embedder(self):
        kind = self.embedder.get("kind", "local")
        dims = int(self.embedder.get("dims", 512))
        if kind == "local":
            return HashingEmbedder(dims=dims)
        if kind == "remote":
            return RemoteEmbedder(
                base_url=self.embedder["base_url"],
                model=self.embedder["model"],
                dims=dims,
                api_key_env=self.embedder.get("api_key_env"),
            )
        raise ConfigError(f"unknown embedder kind {kind!r}")

    def load_knowledge_base(self, catalog: Catalog) -> KnowledgeBase:
        if self.kb_snapshot is not None and self.kb_snapshot.exists():
            return KnowledgeBase.load_snapshot(self.kb_snapshot, self.make_embedder())
        if self.kb_docs is None:
            raise ConfigError("config has no knowledge_base.docs")
        kb = KnowledgeBase(self.make_embedder())
        kb.ingest_documents(self.kb_docs, catalog)
        return kb

    def model(self, name: str) -> ModelSpec:
        try:
            return self.models[name]
        except KeyError:
            raise ConfigError(f"model {name!r} is not defined under 'models'") from None

    def scan_config(
        self,
        catalog: Catalog,
        mode: str | None = None,
        list_ref: str | None = None,
        concurrency: int | None = None,
        strict: bool | None = None,
    ) -> ScanConfig:
        mode = mode or self.mode
        vuln_list = self.resolve_list(list_ref or self.scan_list, catalog)
        chain = None
        if self.chain:
            chain = AgentChain(
                tuple(self.model(n) for n in self.chain),
                self.policy,
                full_history=self.full_history,
                max_tokens=self.agent_max_tokens,
            )
        return ScanConfig(
            mode=mode,
            vuln_list=vuln_list,
            scan_model=self.model(self.scan_model) if self.scan_model else None,
            chain=chain,
            retrieval_k=self.retrieval_k,
            context_budget_tokens=self.context_budget_tokens,
            concurrency_limit=concurrency or self.concurrency,
            strict=self.strict if strict is None else strict,
            scan_max_tokens=self.scan_max_tokens,
            context_mode=self.context_mode,
            summary_model=self.model(self.summary_model) if self.summary_model else None,
        )

    def resolve_list(self, ref: str, catalog: Catalog) -> VulnerabilityList:
        path, sep, key = ref.rpartition(":") if ":" in ref else (ref, "", "")
        candidate = self.path.parent / path
        if candidate.exists():
            ref = f"{candidate}{sep}{key}"
        elif (self.path.parent / ref).exists():
            ref = str(self.path.parent / ref)
        return resolve_list(ref, catalog)


def _path(base: Path, value: Any, builtin: Path | None = None) -> Path | None:
    if value in (None, ""):
        return None
    if value == "builtin":
        if builtin is None:
            raise ConfigError("'builtin' is not available for this setting")
        return builtin
    p = Path(str(value)).expanduser()
    return p if p.is_absolute() else (base / p)


def _model(name: str, spec: Any) -> ModelSpec:
    if not isinstance(spec, dict):
        raise ConfigError(f"model {name!r} must be a mapping")
    try:
        return ModelSpec(
            provider_kind=str(spec.get("provider", "remote-openai-compatible")),
            model_name=str(spec.get("model", name)),
            context_window_tokens=int(spec["context_window_tokens"]),
            max_output_tokens=int(spec["max_output_tokens"]),
            base_url=spec.get("base_url"),
            api_key_env=spec.get("api_key_env"),
        )
    except KeyError as exc:
        raise ConfigError(f"model {name!r} is missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model {name!r}: {exc}") from None


def load_config(ref: str | Path) -> Settings:
    path = resources.resolve_builtin(str(ref))
    if not path.is_file():
        raise ConfigError(f"config file not found: {ref}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.resolve().parent

    corpus = raw.get("corpus") or {}
    if "root" not in corpus:
        raise ConfigError(f"{path}: corpus.root is required")
    kb = raw.get("knowledge_base") or {}
    scan = raw.get("scan") or {}
    verify = raw.get("verify") or {}
    models = {str(n): _model(str(n), s) for n, s in (raw.get("models") or {}).items()}

    try:
        settings = Settings(
            path=path.resolve(),
            catalog_path=_path(base, raw.get("catalog", "builtin"), resources.data_path("catalog.yaml")),
            ground_truth_path=_path(base, raw.get("ground_truth")),
            corpus_root=_path(base, corpus["root"]),
            include=tuple(corpus.get("include") or DEFAULT_INCLUDE),
            kb_docs=_path(base, kb.get("docs"), resources.data_path("kb")),
            kb_snapshot=_path(base, kb.get("snapshot")),
            embedder=dict(kb.get("embedder") or {"kind": "local", "dims": 512}),
            models=models,
            scan_model=scan.get("model"),
            scan_list=str(scan.get("list", "expanded")),
            scan_max_tokens=int(scan.get("max_tokens", 8192)),
            chain=tuple(verify.get("chain") or ()),
            policy=str(verify.get("policy", "last-agent")),
            full_history=bool(verify.get("full_history", False)),
            agent_max_tokens=int(verify.get("max_tokens", 1024)),
            retrieval_k=int(verify.get("retrieval_k", 4)),
            context_budget_tokens=int(verify.get("context_budget_tokens", 2000)),
            context_mode=str(verify.get("context_mode", "extractive")),
            summary_model=verify.get("summary_model"),
            concurrency=int(verify.get("concurrency", 4)),
            strict=bool(raw.get("strict", True)),
            mode=str(raw.get("mode", "single-pass")),
            cassette=_path(base, raw.get("cassette")),
            raw=raw,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for name in (settings.scan_model, settings.summary_model, *settings.chain):
        if name is not None and name not in models:
            raise ConfigError(f"{path}: model {name!r} is not defined under 'models'")
    return settings
