"""Vulnerability knowledge base: document ingestion, embedding, exact retrieval.

The index is a brute-force cosine scan over unit vectors held in memory. At
the scale of a curated per-vulnerability corpus that is fast and, more
importantly, exact, so retrieval can be checked against a naive oracle.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Protocol, Sequence

import numpy as np
import yaml

from .errors import KnowledgeBaseError, MissingCredentialError, ProviderUnavailableError, SnapshotError
from .ingest import CHARS_PER_TOKEN, estimate_tokens

if TYPE_CHECKING:
    from .catalog import Catalog, VulnerabilityType
    from .providers import ChatClient, ModelSpec

logger = logging.getLogger(__name__)

DOC_KINDS = ("description", "code-example", "mitigation", "best-practice")
SNAPSHOT_VERSION = 1
# Scores are sorted on this many decimals so float noise cannot reorder ties.
SCORE_DECIMALS = 12


@dataclass(frozen=True)
class KnowledgeDocument:
    doc_id: str
    kind: str
    title: str
    body: str
    vuln_id: str | None = None

    def __post_init__(self):
        if self.kind not in DOC_KINDS:
            raise KnowledgeBaseError(f"document {self.doc_id!r}: kind must be one of {DOC_KINDS}")
        if not self.doc_id:
            raise KnowledgeBaseError("document needs a doc_id")


@dataclass(frozen=True)
class RetrievalHit:
    doc_id: str
    score: float


@dataclass(frozen=True)
class ContextBlock:
    vuln_id: str
    text: str
    source_doc_ids: tuple[str, ...] = ()

    @property
    def token_count(self) -> int:
        return estimate_tokens(self.text)


class Embedder(Protocol):
    dims: int
    name: str

    def embed(self, text: str) -> np.ndarray: ...


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Texts with no n-grams map to a fixed basis vector to stay unit-norm.
        vec = np.zeros_like(vec)
        vec[0] = 1.0
        return vec
    return vec / norm


class HashingEmbedder:
    """Deterministic local embedder: hashed character n-gram counts, L2-normalized."""

    def __init__(self, dims: int = 512, ngram_range: tuple[int, int] = (3, 5)):
        if dims <= 0:
            raise ValueError("dims must be positive")
        self.dims = dims
        self.ngram_range = ngram_range
        self.name = f"hashing-char-{ngram_range[0]}-{ngram_range[1]}-d{dims}"

    def _features(self, text: str) -> Iterable[int]:
        norm = " " + " ".join(text.casefold().split()) + " "
        lo, hi = self.ngram_range
        for n in range(lo, hi + 1):
            for i in range(len(norm) - n + 1):
                yield zlib.crc32(norm[i : i + n].encode("utf-8")) % self.dims

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dims, dtype=np.float64)
        idx = np.fromiter(self._features(text), dtype=np.int64)
        if idx.size:
            np.add.at(vec, idx, 1.0)
        return _unit(vec)


class RemoteEmbedder:
    """OpenAI-compatible ``/embeddings`` endpoint; vectors are re-normalized locally."""

    def __init__(self, base_url: str, model: str, dims: int, api_key_env: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dims = dims
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.name = f"remote:{model}"

    def embed(self, text: str) -> np.ndarray:
        import httpx

        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise MissingCredentialError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            values = resp.json()["data"][0]["embedding"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderUnavailableError(f"embedding request failed: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dims,):
            raise ProviderUnavailableError(f"expected {self.dims} dims, got {vec.shape}")
        return _unit(vec)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


_FRONT_MATTER = re.compile(r"\A---[ \t]*\r?\n(.*?)\r?\n---[ \t]*\r?\n?(.*)\Z", re.DOTALL)


def parse_document(text: str, source: str = "<doc>") -> KnowledgeDocument:
    """Parse a knowledge document: YAML header between ``---`` lines, then the body."""
    m = _FRONT_MATTER.match(text)
    if not m:
        raise KnowledgeBaseError(f"{source}: missing '---' metadata header")
    try:
        meta = yaml.safe_load(m.group(1)) or {}
    except yaml.YAMLError as exc:
        raise KnowledgeBaseError(f"{source}: bad metadata header: {exc}") from exc
    if not isinstance(meta, dict):
        raise KnowledgeBaseError(f"{source}: metadata header must be a mapping")
    missing = [k for k in ("doc_id", "kind", "title") if not meta.get(k)]
    if missing:
        raise KnowledgeBaseError(f"{source}: metadata missing {', '.join(missing)}")
    body = m.group(2).strip()
    if not body:
        raise KnowledgeBaseError(f"{source}: empty body")
    vuln_id = meta.get("vuln_id")
    return KnowledgeDocument(
        doc_id=str(meta["doc_id"]),
        kind=str(meta["kind"]),
        title=str(meta["title"]),
        body=body,
        vuln_id=str(vuln_id) if vuln_id else None,
    )


def render_document(doc: KnowledgeDocument) -> str:
    meta = {"doc_id": doc.doc_id, "kind": doc.kind, "title": doc.title}
    if doc.vuln_id:
        meta["vuln_id"] = doc.vuln_id
    return "---\n" + yaml.safe_dump(meta, sort_keys=True) + "---\n" + doc.body + "\n"


class KnowledgeBase:
    """Document store plus exact cosine index.

    Reads (``retrieve``) work on an immutable matrix snapshot and may run
    concurrently; writes take the lock and rebuild the snapshot.
    """

    def __init__(self, embedder: Embedder | None = None):
        self.embedder = embedder or HashingEmbedder()
        self.documents: dict[str, KnowledgeDocument] = {}
        self._vectors: dict[str, np.ndarray] = {}
        self.unlinked: set[str] = set()
        self.errors: list[tuple[str, str]] = []
        self._lock = threading.Lock()
        self._ids: tuple[str, ...] = ()
        self._matrix = np.zeros((0, self.embedder.dims))

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def dims(self) -> int:
        return self.embedder.dims

    def embed(self, text: str) -> np.ndarray:
        return self.embedder.embed(text)

    def add_documents(self, docs: Iterable[KnowledgeDocument], catalog: "Catalog | None" = None) -> int:
        docs = list(docs)
        vectors = [self.embed(d.body) for d in docs]
        with self._lock:
            for doc, vec in zip(docs, vectors):
                self.documents[doc.doc_id] = doc
                self._vectors[doc.doc_id] = vec
                if catalog is not None and (doc.vuln_id is None or doc.vuln_id not in catalog):
                    self.unlinked.add(doc.doc_id)
                else:
                    self.unlinked.discard(doc.doc_id)
            self._rebuild()
        return len(docs)

    def _rebuild(self):
        ids = tuple(sorted(self._vectors))
        self._ids = ids
        if ids:
            self._matrix = np.vstack([self._vectors[i] for i in ids])
        else:
            self._matrix = np.zeros((0, self.dims))

    def ingest_documents(self, directory: str | os.PathLike, catalog: "Catalog | None" = None) -> int:
        """Parse and index every ``*.md`` document under ``directory``.

        Malformed documents are skipped and listed in ``self.errors``. Documents
        whose vuln_id is missing or unknown are indexed but marked unlinked.
        Re-ingesting the same directory leaves the index unchanged.
        """
        directory = Path(directory)
        if not directory.is_dir():
            raise KnowledgeBaseError(f"knowledge directory not found: {directory}")
        docs, seen = [], set()
        for path in sorted(directory.rglob("*.md")):
            rel = path.relative_to(directory).as_posix()
            try:
                doc = parse_document(path.read_text(encoding="utf-8"), rel)
            except (OSError, UnicodeDecodeError, KnowledgeBaseError) as exc:
                logger.warning("skipping knowledge document %s: %s", rel, exc)
                self.errors.append((rel, str(exc)))
                continue
            if doc.doc_id in seen:
                self.errors.append((rel, f"duplicate doc_id {doc.doc_id!r}"))
                continue
            seen.add(doc.doc_id)
            docs.append(doc)
        return self.add_documents(docs, catalog)

    def retrieve(self, query: str, k: int) -> list[RetrievalHit]:
        """Top-k documents by cosine similarity; ties go to the smaller doc_id."""
        if k <= 0:
            return []
        ids, matrix = self._ids, self._matrix
        if not ids:
            return []
        q = self.embed(query)
        scores = matrix @ q
        keys = np.round(scores, SCORE_DECIMALS)
        order = sorted(range(len(ids)), key=lambda i: (-keys[i], ids[i]))[:k]
        return [RetrievalHit(ids[i], float(np.clip(scores[i], -1.0, 1.0))) for i in order]

    def vectors(self) -> dict[str, np.ndarray]:
        return dict(self._vectors)

    def state_digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.embedder.name}|{self.dims}".encode())
        for doc_id in self._ids:
            doc = self.documents[doc_id]
            h.update(json.dumps([doc.doc_id, doc.vuln_id, doc.kind, doc.title, doc.body]).encode())
            h.update(np.ascontiguousarray(self._vectors[doc_id], dtype="<f8").tobytes())
        return h.hexdigest()

    def save_snapshot(self, path: str | os.PathLike) -> None:
        meta = {
            "version": SNAPSHOT_VERSION,
            "dims": self.dims,
            "embedder": self.embedder.name,
            "documents": [
                {"doc_id": d.doc_id, "vuln_id": d.vuln_id, "kind": d.kind, "title": d.title, "body": d.body}
                for d in (self.documents[i] for i in self._ids)
            ],
            "unlinked": sorted(self.unlinked),
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), vectors=self._matrix)

    @classmethod
    def load_snapshot(cls, path: str | os.PathLike, embedder: Embedder | None = None) -> "KnowledgeBase":
        try:
            with np.load(path, allow_pickle=False) as data:
                meta = json.loads(str(data["meta"]))
                matrix = np.array(data["vectors"], dtype=np.float64)
        except (OSError, KeyError, ValueError) as exc:
            raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
        if meta.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {meta.get('version')!r}")
        kb = cls(embedder or HashingEmbedder(dims=meta["dims"]))
        if meta["dims"] != kb.dims or (matrix.size and matrix.shape[1] != kb.dims):
            raise SnapshotError(f"snapshot has {meta['dims']} dims but the embedder produces {kb.dims}")
        if len(meta["documents"]) != matrix.shape[0]:
            raise SnapshotError("snapshot document table and vector count disagree")
        for row, d in zip(matrix, meta["documents"]):
            doc = KnowledgeDocument(d["doc_id"], d["kind"], d["title"], d["body"], d.get("vuln_id"))
            kb.documents[doc.doc_id] = doc
            kb._vectors[doc.doc_id] = row
        kb.unlinked = set(meta.get("unlinked", []))
        kb._rebuild()
        return kb

    def synthesize_context(
        self, vuln: "VulnerabilityType", hits: Sequence[RetrievalHit], token_budget: int
    ) -> ContextBlock:
        return synthesize_context(vuln, hits, token_budget, self.documents)


def context_header(vuln: "VulnerabilityType") -> str:
    return f"Reference material: {vuln.canonical_name}\n\n"


DOC_SEPARATOR = "\n\n"


def _doc_text(doc: KnowledgeDocument) -> str:
    return f"### {doc.title} ({doc.kind})\n{doc.body}"


def synthesize_context(
    vuln: "VulnerabilityType",
    hits: Sequence[RetrievalHit],
    token_budget: int,
    documents: dict[str, KnowledgeDocument],
) -> ContextBlock:
    """Extractive context: whole documents in hit order until the budget is used.

    The first document is always included, cut short if it alone overflows.
    Without hits the block is just the catalog description.
    """
    if token_budget <= 0:
        raise ValueError("token_budget must be positive")
    if not hits:
        return ContextBlock(vuln.id, vuln.description, ())
    for h in hits:
        if h.doc_id not in documents:
            raise KnowledgeBaseError(f"hit references unknown document {h.doc_id!r}")

    limit = token_budget * CHARS_PER_TOKEN
    header = context_header(vuln)
    parts: list[str] = []
    used: list[str] = []
    for h in hits:
        piece = _doc_text(documents[h.doc_id])
        candidate = header + DOC_SEPARATOR.join(parts + [piece])
        if len(candidate) <= limit:
            parts.append(piece)
            used.append(h.doc_id)
            continue
        if not parts:
            parts.append(piece)
            used.append(h.doc_id)
        break
    text = header + DOC_SEPARATOR.join(parts)
    if len(text) > limit:
        text = text[:limit]
    return ContextBlock(vuln.id, text, tuple(used))


SUMMARY_SYSTEM = "You condense security reference material. Keep concrete code patterns and mitigations."


def summarize_context(
    block: ContextBlock, client: "ChatClient", model: "ModelSpec", token_budget: int
) -> ContextBlock:
    """Abstractive variant: one model call rewrites the extractive block."""
    from .providers import ChatMessage, ChatRequest

    request = ChatRequest(
        model=model,
        messages=(
            ChatMessage("system", SUMMARY_SYSTEM),
            ChatMessage(
                "user",
                f"Summarize the following in at most {token_budget} tokens.\n\n{block.text}",
            ),
        ),
        max_tokens=min(token_budget, model.max_output_tokens),
    )
    response = client.complete(request)
    text = response.content.strip()[: token_budget * CHARS_PER_TOKEN] or block.text
    return ContextBlock(block.vuln_id, text, block.source_doc_ids)
