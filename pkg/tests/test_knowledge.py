from __future__ import annotations

import httpx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moascan.errors import KnowledgeBaseError, MissingCredentialError, SnapshotError
from moascan.knowledge import (
    HashingEmbedder,
    KnowledgeBase,
    KnowledgeDocument,
    RemoteEmbedder,
    RetrievalHit,
    context_header,
    parse_document,
    render_document,
    synthesize_context,
)
from moascan.resources import data_path


def _doc(i: int, body: str, vuln_id: str | None = "ssrf") -> KnowledgeDocument:
    return KnowledgeDocument(f"d{i:03d}", "description", f"Doc {i}", body, vuln_id)


@pytest.fixture(scope="module")
def bundled_kb(catalog):
    kb = KnowledgeBase()
    kb.ingest_documents(data_path("kb"), catalog)
    return kb


def test_hashing_embedder_is_deterministic_and_unit_norm():
    e = HashingEmbedder(dims=64)
    a, b = e.embed("WebView loadUrl"), HashingEmbedder(dims=64).embed("WebView loadUrl")
    assert np.array_equal(a, b)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert np.isclose(np.linalg.norm(e.embed("")), 1.0)


def test_bundled_kb_covers_every_catalog_entry(bundled_kb, catalog):
    assert len(bundled_kb) >= 50
    assert not bundled_kb.errors
    linked = {d.vuln_id for d in bundled_kb.documents.values() if d.doc_id not in bundled_kb.unlinked}
    assert linked == set(catalog)
    assert all(bundled_kb.documents[d].kind == "best-practice" for d in bundled_kb.unlinked)


def test_reingest_is_idempotent(bundled_kb, catalog):
    before = bundled_kb.state_digest()
    bundled_kb.ingest_documents(data_path("kb"), catalog)
    assert bundled_kb.state_digest() == before


def test_retrieval_prefers_matching_document(bundled_kb, catalog):
    vt = catalog["intent-sniffing"]
    hits = bundled_kb.retrieve(f"{vt.canonical_name}\n{vt.description}", 3)
    assert hits[0].doc_id.startswith("intent-sniffing")
    assert [h.score for h in hits] == sorted((h.score for h in hits), reverse=True)


def test_retrieve_edge_cases():
    kb = KnowledgeBase(HashingEmbedder(dims=32))
    assert kb.retrieve("anything", 3) == []
    kb.add_documents([_doc(1, "alpha"), _doc(2, "beta")])
    assert len(kb.retrieve("alpha", 10)) == 2
    assert kb.retrieve("alpha", 0) == []


def test_ties_go_to_smaller_doc_id():
    kb = KnowledgeBase(HashingEmbedder(dims=32))
    kb.add_documents([_doc(3, "same text"), _doc(1, "same text"), _doc(2, "same text")])
    assert [h.doc_id for h in kb.retrieve("same text", 3)] == ["d001", "d002", "d003"]


def test_snapshot_roundtrip(tmp_path, bundled_kb):
    path = tmp_path / "kb.npz"
    bundled_kb.save_snapshot(path)
    loaded = KnowledgeBase.load_snapshot(path)
    assert loaded.state_digest() == bundled_kb.state_digest()
    assert loaded.unlinked == bundled_kb.unlinked
    assert loaded.retrieve("deep link", 5) == bundled_kb.retrieve("deep link", 5)


def test_snapshot_dims_mismatch(tmp_path, bundled_kb):
    path = tmp_path / "kb.npz"
    bundled_kb.save_snapshot(path)
    with pytest.raises(SnapshotError):
        KnowledgeBase.load_snapshot(path, HashingEmbedder(dims=128))


def test_snapshot_unreadable(tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a snapshot")
    with pytest.raises(SnapshotError):
        KnowledgeBase.load_snapshot(bad)


def test_malformed_documents_are_skipped(tmp_path):
    (tmp_path / "good.md").write_text("---\ndoc_id: g\nkind: mitigation\ntitle: G\nvuln_id: ssrf\n---\nbody\n")
    (tmp_path / "nohead.md").write_text("just text\n")
    (tmp_path / "badkind.md").write_text("---\ndoc_id: b\nkind: poem\ntitle: B\n---\nbody\n")
    (tmp_path / "unknown.md").write_text("---\ndoc_id: u\nkind: mitigation\ntitle: U\nvuln_id: nope\n---\nbody\n")
    kb = KnowledgeBase(HashingEmbedder(dims=16))
    from moascan.catalog import default_catalog

    assert kb.ingest_documents(tmp_path, default_catalog()) == 2
    assert sorted(src for src, _ in kb.errors) == ["badkind.md", "nohead.md"]
    assert kb.unlinked == {"u"}


def test_missing_directory():
    with pytest.raises(KnowledgeBaseError):
        KnowledgeBase().ingest_documents("/nonexistent/kb")


def test_document_render_parse_roundtrip():
    doc = KnowledgeDocument("x", "code-example", "Title: with colon", "line1\n  line2", "ssrf")
    assert parse_document(render_document(doc)) == doc


def test_context_without_hits_is_catalog_description(catalog):
    vt = catalog["ssrf"]
    block = synthesize_context(vt, [], 100, {})
    assert block.text == vt.description
    assert block.source_doc_ids == ()


def test_context_keeps_whole_documents_in_order(catalog):
    vt = catalog["ssrf"]
    docs = {f"d{i}": _doc(i, "x" * 100) for i in range(3)}
    docs = {d.doc_id: d for d in docs.values()}
    hits = [RetrievalHit("d002", 0.9), RetrievalHit("d000", 0.8), RetrievalHit("d001", 0.7)]
    block = synthesize_context(vt, hits, 80, docs)
    assert block.source_doc_ids == ("d002", "d000")
    assert block.text.startswith(context_header(vt))
    assert block.token_count <= 80


def test_context_truncates_a_single_oversized_document(catalog):
    vt = catalog["ssrf"]
    docs = {"d000": _doc(0, "y" * 1000)}
    block = synthesize_context(vt, [RetrievalHit("d000", 1.0)], 10, docs)
    assert block.source_doc_ids == ("d000",)
    assert len(block.text) == 40


def test_context_rejects_unknown_hit(catalog):
    with pytest.raises(KnowledgeBaseError):
        synthesize_context(catalog["ssrf"], [RetrievalHit("zzz", 1.0)], 10, {})


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(10, 900), min_size=1, max_size=8), st.integers(1, 400))
def test_context_respects_budget(sizes, budget):
    from moascan.catalog import default_catalog

    vt = default_catalog()["ssrf"]
    docs = {f"d{i:03d}": _doc(i, "z" * n) for i, n in enumerate(sizes)}
    hits = [RetrievalHit(d, 1.0) for d in docs]
    block = synthesize_context(vt, hits, budget, docs)
    assert block.token_count <= budget
    assert block.source_doc_ids[0] == "d000"


def test_remote_embedder(monkeypatch):
    def fake_post(url, json, headers, timeout):
        assert url == "https://emb.example/v1/embeddings"
        assert headers == {"Authorization": "Bearer k"}
        return httpx.Response(200, json={"data": [{"embedding": [3.0, 4.0]}]}, request=httpx.Request("POST", url))

    monkeypatch.setenv("EMB_KEY", "k")
    monkeypatch.setattr(httpx, "post", fake_post)
    vec = RemoteEmbedder("https://emb.example/v1/", "m", dims=2, api_key_env="EMB_KEY").embed("hi")
    assert np.allclose(vec, [0.6, 0.8])


def test_remote_embedder_missing_credential(monkeypatch):
    monkeypatch.delenv("EMB_KEY", raising=False)
    with pytest.raises(MissingCredentialError):
        RemoteEmbedder("https://emb.example", "m", dims=2, api_key_env="EMB_KEY").embed("hi")
