from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from moascan.errors import IngestError
from moascan.ingest import (
    CodeCorpus,
    SourceFile,
    chunk_file,
    collect_sources,
    concatenate,
    estimate_tokens,
    matches_any,
    split_concatenated,
    split_lines,
)


def test_estimate_tokens_rounds_up():
    assert estimate_tokens("") == 0
    assert estimate_tokens("a") == 1
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


def test_split_lines_keeps_terminators():
    assert split_lines("a\nb\r\nc") == ["a\n", "b\r\n", "c"]
    assert split_lines("a\n") == ["a\n"]
    assert split_lines("") == []


def test_matches_any_double_star_matches_zero_dirs():
    assert matches_any("Foo.java", ["**/*.java"])
    assert matches_any("a/b/Foo.java", ["**/*.java"])
    assert not matches_any("a/b/Foo.kt", ["**/*.java"])


def test_collect_sources_sorted_and_filtered(tmp_path):
    (tmp_path / "b").mkdir()
    (tmp_path / "b" / "Z.java").write_text("class Z {}\n")
    (tmp_path / "A.java").write_text("class A {}\n")
    (tmp_path / "notes.txt").write_text("skip me")
    corpus = collect_sources(tmp_path, ["**/*.java"])
    assert corpus.paths == ["A.java", "b/Z.java"]
    assert corpus.total_bytes == len("class A {}\n") + len("class Z {}\n")
    assert corpus.get("A.java").line_count == 1


def test_collect_sources_records_undecodable_files(tmp_path):
    (tmp_path / "Good.java").write_text("ok\n")
    (tmp_path / "Bad.java").write_bytes(b"\xff\xfe\x00bad")
    corpus = collect_sources(tmp_path, ["*.java"])
    assert corpus.paths == ["Good.java"]
    assert [p for p, _ in corpus.errors] == ["Bad.java"]


def test_collect_sources_missing_root(tmp_path):
    with pytest.raises(IngestError):
        collect_sources(tmp_path / "nope")


def test_collect_preserves_crlf(tmp_path):
    (tmp_path / "W.java").write_bytes(b"a\r\nb\r\n")
    assert collect_sources(tmp_path, ["*.java"]).get("W.java").content == "a\r\nb\r\n"


def test_corpus_rejects_unsorted_or_duplicate_files():
    with pytest.raises(IngestError):
        CodeCorpus("r", (SourceFile("b", ""), SourceFile("a", "")))
    with pytest.raises(IngestError):
        CodeCorpus("r", (SourceFile("a", ""), SourceFile("a", "")))


def test_manifest_lists_files(corpus):
    manifest = corpus.manifest()
    assert [f["path"] for f in manifest["files"]] == corpus.paths
    assert manifest["total_bytes"] == corpus.total_bytes


def test_bundled_corpus_has_twelve_java_files(corpus):
    assert len(corpus.files) == 12
    assert all(p.endswith(".java") for p in corpus.paths)


def test_concatenate_roundtrip(corpus):
    blob = concatenate(corpus)
    assert split_concatenated(blob, corpus.paths) == [f.content for f in corpus.files]


def test_chunk_single_small_file():
    f = SourceFile("X.java", "one\ntwo\n")
    chunks = chunk_file(f, 100)
    assert len(chunks) == 1
    assert (chunks[0].start_line, chunks[0].end_line) == (1, 2)


def test_chunk_overlong_line_is_its_own_chunk():
    f = SourceFile("X.java", "short\n" + "x" * 50 + "\nend\n")
    chunks = chunk_file(f, 2)
    assert [c.content for c in chunks] == ["short\n", "x" * 50 + "\n", "end\n"]
    assert chunks[1].token_estimate > 2


def test_chunk_rejects_nonpositive_budget():
    with pytest.raises(ValueError):
        chunk_file(SourceFile("X", "a"), 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from(["class A {", "  int x = 1;", "}", "", "// comment", "été", "a\r"]), max_size=60),
    st.booleans(),
)
def test_concatenate_then_split_is_identity(lines, trailing):
    text = "\n".join(lines) + ("\n" if trailing else "")
    corpus = CodeCorpus.from_files("r", [SourceFile("A.java", text), SourceFile("B.java", text[::-1])])
    assert split_concatenated(concatenate(corpus), corpus.paths) == [f.content for f in corpus.files]
