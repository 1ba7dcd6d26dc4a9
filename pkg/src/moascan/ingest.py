"""Source collection, concatenation and line-based chunking.

Code is treated as plain text. Files are always held in lexicographic path
order so that every prompt and report built from a corpus is reproducible.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IngestError

logger = logging.getLogger(__name__)

DEFAULT_INCLUDE = ("**/*.java", "**/*.kt")
DEFAULT_DELIMITER = "// ==== FILE: {path} ====\n"
CHARS_PER_TOKEN = 4


def estimate_tokens(text: str) -> int:
    """Cheap token estimate: ceil(len(text) / 4), counted in characters."""
    return math.ceil(len(text) / CHARS_PER_TOKEN)


def count_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


def split_lines(text: str) -> list[str]:
    """Split on ``\\n`` only, keeping terminators, so ``"".join`` restores ``text``."""
    lines = text.split("\n")
    out = [line + "\n" for line in lines[:-1]]
    if lines[-1]:
        out.append(lines[-1])
    return out


@dataclass(frozen=True)
class SourceFile:
    path: str
    content: str
    byte_length: int = -1
    line_count: int = -1

    def __post_init__(self):
        if self.byte_length < 0:
            object.__setattr__(self, "byte_length", len(self.content.encode("utf-8")))
        if self.line_count < 0:
            object.__setattr__(self, "line_count", count_lines(self.content))

    @classmethod
    def from_text(cls, path: str, content: str) -> "SourceFile":
        return cls(path=path, content=content)


@dataclass(frozen=True)
class CodeCorpus:
    root: str
    files: tuple[SourceFile, ...] = ()
    errors: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        paths = [f.path for f in self.files]
        if paths != sorted(paths):
            raise IngestError("corpus files must be in lexicographic path order")
        if len(set(paths)) != len(paths):
            raise IngestError("corpus contains duplicate paths")

    @classmethod
    def from_files(cls, root: str, files: Iterable[SourceFile], errors=()) -> "CodeCorpus":
        return cls(root=root, files=tuple(sorted(files, key=lambda f: f.path)), errors=tuple(errors))

    @property
    def total_bytes(self) -> int:
        return sum(f.byte_length for f in self.files)

    @property
    def paths(self) -> list[str]:
        return [f.path for f in self.files]

    def get(self, path: str) -> SourceFile:
        for f in self.files:
            if f.path == path:
                return f
        raise KeyError(path)

    def manifest(self) -> dict:
        return {
            "root": self.root,
            "total_bytes": self.total_bytes,
            "files": [
                {"path": f.path, "byte_length": f.byte_length, "line_count": f.line_count}
                for f in self.files
            ],
            "errors": [{"path": p, "error": e} for p, e in self.errors],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class CodeChunk:
    file_path: str
    start_line: int
    end_line: int
    content: str
    token_estimate: int = field(default=-1)

    def __post_init__(self):
        if self.token_estimate < 0:
            object.__setattr__(self, "token_estimate", estimate_tokens(self.content))
        if self.start_line > self.end_line:
            raise ValueError("start_line must not exceed end_line")


def matches_any(rel_path: str, patterns: Sequence[str]) -> bool:
    """Glob match where ``**/`` may also match zero directories."""
    for pattern in patterns:
        if fnmatch.fnmatchcase(rel_path, pattern):
            return True
        if pattern.startswith("**/") and fnmatch.fnmatchcase(rel_path, pattern[3:]):
            return True
    return False


def _read(path: Path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def collect_sources(
    root: str | os.PathLike,
    include_patterns: Sequence[str] = DEFAULT_INCLUDE,
    max_workers: int = 4,
) -> CodeCorpus:
    """Collect every file under ``root`` matching one of ``include_patterns``.

    Unreadable or non-UTF-8 files are skipped and listed in ``corpus.errors``.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise IngestError(f"source root not found: {root}")
    if not include_patterns:
        raise IngestError("include_patterns must not be empty")

    candidates = []
    for dirpath, dirnames, filenames in os.walk(root_path):
        dirnames.sort()
        for name in filenames:
            full = Path(dirpath) / name
            rel = full.relative_to(root_path).as_posix()
            if matches_any(rel, include_patterns):
                candidates.append((rel, full))

    def load(item):
        rel, full = item
        try:
            return rel, _read(full), None
        except (OSError, UnicodeDecodeError) as exc:
            return rel, None, f"{type(exc).__name__}: {exc}"

    files, errors = [], []
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        for rel, content, err in pool.map(load, candidates):
            if err is not None:
                logger.warning("skipping unreadable file %s (%s)", rel, err)
                errors.append((rel, err))
            else:
                files.append(SourceFile.from_text(rel, content))
    errors.sort()
    return CodeCorpus.from_files(root_path.as_posix(), files, errors)


def concatenate(corpus: CodeCorpus, delimiter_template: str = DEFAULT_DELIMITER) -> str:
    return "".join(delimiter_template.format(path=f.path) + f.content for f in corpus.files)


def split_concatenated(text: str, paths: Sequence[str], delimiter_template: str = DEFAULT_DELIMITER) -> list[str]:
    """Inverse of :func:`concatenate` given the ordered file paths."""
    if not paths:
        if text:
            raise ValueError("text is non-empty but no paths were given")
        return []
    delimiters = [delimiter_template.format(path=p) for p in paths]
    if not text.startswith(delimiters[0]):
        raise ValueError("text does not start with the first delimiter")
    contents = []
    pos = len(delimiters[0])
    for nxt in delimiters[1:]:
        idx = text.find(nxt, pos)
        if idx < 0:
            raise ValueError(f"delimiter {nxt!r} not found")
        contents.append(text[pos:idx])
        pos = idx + len(nxt)
    contents.append(text[pos:])
    return contents


def chunk_file(file: SourceFile, token_budget: int) -> list[CodeChunk]:
    """Split a file on line boundaries into chunks of at most ``token_budget`` tokens.

    A single line longer than the budget becomes a chunk of its own.
    """
    if token_budget <= 0:
        raise ValueError("token_budget must be positive")
    lines = split_lines(file.content)
    chunks: list[CodeChunk] = []
    buf: list[str] = []
    buf_chars = 0
    start = 1
    limit = token_budget * CHARS_PER_TOKEN

    def flush(end_line: int):
        nonlocal buf, buf_chars, start
        chunks.append(CodeChunk(file.path, start, end_line, "".join(buf)))
        buf, buf_chars, start = [], 0, end_line + 1

    for lineno, line in enumerate(lines, start=1):
        if buf and buf_chars + len(line) > limit:
            flush(lineno - 1)
        buf.append(line)
        buf_chars += len(line)
    if buf:
        flush(len(lines))
    return chunks
