"""Vulnerability catalog, scan lists, name normalization and ground truth."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import yaml

from . import resources
from .errors import (
    AmbiguousAliasError,
    CatalogParseError,
    DuplicateIdError,
    UnknownVulnError,
)

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def fold_name(raw: str) -> str:
    """Case- and punctuation-insensitive key used for alias comparison."""
    text = unicodedata.normalize("NFKD", raw).casefold()
    return _NON_ALNUM.sub("", text)


@dataclass(frozen=True)
class VulnerabilityType:
    id: str
    canonical_name: str
    aliases: frozenset[str] = frozenset()
    description: str = ""
    cwe_refs: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "aliases", frozenset(self.aliases) | {self.canonical_name})

    @property
    def folded_aliases(self) -> frozenset[str]:
        return frozenset(fold_name(a) for a in self.aliases)


class Catalog(Mapping[str, VulnerabilityType]):
    """Immutable id -> VulnerabilityType mapping with an alias index."""

    def __init__(self, types: Iterable[VulnerabilityType]):
        self._types: dict[str, VulnerabilityType] = {}
        for t in types:
            if t.id in self._types:
                raise DuplicateIdError(f"duplicate vulnerability id {t.id!r}")
            self._types[t.id] = t
        self._alias_index: dict[str, set[str]] = {}
        for t in self._types.values():
            for key in t.folded_aliases:
                self._alias_index.setdefault(key, set()).add(t.id)

    def __getitem__(self, vuln_id: str) -> VulnerabilityType:
        return self._types[vuln_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._types)

    def __len__(self) -> int:
        return len(self._types)

    def require(self, vuln_id: str) -> VulnerabilityType:
        try:
            return self._types[vuln_id]
        except KeyError:
            raise UnknownVulnError(f"unknown vulnerability id {vuln_id!r}") from None

    def normalize_name(self, raw: str) -> str | None:
        return normalize_name(raw, self)


def normalize_name(raw: str, catalog: Catalog) -> str | None:
    """Resolve a model-reported name to a catalog id.

    Returns None when no alias matches; raises AmbiguousAliasError when the
    folded name belongs to more than one entry.
    """
    key = fold_name(raw)
    if not key:
        return None
    matches = catalog._alias_index.get(key, set())
    if len(matches) > 1:
        raise AmbiguousAliasError(raw, list(matches))
    return next(iter(matches), None)


def _entry_lines(text: str, key: str) -> list[int]:
    """1-based line numbers of each item of the top-level sequence ``key``."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return []
    if root is None or not isinstance(root, yaml.MappingNode):
        return []
    for k, v in root.value:
        if k.value == key and isinstance(v, yaml.SequenceNode):
            return [item.start_mark.line + 1 for item in v.value]
    return []


def _load_yaml(text: str, source: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise CatalogParseError(f"{source}: invalid YAML{where}: {exc}") from exc


def parse_catalog(text: str, source: str = "<catalog>") -> Catalog:
    data = _load_yaml(text, source)
    if data is None:
        return Catalog([])
    if not isinstance(data, dict) or not isinstance(data.get("vulnerabilities", []), list):
        raise CatalogParseError(f"{source}: expected a mapping with a 'vulnerabilities' list")
    lines = _entry_lines(text, "vulnerabilities")
    types: list[VulnerabilityType] = []
    seen: dict[str, int] = {}
    for i, entry in enumerate(data.get("vulnerabilities") or []):
        line = lines[i] if i < len(lines) else None
        where = f"{source}:{line}" if line else source
        if not isinstance(entry, dict) or "id" not in entry or "canonical_name" not in entry:
            raise CatalogParseError(f"{where}: entry needs 'id' and 'canonical_name'")
        vid = str(entry["id"])
        if vid in seen:
            raise DuplicateIdError(f"{where}: duplicate id {vid!r} (first defined at line {seen[vid]})")
        seen[vid] = line or 0
        aliases = entry.get("aliases") or []
        if not isinstance(aliases, list):
            raise CatalogParseError(f"{where}: 'aliases' must be a list")
        types.append(
            VulnerabilityType(
                id=vid,
                canonical_name=str(entry["canonical_name"]),
                aliases=frozenset(str(a) for a in aliases),
                description=str(entry.get("description") or "").strip(),
                cwe_refs=tuple(str(c) for c in entry.get("cwe_refs") or ()),
            )
        )
    return Catalog(types)


def load_catalog(path: str | Path) -> Catalog:
    path = Path(path)
    return parse_catalog(path.read_text(encoding="utf-8"), str(path))


def default_catalog() -> Catalog:
    return load_catalog(resources.data_path("catalog.yaml"))


@dataclass(frozen=True)
class VulnerabilityList:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise CatalogParseError(f"list {self.name!r} has duplicate members")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def validate(self, catalog: Catalog) -> "VulnerabilityList":
        for m in self.members:
            catalog.require(m)
        return self


def load_lists(path: str | Path) -> dict[str, VulnerabilityList]:
    path = Path(path)
    data = _load_yaml(path.read_text(encoding="utf-8"), str(path)) or {}
    if not isinstance(data, dict):
        raise CatalogParseError(f"{path}: expected a mapping of list name -> members")
    out = {}
    for key, body in data.items():
        if isinstance(body, dict):
            name, members = body.get("name", key), body.get("members") or []
        else:
            name, members = key, body or []
        out[str(key)] = VulnerabilityList(str(name), tuple(str(m) for m in members))
    return out


def _builtin(key: str) -> VulnerabilityList:
    return load_lists(resources.data_path("lists.yaml"))[key]


def builtin_vuldroid_list() -> VulnerabilityList:
    """The eight issues documented for the Vuldroid app."""
    return _builtin("vuldroid")


def builtin_expanded_list() -> VulnerabilityList:
    """The expanded scan list (Vuldroid issues mixed with common web/mobile types)."""
    return _builtin("expanded")


def resolve_list(ref: str, catalog: Catalog) -> VulnerabilityList:
    """Resolve a list reference: a builtin key, or a path to a lists file (``path[:key]``)."""
    builtins = load_lists(resources.data_path("lists.yaml"))
    if ref in builtins:
        return builtins[ref].validate(catalog)
    path, key = ref, ""
    if not Path(ref).exists() and ":" in ref:
        path, _, key = ref.rpartition(":")
    if not Path(path).exists():
        raise CatalogParseError(f"unknown list {ref!r}: not a builtin list and no such file")
    lists = load_lists(path)
    if key:
        if key not in lists:
            raise CatalogParseError(f"{path} has no list named {key!r}")
        chosen = lists[key]
    elif len(lists) == 1:
        chosen = next(iter(lists.values()))
    else:
        raise CatalogParseError(f"{path} holds several lists; pick one with {path}:<name>")
    return chosen.validate(catalog)


def path_matches(path: str, truth_path: str) -> bool:
    """Repository-relative suffix rule: ``a/b/Foo.java`` matches ``Foo.java``."""
    path = path.replace("\\", "/")
    truth_path = truth_path.replace("\\", "/").lstrip("/")
    return path == truth_path or path.endswith("/" + truth_path)


@dataclass(frozen=True)
class GroundTruth:
    """Known (vuln_id, file) pairs.

    ``headline_ids`` are the documented issues the detection rate is computed
    over; supplementary pairs only affect TP/FP/FN classification.
    """

    entries: frozenset[tuple[str, str]] = frozenset()
    headline_ids: frozenset[str] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.headline_ids is None:
            object.__setattr__(self, "headline_ids", frozenset(v for v, _ in self.entries))

    @property
    def vuln_ids(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.entries)

    def contains(self, vuln_id: str, path: str) -> bool:
        return any(v == vuln_id and path_matches(path, t) for v, t in self.entries)

    def files_for(self, vuln_id: str) -> list[str]:
        return sorted(t for v, t in self.entries if v == vuln_id)


def _truth_section(data: dict, key: str, source: str) -> list[tuple[str, str]]:
    section = data.get(key) or {}
    if not isinstance(section, dict):
        raise CatalogParseError(f"{source}: '{key}' must map vuln ids to file lists")
    pairs = []
    for vid, files in section.items():
        if isinstance(files, str):
            files = [files]
        if not isinstance(files, list):
            raise CatalogParseError(f"{source}: files for {vid!r} must be a list")
        pairs.extend((str(vid), str(f)) for f in files)
    return pairs


def load_ground_truth(path: str | Path, catalog: Catalog) -> GroundTruth:
    path = Path(path)
    data = _load_yaml(path.read_text(encoding="utf-8"), str(path))
    if data is None:
        return GroundTruth()
    if not isinstance(data, dict):
        raise CatalogParseError(f"{path}: expected a mapping")
    main = _truth_section(data, "entries", str(path))
    extra = _truth_section(data, "supplementary", str(path))
    for vid, _ in main + extra:
        if vid not in catalog:
            raise UnknownVulnError(f"{path}: unknown vulnerability id {vid!r}")
    return GroundTruth(
        entries=frozenset(main + extra),
        headline_ids=frozenset(v for v, _ in main),
    )
