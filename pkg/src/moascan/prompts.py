"""Prompt rendering and model-output parsing.

Templates live in ``data/templates`` as text with ``{{slot}}`` placeholders.
Both parsers are total: whatever a model returns, they produce a value and
never raise.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from . import resources
from .errors import ContextMismatchError, MissingSlotError, PromptError

if TYPE_CHECKING:
    from .catalog import Catalog, VulnerabilityList, VulnerabilityType
    from .knowledge import ContextBlock

_SLOT = re.compile(r"\{\{\s*(\w+)\s*\}\}")

PRIOR_OPEN = "<<<PRIOR ASSESSMENT>>>"
PRIOR_CLOSE = "<<<END PRIOR ASSESSMENT>>>"
VERDICTS = ("present", "absent", "uncertain")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    required_slots: frozenset[str] = frozenset()

    def __post_init__(self):
        found = _SLOT.findall(self.text)
        if not self.required_slots:
            object.__setattr__(self, "required_slots", frozenset(found))
        for slot in self.required_slots:
            n = found.count(slot)
            if n != 1:
                raise MissingSlotError(f"template {self.name!r}: slot {slot!r} appears {n} times, expected once")

    def render(self, **values: Any) -> str:
        missing = self.required_slots - values.keys()
        if missing:
            raise MissingSlotError(f"template {self.name!r}: missing slots {sorted(missing)}")

        def sub(m: re.Match) -> str:
            key = m.group(1)
            if key not in values:
                raise MissingSlotError(f"template {self.name!r}: no value for slot {key!r}")
            return str(values[key])

        # single pass: slot-like text inside substituted values stays literal
        return _SLOT.sub(sub, self.text)


@lru_cache(maxsize=None)
def load_template(name: str, directory: str | None = None) -> PromptTemplate:
    base = Path(directory) if directory else resources.data_path("templates")
    path = base / f"{name}.txt"
    try:
        return PromptTemplate(name, path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise PromptError(f"cannot read template {path}: {exc}") from exc


def scan_system_prompt() -> str:
    return load_template("scan_system").text.strip()


def agent_system_prompt() -> str:
    return load_template("agent_system").text.strip()


def render_scan_prompt(code_blob: str, vuln_list: "VulnerabilityList", catalog: "Catalog") -> str:
    if len(vuln_list) == 0:
        raise PromptError("the vulnerability list is empty")
    names = "\n".join(f"- {catalog.require(v).canonical_name}" for v in vuln_list)
    return load_template("scan").render(vulnerability_list=names, code=code_blob)


@dataclass(frozen=True)
class Finding:
    raw_vuln_name: str
    file_path: str
    reasoning: str | None = None

    def __post_init__(self):
        if not self.raw_vuln_name.strip():
            raise ValueError("raw_vuln_name must not be empty")
        if self.reasoning == "":
            object.__setattr__(self, "reasoning", None)


@dataclass(frozen=True)
class FindingsDocument:
    findings: tuple[Finding, ...] = ()
    parse_warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class AgentAssessment:
    verdict: str
    confidence: float
    reasoning: str = ""
    evidence_lines: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def as_dict(self) -> dict:
        d = {"verdict": self.verdict, "confidence": self.confidence, "reasoning": self.reasoning}
        if self.evidence_lines is not None:
            d["evidence_lines"] = list(self.evidence_lines)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentAssessment":
        ev = d.get("evidence_lines")
        return cls(d["verdict"], float(d["confidence"]), d.get("reasoning", ""), tuple(ev) if ev is not None else None)


def format_confidence(value: float) -> str:
    return repr(float(value))


def render_prior_section(priors: Sequence[tuple[str, AgentAssessment]]) -> str:
    tmpl = load_template("prior")
    return "".join(
        tmpl.render(
            agent_label=label,
            verdict=a.verdict,
            confidence=format_confidence(a.confidence),
            reasoning=a.reasoning,
        )
        for label, a in priors
    )


def render_agent_prompt(
    code: str,
    vuln: "VulnerabilityType",
    context: "ContextBlock",
    prior: AgentAssessment | Sequence[tuple[str, AgentAssessment]] | None = None,
    file_label: str = "(snippet)",
) -> str:
    """Prompt for one chain agent.

    ``prior`` is the preceding agent's assessment, or a list of
    ``(agent_label, assessment)`` pairs when threading the full history.
    """
    if context.vuln_id != vuln.id:
        raise ContextMismatchError(f"context is for {context.vuln_id!r}, not {vuln.id!r}")
    if prior is None:
        priors: list[tuple[str, AgentAssessment]] = []
    elif isinstance(prior, AgentAssessment):
        priors = [("previous agent", prior)]
    else:
        priors = list(prior)
    return load_template("agent").render(
        vuln_name=vuln.canonical_name,
        file_label=file_label,
        vuln_description=vuln.description,
        context=context.text,
        code=code,
        prior_section=render_prior_section(priors),
    )


def render_findings_block(findings: Iterable[Finding]) -> str:
    """Well-formed scan answer, one finding object per line."""
    rows = []
    for f in findings:
        item = {"vulnerability": f.raw_vuln_name, "file": f.file_path}
        if f.reasoning:
            item["reasoning"] = f.reasoning
        rows.append(json.dumps(item, ensure_ascii=False))
    return '```json\n{"findings": [\n' + ",\n".join(rows) + "\n]}\n```\n"


def render_assessment_block(a: AgentAssessment) -> str:
    return "```json\n" + json.dumps(a.as_dict(), ensure_ascii=False) + "\n```\n"


# ---------------------------------------------------------------- parsing

_FENCE = re.compile(r"```[ \t]*([\w+-]*)[^\n]*\n(.*?)```", re.DOTALL)
_FILE_RE = re.compile(r"^[\w$@.\\/-]+\.[A-Za-z][A-Za-z0-9]{0,5}$")
_NAME_KEYS = ("vulnerability", "vulnerability_type", "vulnerability_name", "vuln", "name", "type", "issue")
_FILE_KEYS = ("file", "files", "file_path", "path", "filename", "file_name", "location")
_REASON_KEYS = ("reasoning", "reason", "explanation", "details", "description")
_MAX_JSON_PROBES = 64


def _fenced_blocks(text: str) -> list[tuple[str, str]]:
    return [(m.group(1).lower(), m.group(2)) for m in _FENCE.finditer(text)]


def _json_candidates(text: str) -> list[Any]:
    return [value for value, _ in _json_values(text)]


def _json_values(text: str) -> list[tuple[Any, bool]]:
    """Decoded JSON values, each flagged True when it is a complete fenced block.

    Fenced blocks come first; without any, the first object or array found by
    scanning the text is returned, flagged False since it may be a fragment.
    """
    values = []
    for _, body in _fenced_blocks(text):
        try:
            values.append((json.loads(body), True))
        except (ValueError, RecursionError):
            continue
    if values:
        return values
    decoder = json.JSONDecoder()
    probes = 0
    for m in re.finditer(r"[\[{]", text):
        if probes >= _MAX_JSON_PROBES:
            break
        probes += 1
        try:
            value, _ = decoder.raw_decode(text, m.start())
        except (ValueError, RecursionError):
            continue
        if isinstance(value, (dict, list)):
            values.append((value, False))
            break
    return values


_WRAPPED = re.compile(r'(_{1,3}|"|\')(.+)\1', re.S)


def _clean(s: Any) -> str:
    """Drop markdown emphasis and code marks; underscores and quotes only when they wrap the value."""
    s = re.sub(r"[*`]+", "", str(s)).strip()
    while (m := _WRAPPED.fullmatch(s)) and m.group(2).strip():
        s = m.group(2).strip()
    return s


def _looks_like_file(s: str) -> bool:
    return bool(_FILE_RE.match(s.strip()))


def _split_files(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(_split_files(v))
        return out
    if isinstance(value, dict):
        return _split_files(value.get("file") or value.get("path"))
    return [p for p in (_clean(x) for x in re.split(r"[,;]|\s+and\s+|&", str(value))) if p]


def _first(d: dict, keys: Sequence[str]):
    lowered = {str(k).lower(): v for k, v in d.items()}
    for k in keys:
        if k in lowered and lowered[k] not in (None, ""):
            return lowered[k]
    return None


def _findings_from_json(value: Any, warnings: list[str]) -> list[Finding] | None:
    """Findings from a decoded JSON value, or None if it has no recognizable shape."""
    items: Any = None
    if isinstance(value, dict):
        lowered = {str(k).lower(): v for k, v in value.items()}
        for key in ("findings", "vulnerabilities", "results", "issues"):
            if isinstance(lowered.get(key), list):
                items = lowered[key]
                break
        if items is None and _first(value, _NAME_KEYS) is not None:
            items = [value]
        if items is None and value and all(isinstance(v, (str, list)) for v in value.values()):
            # mapping form: {"<vuln>": [files]} or {"<file>": [vulns]}
            out = []
            for k, v in value.items():
                if _looks_like_file(str(k)):
                    names = v if isinstance(v, list) else [x for x in re.split(r",\s*", str(v)) if x]
                    out.extend(Finding(_clean(n), _clean(k)) for n in names if _clean(n))
                elif _clean(k):
                    files = _split_files(v) or [""]
                    out.extend(Finding(_clean(k), f) for f in files)
            return out
    elif isinstance(value, list):
        items = value
    if items is None:
        return None
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            warnings.append(f"finding #{i} is not an object; skipped")
            continue
        name = _first(item, _NAME_KEYS)
        if name is None or not _clean(name):
            warnings.append(f"finding #{i} has no vulnerability name; skipped")
            continue
        reason = _first(item, _REASON_KEYS)
        files = _split_files(_first(item, _FILE_KEYS)) or [""]
        for f in files:
            out.append(Finding(_clean(name), f, str(reason) if reason is not None else None))
    return out


_JSONISH_NAME = re.compile(r'"(?:vulnerability|vulnerability_type|name|type)"\s*:\s*"((?:[^"\\]|\\.)*)"', re.I)
_JSONISH_FILE = re.compile(r'"(?:file|file_path|path|filename)"\s*:\s*"((?:[^"\\]|\\.)*)"', re.I)
_JSONISH_REASON = re.compile(r'"(?:reasoning|reason)"\s*:\s*"((?:[^"\\]|\\.)*)"', re.I)
_SEPARATORS = (" — ", " – ", " -> ", " → ", " - ", ": ", " in ", "—", "–")
_BULLET = re.compile(r"^\s*(?:[-*•+]|\d+[.)])\s+")
_HEADER_WORDS = {"file", "files", "filename", "file name", "file(s)", "vulnerability", "vulnerability type",
                 "vulnerability type(s)", "type", "issue", "name", "file(s) mentioned"}


def _unescape(s: str) -> str:
    try:
        return json.loads(f'"{s}"')
    except ValueError:
        return s


def _pair_from_parts(left: str, right: str) -> list[Finding]:
    left, right = _clean(left), _clean(right)
    if not left or not right:
        return []
    lfiles = [f for f in _split_files(left)]
    rfiles = [f for f in _split_files(right)]
    if rfiles and all(_looks_like_file(f) for f in rfiles) and not _looks_like_file(left):
        return [Finding(left, f) for f in rfiles]
    if lfiles and all(_looks_like_file(f) for f in lfiles) and not _looks_like_file(right):
        names = [n for n in (_clean(x) for x in re.split(r",\s+", right)) if n]
        return [Finding(n, f) for f in lfiles for n in names]
    return []


def _lenient_line(line: str) -> list[Finding]:
    m_name = _JSONISH_NAME.search(line)
    if m_name:
        m_file = _JSONISH_FILE.search(line)
        m_reason = _JSONISH_REASON.search(line)
        name = _clean(_unescape(m_name.group(1)))
        if not name:
            return []
        files = _split_files(_unescape(m_file.group(1))) if m_file else [""]
        reason = _unescape(m_reason.group(1)) if m_reason else None
        return [Finding(name, f, reason) for f in (files or [""])]
    if "|" in line:
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        cells = [c for c in cells if c]
        if len(cells) >= 2 and not all(set(c) <= set("-: ") for c in cells):
            if cells[0].lower().strip("* ") in _HEADER_WORDS:
                return []
            return _pair_from_parts(cells[0], cells[1])
        return []
    body = _BULLET.sub("", line).strip()
    for sep in _SEPARATORS:
        idx = body.rfind(sep)
        if idx > 0:
            found = _pair_from_parts(body[:idx], body[idx + len(sep):])
            if found:
                return found
    return []


def _dedupe(findings: Iterable[Finding]) -> tuple[Finding, ...]:
    seen, out = set(), []
    for f in findings:
        key = (f.raw_vuln_name, f.file_path)
        if key not in seen:
            seen.add(key)
            out.append(f)
    return tuple(out)


def parse_findings(model_text: str) -> FindingsDocument:
    """Extract (vulnerability, file) findings from a scan answer.

    Tries the fenced JSON block the prompt asks for, then any JSON value in
    the text, then line patterns such as ``Name — File.java``, table rows and
    JSON fragments. Never raises.
    """
    try:
        return _parse_findings(model_text)
    except Exception as exc:  # the parser must stay total
        return FindingsDocument((), (f"parser error {type(exc).__name__}: {exc}", f"raw output: {model_text!r}"))


def _parse_findings(text: str) -> FindingsDocument:
    if not isinstance(text, str):
        text = str(text)
    warnings: list[str] = []
    partial: list[Finding] = []
    for value, complete in _json_values(text):
        found = _findings_from_json(value, warnings)
        if found is None:
            continue
        if complete:
            return FindingsDocument(_dedupe(found), tuple(warnings))
        # an unfenced value may be one fragment of a damaged answer
        partial = found
        warnings.append("no complete structured block; merged JSON and line-pattern findings")
        break
    if "```" in text and not partial:
        warnings.append("no valid structured findings block; fell back to line patterns")
    found = list(partial)
    for line in text.splitlines():
        found.extend(_lenient_line(line))
    if not found:
        warnings.append(f"no findings could be extracted; raw output: {text!r}")
    return FindingsDocument(_dedupe(found), tuple(warnings))


# -------------------------------------------------------- assessments

@lru_cache(maxsize=1)
def keyword_table() -> dict:
    return json.loads(resources.data_path("keywords.json").read_text(encoding="utf-8"))


_VERDICT_WORDS = {
    "present": "present", "yes": "present", "true": "present", "confirmed": "present",
    "vulnerable": "present", "detected": "present",
    "absent": "absent", "no": "absent", "false": "absent", "rejected": "absent",
    "not present": "absent", "not vulnerable": "absent", "not_present": "absent",
    "uncertain": "uncertain", "unknown": "uncertain", "unsure": "uncertain", "inconclusive": "uncertain",
}


def _verdict_word(value: Any) -> str | None:
    if isinstance(value, bool):
        return "present" if value else "absent"
    key = _clean(value).lower().rstrip(".")
    return _VERDICT_WORDS.get(key)


def _confidence(value: Any) -> float | None:
    try:
        if isinstance(value, str):
            s = value.strip()
            pct = s.endswith("%")
            x = float(s.rstrip("%").strip())
            if pct:
                x /= 100.0
        else:
            x = float(value)
    except (TypeError, ValueError, OverflowError):
        return None
    if x != x:  # NaN
        return None
    if 1.0 < x <= 100.0:
        x /= 100.0
    return min(1.0, max(0.0, x))


def _evidence(value: Any) -> tuple[int, ...] | None:
    if not isinstance(value, list):
        return None
    out = []
    for v in value:
        try:
            n = int(v)
        except (TypeError, ValueError, OverflowError):
            continue
        if n > 0:
            out.append(n)
    return tuple(out)


def _assessment_from_json(value: Any) -> AgentAssessment | None:
    if isinstance(value, list) and value and isinstance(value[0], dict):
        value = value[0]
    if not isinstance(value, dict):
        return None
    lowered = {str(k).lower(): v for k, v in value.items()}
    verdict = _verdict_word(lowered.get("verdict", lowered.get("decision", lowered.get("present"))))
    if verdict is None:
        return None
    conf = _confidence(lowered.get("confidence"))
    reasoning = lowered.get("reasoning", lowered.get("reason", ""))
    return AgentAssessment(
        verdict,
        conf if conf is not None else 0.0,
        reasoning if isinstance(reasoning, str) else json.dumps(reasoning),
        _evidence(lowered.get("evidence_lines")),
    )


_KV_VERDICT = re.compile(r"^\W*verdict\W*[:=]\s*(.+?)\s*$", re.I | re.M)
_KV_CONF = re.compile(r"^\W*confidence\W*[:=]\s*([0-9.]+\s*%?)", re.I | re.M)
_KV_REASON = re.compile(r"^\W*reasoning\W*[:=]\s*(.*)", re.I | re.M | re.S)


def _assessment_from_lines(text: str) -> AgentAssessment | None:
    m = _KV_VERDICT.search(text)
    if not m:
        return None
    verdict = _verdict_word(m.group(1))
    if verdict is None:
        return None
    c = _KV_CONF.search(text)
    conf = _confidence(c.group(1)) if c else None
    r = _KV_REASON.search(text)
    return AgentAssessment(verdict, conf if conf is not None else 0.0, r.group(1).strip() if r else "")


def _count_phrases(text: str, phrases: Sequence[str]) -> tuple[int, str]:
    hits = 0
    for phrase in sorted(phrases, key=len, reverse=True):
        pattern = re.compile(r"\b" + re.escape(phrase.casefold()) + r"\b")
        text, n = pattern.subn(" ", text)
        hits += n
    return hits, text


def heuristic_verdict(text: str) -> str | None:
    """Keyword vote from ``keywords.json``; absent phrases are consumed first."""
    table = keyword_table()
    folded = text.casefold()
    absent, rest = _count_phrases(folded, table["absent"])
    present, _ = _count_phrases(rest, table["present"])
    if absent > present:
        return "absent"
    if present > absent:
        return "present"
    return None


def parse_assessment(model_text: str) -> AgentAssessment:
    """Structured verdict/confidence/reasoning, else keyword heuristic, else uncertain."""
    try:
        return _parse_assessment(model_text)
    except Exception:  # the parser must stay total
        return AgentAssessment("uncertain", 0.0, str(model_text))


def _parse_assessment(text: str) -> AgentAssessment:
    if not isinstance(text, str):
        text = str(text)
    for value in _json_candidates(text):
        found = _assessment_from_json(value)
        if found is not None:
            return found
    found = _assessment_from_lines(text)
    if found is not None:
        return found
    verdict = heuristic_verdict(text)
    if verdict is not None:
        return AgentAssessment(verdict, float(keyword_table()["heuristic_confidence"]), text.strip())
    return AgentAssessment("uncertain", 0.0, text)
