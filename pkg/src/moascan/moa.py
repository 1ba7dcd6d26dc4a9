"""Sequential mixture-of-agents verification of one (file, vulnerability) check."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .errors import AgentFailureError, ContextMismatchError, ProviderError
from .prompts import AgentAssessment, agent_system_prompt, parse_assessment, render_agent_prompt
from .providers import ChatMessage, ChatRequest, ModelSpec

if TYPE_CHECKING:
    from .catalog import VulnerabilityType
    from .knowledge import ContextBlock
    from .providers import ChatClient

POLICIES = ("last-agent", "majority-vote", "confidence-weighted")
DEFAULT_AGENT_MAX_TOKENS = 1024


@dataclass(frozen=True)
class AgentChain:
    agents: tuple[ModelSpec, ...]
    aggregation_policy: str = "last-agent"
    full_history: bool = False
    max_tokens: int = DEFAULT_AGENT_MAX_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise ValueError("an agent chain needs at least one agent")
        if self.aggregation_policy not in POLICIES:
            raise ValueError(f"unknown aggregation policy {self.aggregation_policy!r}")

    def request_max_tokens(self, agent: ModelSpec) -> int:
        return min(self.max_tokens, agent.max_output_tokens)


@dataclass(frozen=True, order=True)
class CheckTask:
    file_path: str
    vuln_id: str


@dataclass(frozen=True)
class Verdict:
    decision: str
    confidence: float

    def __post_init__(self):
        if self.decision not in ("present", "absent"):
            raise ValueError("decision must be present or absent")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class CheckTrace:
    task: CheckTask
    assessments: tuple[AgentAssessment, ...]
    verdict: Verdict
    agent_models: tuple[str, ...]
    elapsed_per_agent: tuple[float, ...] = ()
    errors: tuple[str, ...] = ()
    lines: tuple[int, int] | None = None

    def as_dict(self, include_timings: bool = False) -> dict:
        d = {
            "file_path": self.task.file_path,
            "vuln_id": self.task.vuln_id,
            "verdict": {"decision": self.verdict.decision, "confidence": self.verdict.confidence},
            "agents": [
                {"model": m, **a.as_dict()} for m, a in zip(self.agent_models, self.assessments)
            ],
            "errors": list(self.errors),
        }
        if self.lines is not None:
            d["lines"] = list(self.lines)
        if include_timings:
            d["elapsed_per_agent"] = list(self.elapsed_per_agent)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CheckTrace":
        agents = d.get("agents", [])
        return cls(
            task=CheckTask(d["file_path"], d["vuln_id"]),
            assessments=tuple(AgentAssessment.from_dict(a) for a in agents),
            verdict=Verdict(d["verdict"]["decision"], float(d["verdict"]["confidence"])),
            agent_models=tuple(a.get("model", "") for a in agents),
            elapsed_per_agent=tuple(d.get("elapsed_per_agent", ())),
            errors=tuple(d.get("errors", ())),
            lines=tuple(d["lines"]) if d.get("lines") else None,
        )


def aggregate(assessments: Sequence[AgentAssessment], policy: str = "last-agent") -> Verdict:
    """Combine agent assessments into a present/absent verdict.

    ``uncertain`` never counts as present. Ties resolve to absent: the
    pipeline exists to drop unsupported findings.

    - last-agent: the final assessment decides; its confidence is kept.
    - majority-vote: present iff more present than absent votes; confidence
      is the mean over the winning side.
    - confidence-weighted: present iff the summed present confidence beats the
      summed absent confidence; equal sums give absent unless nobody voted
      absent. Confidence is the winning sum divided by the number of agents.

    A single assessment yields the same verdict under every policy.
    """
    if not assessments:
        raise ValueError("cannot aggregate an empty list of assessments")
    if policy not in POLICIES:
        raise ValueError(f"unknown aggregation policy {policy!r}")
    if policy == "last-agent" or len(assessments) == 1:
        last = assessments[-1]
        decision = "present" if last.verdict == "present" else "absent"
        return Verdict(decision, last.confidence)

    present = [a.confidence for a in assessments if a.verdict == "present"]
    absent = [a.confidence for a in assessments if a.verdict == "absent"]
    if policy == "majority-vote":
        if len(present) > len(absent):
            return Verdict("present", sum(present) / len(present))
        return Verdict("absent", sum(absent) / len(absent) if absent else 0.0)
    if policy == "confidence-weighted":
        wp, wa = sum(present), sum(absent)
        # zero-confidence unanimous present votes must not lose to an empty side
        if wp > wa or (wp == wa and present and not absent):
            return Verdict("present", min(1.0, wp / len(assessments)))
        return Verdict("absent", min(1.0, wa / len(assessments)))
    raise ValueError(f"unknown aggregation policy {policy!r}")


def run_check(
    task: CheckTask,
    code: str,
    vuln: "VulnerabilityType",
    context: "ContextBlock",
    chain: AgentChain,
    client: "ChatClient",
    strict: bool = True,
    file_label: str | None = None,
    lines: tuple[int, int] | None = None,
) -> CheckTrace:
    """Run every agent in order, each seeing the previous agent's assessment.

    In strict mode a provider failure aborts with AgentFailureError naming the
    agent index; otherwise the failed agent counts as (uncertain, 0) and the
    chain continues.
    """
    if context.vuln_id != task.vuln_id or vuln.id != task.vuln_id:
        raise ContextMismatchError(f"context/vulnerability do not match task {task}")
    if not code:
        raise ValueError("code must not be empty")
    label = file_label or task.file_path
    assessments: list[AgentAssessment] = []
    elapsed: list[float] = []
    errors: list[str] = []
    system = agent_system_prompt()

    for i, agent in enumerate(chain.agents):
        if not assessments:
            prior = None
        elif chain.full_history:
            prior = [(f"agent {j + 1} ({chain.agents[j].model_name})", a) for j, a in enumerate(assessments)]
        else:
            prior = [(f"agent {i} ({chain.agents[i - 1].model_name})", assessments[-1])]
        prompt = render_agent_prompt(code, vuln, context, prior=prior, file_label=label)
        request = ChatRequest(
            model=agent,
            messages=(ChatMessage("system", system), ChatMessage("user", prompt)),
            temperature=0.0,
            max_tokens=chain.request_max_tokens(agent),
        )
        start = time.perf_counter()
        try:
            response = client.complete(request)
            assessment = parse_assessment(response.content)
        except ProviderError as exc:
            if strict:
                raise AgentFailureError(i, agent.model_name, exc) from exc
            errors.append(f"agent {i} ({agent.model_name}): {exc}")
            assessment = AgentAssessment("uncertain", 0.0, f"agent failed: {exc}")
        elapsed.append(time.perf_counter() - start)
        assessments.append(assessment)

    return CheckTrace(
        task=task,
        assessments=tuple(assessments),
        verdict=aggregate(assessments, chain.aggregation_policy),
        agent_models=tuple(a.model_name for a in chain.agents),
        elapsed_per_agent=tuple(elapsed),
        errors=tuple(errors),
        lines=lines,
    )
