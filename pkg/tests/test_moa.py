from __future__ import annotations

import pytest

from moascan.errors import AgentFailureError, CassetteMissError, ContextMismatchError, ProviderError
from moascan.knowledge import ContextBlock
from moascan.moa import AgentChain, CheckTask, CheckTrace, Verdict, aggregate, run_check
from moascan.prompts import PRIOR_OPEN, AgentAssessment, render_assessment_block
from moascan.providers import ChatClient, ModelSpec, ScriptedBackend


def A(verdict, confidence, reasoning=""):
    return AgentAssessment(verdict, confidence, reasoning)


def _agents(n):
    return tuple(ModelSpec("scripted", f"agent-{i}", 100_000, 512) for i in range(n))


def test_majority_vote_example():
    v = aggregate([A("present", 0.8), A("absent", 0.6), A("absent", 0.7)], "majority-vote")
    assert v.decision == "absent"
    assert v.confidence == pytest.approx(0.65)


def test_last_agent_policy():
    assert aggregate([A("present", 0.9), A("absent", 0.3)], "last-agent") == Verdict("absent", 0.3)
    assert aggregate([A("present", 0.9), A("uncertain", 0.4)], "last-agent") == Verdict("absent", 0.4)


def test_majority_vote_ties_and_uncertain():
    assert aggregate([A("present", 0.9), A("absent", 0.2)], "majority-vote") == Verdict("absent", 0.2)
    assert aggregate([A("uncertain", 0.9), A("uncertain", 0.4)], "majority-vote") == Verdict("absent", 0.0)
    assert aggregate([A("uncertain", 0.9)], "majority-vote") == Verdict("absent", 0.9)


def test_confidence_weighted():
    assert aggregate([A("present", 0.9), A("absent", 0.5), A("absent", 0.3)], "confidence-weighted").decision == "present"
    assert aggregate([A("present", 0.5), A("present", 0.5), A("absent", 1.0)], "confidence-weighted").decision == "absent"
    assert aggregate([A("present", 0.0), A("present", 0.0)], "confidence-weighted").decision == "present"
    assert aggregate([A("present", 0.5), A("absent", 0.5)], "confidence-weighted").decision == "absent"
    v = aggregate([A("present", 0.6)], "confidence-weighted")
    assert v == Verdict("present", 0.6)


def test_aggregate_rejects_bad_input():
    with pytest.raises(ValueError):
        aggregate([], "last-agent")
    with pytest.raises(ValueError):
        aggregate([A("present", 1.0)], "median")


def test_chain_validation():
    with pytest.raises(ValueError):
        AgentChain(())
    with pytest.raises(ValueError):
        AgentChain(_agents(1), "median")


def _echo_client(answers, prompts):
    """Agent i answers answers[i]; every user prompt is captured."""
    def respond(request):
        prompts.append(request.messages[-1].content)
        i = int(request.model.model_name.split("-")[1])
        return render_assessment_block(answers[i])

    return ChatClient.scripted(ScriptedBackend(fn=respond))


def test_run_check_threads_only_the_previous_assessment(catalog):
    answers = [A("present", 0.6, "first-marker"), A("absent", 0.7, "second-marker"), A("absent", 0.9, "third")]
    prompts = []
    chain = AgentChain(_agents(3))
    trace = run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("ssrf", "ctx"),
                      chain, _echo_client(answers, prompts))
    assert trace.assessments == tuple(answers)
    assert trace.verdict == Verdict("absent", 0.9)
    assert PRIOR_OPEN not in prompts[0]
    assert "first-marker" in prompts[1] and prompts[1].count(PRIOR_OPEN) == 1
    assert "second-marker" in prompts[2] and "first-marker" not in prompts[2]


def test_full_history_threads_every_assessment(catalog):
    answers = [A("present", 0.6, "m0"), A("absent", 0.7, "m1"), A("absent", 0.9, "m2")]
    prompts = []
    chain = AgentChain(_agents(3), full_history=True)
    run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("ssrf", "ctx"),
              chain, _echo_client(answers, prompts))
    assert prompts[2].count(PRIOR_OPEN) == 2
    assert "m0" in prompts[2] and "m1" in prompts[2]


def _failing_client(fail_index, exc):
    def respond(request):
        if request.model.model_name == f"agent-{fail_index}":
            raise exc
        return render_assessment_block(A("present", 0.8))

    return ChatClient.scripted(ScriptedBackend(fn=respond))


def test_strict_failure_names_agent(catalog):
    with pytest.raises(AgentFailureError) as info:
        run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("ssrf", "c"),
                  AgentChain(_agents(3)), _failing_client(1, ProviderError("boom")))
    assert info.value.index == 1 and info.value.model_name == "agent-1"


def test_lenient_failure_continues(catalog):
    trace = run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("ssrf", "c"),
                      AgentChain(_agents(3)), _failing_client(1, CassetteMissError("d")), strict=False)
    assert [a.verdict for a in trace.assessments] == ["present", "uncertain", "present"]
    assert trace.assessments[1].confidence == 0.0
    assert len(trace.errors) == 1


def test_run_check_rejects_mismatched_context(catalog):
    with pytest.raises(ContextMismatchError):
        run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("open-redirect", "c"),
                  AgentChain(_agents(1)), _echo_client([A("present", 1.0)], []))


def test_trace_dict_roundtrip(catalog):
    trace = run_check(CheckTask("X.java", "ssrf"), "code", catalog["ssrf"], ContextBlock("ssrf", "c"),
                      AgentChain(_agents(2)), _echo_client([A("present", 0.5, "a"), A("absent", 0.25, "b")], []),
                      lines=(1, 9))
    back = CheckTrace.from_dict(trace.as_dict())
    assert back.task == trace.task and back.assessments == trace.assessments
    assert back.verdict == trace.verdict and back.lines == (1, 9)
    assert "elapsed_per_agent" not in trace.as_dict()
    assert len(trace.as_dict(include_timings=True)["elapsed_per_agent"]) == 2
