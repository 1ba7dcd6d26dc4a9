"""Point the scanner at a small project of your own.

The model here is a scripted stand-in so the script runs without network
access or API keys. Replace ``ChatClient.scripted(...)`` with
``ChatClient.live()`` and fill in real ``ModelSpec`` entries (base_url and
api_key_env) to talk to an actual provider.

Run:  python demos/scan_your_own_code.py
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from moascan import (
    AgentChain,
    ChatClient,
    HashingEmbedder,
    KnowledgeBase,
    KnowledgeDocument,
    ModelSpec,
    ScanConfig,
    ScriptedBackend,
    collect_sources,
    default_catalog,
    run_single_pass,
    run_verification,
)
from moascan.catalog import VulnerabilityList
from moascan.pipeline import candidates_from_findings
from moascan.prompts import AgentAssessment, Finding, render_assessment_block, render_findings_block
from moascan.report import render_report

SOURCES = {
    "net/Fetcher.java": "class Fetcher {\n  String get(String url) { return http.get(url); }\n}\n",
    "auth/Login.java": 'class Login {\n  static final String PASSWORD = "hunter2";\n}\n',
}


def scanner(request):
    # a careless first pass: one real issue, one guess
    return render_findings_block([
        Finding("Hardcoded Credentials", "Login.java", "password literal"),
        Finding("SSRF", "Fetcher.java", "url comes from the caller"),
    ])


def reviewer(request):
    prompt = request.messages[-1].content
    if "hunter2" in prompt:
        return render_assessment_block(AgentAssessment("present", 0.9, "literal password in source"))
    return render_assessment_block(AgentAssessment("absent", 0.7, "url is validated by the caller"))


def main() -> None:
    catalog = default_catalog()
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        for rel, text in SOURCES.items():
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            (root / rel).write_text(text)
        corpus = collect_sources(root, ["**/*.java"])

    vulns = VulnerabilityList("mine", ("ssrf", "hardcoded-credentials"))
    model = ModelSpec("scripted", "stand-in", 32_000, 1024)
    scan = run_single_pass(corpus, ScanConfig("single-pass", vulns, scan_model=model),
                           ChatClient.scripted(ScriptedBackend(fn=scanner)), catalog)
    print(render_report(scan, "table", catalog))

    kb = KnowledgeBase(HashingEmbedder())
    kb.add_documents([
        KnowledgeDocument("ssrf-notes", "description", "SSRF", "Server fetches a URL chosen by the attacker.", "ssrf"),
        KnowledgeDocument("creds-notes", "description", "Credentials", "Secrets committed to source.",
                          "hardcoded-credentials"),
    ])
    chain = AgentChain((model, model), "majority-vote")
    verified = run_verification(corpus, candidates_from_findings(scan), kb,
                                ScanConfig("verify-candidates", vulns, chain=chain),
                                ChatClient.scripted(ScriptedBackend(fn=reviewer)), catalog)
    print(render_report(verified, "table", catalog))


if __name__ == "__main__":
    main()
