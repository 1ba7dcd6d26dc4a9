"""Hand-mutilated scan answers for parser robustness tests.

Each entry is (label, text, expected) where ``expected`` holds the
(vulnerability, file) pairs whose lines survive the mutation intact and so
must still be recovered.
"""

from __future__ import annotations

from moascan.prompts import Finding, render_findings_block

WELL_FORMED = (
    Finding("Webview XSS via DeepLink", "BlogsViewer.java", "url parameter reaches loadUrl"),
    Finding("Intent Sniffing Between Two Applications", "SendMsgtoApp.java", "implicit intent"),
    Finding("Hardcoded Credentials", "Login.java", "password constant"),
    Finding("Insecure Design", "NotesViewer.java", "vague"),
    Finding("Reading User Email via Broadcasts", "EmailViewer.java", "implicit broadcast"),
)
BLOCK = render_findings_block(WELL_FORMED)
LINES = BLOCK.splitlines()
ALL = {(f.raw_vuln_name, f.file_path) for f in WELL_FORMED}
PAIRS = [(f.raw_vuln_name, f.file_path) for f in WELL_FORMED]

MUTATIONS: list[tuple[str, str, set[tuple[str, str]]]] = [
    ("closing fence removed", BLOCK.rstrip().rstrip("`"), ALL),
    ("cut inside the third finding", "\n".join(LINES[:4]) + '\n{"vulnerability": "Hardcoded Cre', set(PAIRS[:2])),
    ("prose preamble", "Sure! Here is my analysis of the code.\n\n" + BLOCK, ALL),
    ("raw JSON between prose", "Findings follow. " + "\n".join(LINES[1:-1]) + " Hope this helps.", ALL),
    ("array never closed", "\n".join(LINES[:-2]) + "\n```", ALL),
    ("trailing comma", BLOCK.replace('"EmailViewer.java", "reasoning": "implicit broadcast"}',
                                     '"EmailViewer.java", "reasoning": "implicit broadcast"},'), ALL),
    ("python dict quoting", BLOCK.replace('"', "'"), set()),
    ("markdown table",
     "| Vulnerability | File |\n|---|---|\n" + "\n".join(f"| {n} | {f} |" for n, f in PAIRS), ALL),
    ("em-dash bullets", "\n".join(f"- {n} — {f}" for n, f in PAIRS), ALL),
    ("arrows", "\n".join(f"{n} -> {f}" for n, f in PAIRS), ALL),
    ("file first", "\n".join(f"{f}: {n}" for n, f in PAIRS), ALL),
    ("vuln to files mapping",
     '```json\n{"Webview XSS via DeepLink": ["BlogsViewer.java"], "Hardcoded Credentials": ["Login.java"]}\n```',
     {PAIRS[0], PAIRS[2]}),
    ("file to vulns mapping",
     '{"NotesViewer.java": ["Insecure Design"], "SendMsgtoApp.java": ["Intent Sniffing Between Two Applications"]}',
     {PAIRS[3], PAIRS[1]}),
    ("numbered list with 'in'", "\n".join(f"{i}. {n} in {f}" for i, (n, f) in enumerate(PAIRS, 1)), ALL),
    ("broken block then good block", "```json\n{\"findings\": [\n```\n\n" + BLOCK, ALL),
    ("renamed keys",
     '```json\n[{"type": "Hardcoded Credentials", "path": "Login.java"}, {"name": "Insecure Design", "filename": "NotesViewer.java"}]\n```',
     {PAIRS[2], PAIRS[3]}),
    ("comma-joined files",
     '{"findings": [{"vulnerability": "Reading User Email via Broadcasts", "file": "EmailViewer.java, MyReceiver.java"}]}',
     {PAIRS[4], ("Reading User Email via Broadcasts", "MyReceiver.java")}),
    ("half JSON half table",
     "\n".join(LINES[2:4]) + "\n| Insecure Design | NotesViewer.java |\n| Reading User Email via Broadcasts | EmailViewer.java |",
     {PAIRS[0], PAIRS[1], PAIRS[3], PAIRS[4]}),
    ("comments inside fence", BLOCK.replace('{"findings": [', '{"findings": [  // generated'), ALL),
    ("no findings in prose", "After careful review I found no vulnerabilities from the list.", set()),
]

assert len(MUTATIONS) == 20
