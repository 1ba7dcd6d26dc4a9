"""Walk through the bundled fixture app end to end, fully offline.

1. Single-pass scan with the expanded list, replayed from a cassette.
2. Score it against the fixture's ground truth.
3. Re-check every finding with the three-model verification chain.
4. Show which classifications the verification step changed.

Run:  python demos/reproduce_fixture.py
"""

from __future__ import annotations

from moascan.config import load_config
from moascan.evaluation import diff_reports, evaluate, evaluation_universe, render_diff, render_eval_table
from moascan.pipeline import candidates_from_findings, run_single_pass, run_verification
from moascan.providers import Cassette, ChatClient
from moascan.report import render_report
from moascan.resources import data_path

CASSETTES = data_path("vuldroid", "cassettes")


def main() -> None:
    settings = load_config("builtin:vuldroid")
    catalog = settings.load_catalog()
    corpus = settings.collect_corpus()
    truth = settings.load_ground_truth(catalog)
    print(f"corpus: {len(corpus.files)} files under {settings.corpus_root}")

    scan_config = settings.scan_config(catalog, mode="single-pass")
    scan_client = ChatClient.replay(Cassette.load(CASSETTES / "exp2.jsonl"))
    scan = run_single_pass(corpus, scan_config, scan_client, catalog)
    universe = evaluation_universe(corpus.paths, scan_config.vuln_list, scan)
    before = evaluate(scan, truth, universe)
    print("\n== single-pass scan ==")
    print(render_eval_table(before, catalog))

    verify_config = settings.scan_config(catalog, mode="verify-candidates")
    kb = settings.load_knowledge_base(catalog)
    verify_client = ChatClient.replay(Cassette.load(CASSETTES / "exp3.jsonl"))
    verified = run_verification(corpus, candidates_from_findings(scan), kb, verify_config, verify_client, catalog)
    print("== verification chain ==")
    print(render_report(verified, "table", catalog))

    after = evaluate(verified, truth, universe)
    print("== what verification changed ==")
    print(render_diff(diff_reports(before, after), catalog))
    print(f"precision {before.precision:.3f} -> {after.precision:.3f}")


if __name__ == "__main__":
    main()
