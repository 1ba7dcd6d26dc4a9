"""Command-line interface.

Exit codes (stable):

    0  success
    1  findings present and --fail-on-findings was given
    2  usage error
    3  configuration or input-data error
    4  provider error
    5  cassette miss in strict mode
    6  output could not be written
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .catalog import Catalog
from .errors import AgentFailureError, CassetteMissError, IngestError, MoascanError, ProviderError
from .evaluation import EvalReport, diff_reports, evaluate, evaluation_universe, render_diff, render_eval_table
from .pipeline import (
    MODES,
    ScanReport,
    candidates_from_findings,
    exhaustive_tasks,
    run_single_pass,
    run_verification,
)
from .providers import Cassette, ChatClient, ScriptedBackend
from .report import FORMATS, ReportWriteError, dumps_canonical, read_json, render_report, write_text

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PROVIDER = 4
EXIT_CASSETTE_MISS = 5
EXIT_IO = 6

logger = logging.getLogger("moascan")


def exit_code_for(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, AgentFailureError) else exc
    if isinstance(cause, CassetteMissError):
        return EXIT_CASSETTE_MISS
    if isinstance(exc, ProviderError):
        return EXIT_PROVIDER
    if isinstance(exc, (ReportWriteError, IngestError, OSError)):
        return EXIT_IO
    return EXIT_CONFIG


def _emit(text: str, out: str | None) -> None:
    if out:
        write_text(text, out)
    else:
        click.echo(text, nl=False)


def _run_scan(settings, catalog: Catalog, client: ChatClient, mode: str, list_ref: str | None,
              concurrency: int | None, strict: bool | None, candidates: str | None) -> ScanReport:
    config = settings.scan_config(catalog, mode=mode, list_ref=list_ref, concurrency=concurrency, strict=strict)
    corpus = settings.collect_corpus()
    if config.mode == "single-pass":
        return run_single_pass(corpus, config, client, catalog)
    if config.mode == "verify-candidates":
        if not candidates:
            raise click.UsageError("verify-candidates needs --candidates REPORT")
        tasks = candidates_from_findings(ScanReport.from_dict(read_json(candidates)))
    else:
        tasks = exhaustive_tasks(corpus, config.vuln_list)
    kb = settings.load_knowledge_base(catalog)
    return run_verification(corpus, tasks, kb, config, client, catalog)


def _client(cassette: str | None, record_to: str | None) -> tuple[ChatClient, Cassette | None]:
    if cassette:
        loaded = Cassette.load(cassette)
        return ChatClient.replay(loaded), loaded
    sink = Cassette(record_to) if record_to else None
    return ChatClient.live(record_to=sink), None


class _Group(click.Group):
    """Maps package errors to exit codes with a one-line diagnostic."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except MoascanError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exit_code_for(exc))
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_IO)


@click.group(cls=_Group)
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int) -> None:
    """Scan source code for listed vulnerabilities with LLMs and verify the findings."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


config_option = click.option("--config", "config_ref", required=True,
                             help="Config YAML path, or builtin:NAME for a bundled fixture.")
format_option = click.option("--format", "fmt", type=click.Choice(FORMATS), default="json", show_default=True)
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")


def _scan_options(fn):
    for decorator in reversed([
        config_option,
        click.option("--list", "list_ref", default=None, help="Vulnerability list: builtin name or PATH[:KEY]."),
        click.option("--cassette", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Replay model responses from this cassette instead of calling providers."),
        click.option("--record-to", type=click.Path(dir_okay=False), default=None,
                     help="Record live exchanges to this cassette."),
        click.option("--strict/--lenient", default=None, help="Abort on the first provider failure or skip it."),
        click.option("--concurrency", type=click.IntRange(min=1), default=None),
        click.option("--candidates", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Scan report whose findings are the candidates to verify."),
        format_option,
        out_option,
        click.option("--timings", is_flag=True, help="Include wall-clock timings in the JSON report."),
        click.option("--fail-on-findings", is_flag=True, help="Exit 1 when the report contains findings."),
    ]):
        fn = decorator(fn)
    return fn


def _scan_command(ctx, mode, config_ref, list_ref, cassette, record_to, strict, concurrency, candidates,
                  fmt, out, timings, fail_on_findings):
    from .config import load_config

    settings = load_config(config_ref)
    catalog = settings.load_catalog()
    client, loaded = _client(cassette, record_to)
    report = _run_scan(settings, catalog, client, mode or settings.mode, list_ref, concurrency, strict, candidates)
    if loaded is not None:
        report = report.with_provenance(loaded.content_digest())
    for digest in client.cassette_misses:
        click.echo(f"warning: cassette miss {digest}", err=True)
    _emit(render_report(report, fmt, catalog, include_timings=timings), out)
    if record_to and client.record_to is not None:
        client.record_to.save()
    if fail_on_findings and report.findings:
        ctx.exit(EXIT_FINDINGS)


@main.command()
@click.option("--mode", type=click.Choice(MODES), default=None, help="Defaults to the config's mode.")
@_scan_options
@click.pass_context
def scan(ctx, mode, **kwargs):
    """Run a scan and write the report."""
    _scan_command(ctx, mode, **kwargs)


@main.command()
@click.option("--mode", type=click.Choice(MODES[1:]), default="verify-candidates", show_default=True)
@_scan_options
@click.pass_context
def verify(ctx, mode, **kwargs):
    """Verify candidate findings (or every pair) with retrieval and the agent chain."""
    _scan_command(ctx, mode, **kwargs)


@main.command("ingest-kb")
@config_option
@click.option("--docs", type=click.Path(exists=True, file_okay=False), default=None,
              help="Document directory; defaults to the config's knowledge_base.docs.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Snapshot path; defaults to the config's knowledge_base.snapshot.")
def ingest_kb(config_ref, docs, out):
    """Embed the knowledge-base documents and save an index snapshot."""
    from .config import load_config
    from .knowledge import KnowledgeBase

    settings = load_config(config_ref)
    catalog = settings.load_catalog()
    target = Path(out) if out else settings.kb_snapshot
    if target is None:
        raise click.UsageError("no snapshot path: pass --out or set knowledge_base.snapshot")
    kb = KnowledgeBase(settings.make_embedder())
    count = kb.ingest_documents(Path(docs) if docs else settings.kb_docs, catalog)
    kb.save_snapshot(target)
    for source, message in kb.errors:
        click.echo(f"warning: {source}: {message}", err=True)
    click.echo(f"indexed {count} documents into {target} (state {kb.state_digest()[:12]})")


def _evaluate_file(path: str, settings, catalog: Catalog, list_ref: str | None) -> EvalReport:
    data = read_json(path)
    if data.get("kind") == "eval-report":
        return EvalReport.from_dict(data)
    report = ScanReport.from_dict(data)
    if list_ref:
        vuln_list = settings.resolve_list(list_ref, catalog)
    else:
        from .catalog import VulnerabilityList

        snap = report.config.get("vuln_list") or {}
        if not snap:
            raise click.UsageError(f"{path} records no vulnerability list; pass --list")
        vuln_list = VulnerabilityList(snap["name"], tuple(snap["members"])).validate(catalog)
    corpus = settings.collect_corpus()
    truth = settings.load_ground_truth(catalog)
    return evaluate(report, truth, evaluation_universe(corpus.paths, vuln_list, report))


@main.command("eval")
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@config_option
@click.option("--list", "list_ref", default=None, help="Override the list recorded in the report.")
@format_option
@out_option
def eval_cmd(report_path, config_ref, list_ref, fmt, out):
    """Score a scan report against the configured ground truth."""
    from .config import load_config

    settings = load_config(config_ref)
    catalog = settings.load_catalog()
    result = _evaluate_file(report_path, settings, catalog, list_ref)
    text = dumps_canonical(result.as_dict()) if fmt == "json" else render_eval_table(result, catalog)
    _emit(text, out)


@main.command()
@click.argument("before", type=click.Path(exists=True, dir_okay=False))
@click.argument("after", type=click.Path(exists=True, dir_okay=False))
@config_option
@format_option
@out_option
def diff(before, after, config_ref, fmt, out):
    """Show pairs whose classification changed between two evaluations.

    BEFORE and AFTER may be evaluation documents or scan reports.
    """
    from .config import load_config

    settings = load_config(config_ref)
    catalog = settings.load_catalog()
    transitions = diff_reports(
        _evaluate_file(before, settings, catalog, None),
        _evaluate_file(after, settings, catalog, None),
    )
    if fmt == "json":
        text = dumps_canonical({
            "kind": "eval-diff",
            "schema_version": 1,
            "transitions": [
                {"vuln_id": t.vuln_id, "file_path": t.file_path, "before": t.before, "after": t.after}
                for t in transitions
            ],
        })
    else:
        text = render_diff(transitions, catalog)
    _emit(text, out)


@main.command()
@config_option
@click.option("--rules", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Rule table (YAML) answering requests by substring match.")
@click.option("--mode", type=click.Choice(MODES), default=None)
@click.option("--list", "list_ref", default=None)
@click.option("--candidates", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Cassette to write.")
def record(config_ref, rules, mode, list_ref, candidates, out):
    """Run a scan against a scripted rule table and save every exchange as a cassette."""
    from .config import load_config

    settings = load_config(config_ref)
    catalog = settings.load_catalog()
    sink = Cassette(out)
    client = ChatClient.scripted(ScriptedBackend.from_file(rules), record_to=sink)
    _run_scan(settings, catalog, client, mode or settings.mode, list_ref, 1, True, candidates)
    sink.save()
    click.echo(f"recorded {len(sink)} exchanges to {out} (digest {sink.content_digest()[:12]})")


if __name__ == "__main__":
    main()
