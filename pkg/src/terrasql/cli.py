"""Command line surface: knowledge-base builds, questions, benchmarks, service.

Exit codes: 0 success, 2 configuration problem (the message names the
key), 3 database unreachable, 1 anything else; every failure prints one
machine-parseable line `error: <kind>: <message>` on stderr.
"""

from __future__ import annotations

import functools
import sys
import warnings
from pathlib import Path
from typing import Optional

import click

from .bench import (
    load_benchmark, load_labels, render_score_table, run_suite, score,
    write_worksheet,
)
from .config import EngineConfig
from .errors import ConfigError, GatewayConnectError, TerraSqlError
from .gateway import ResultTable, connect_gateway, format_preview
from .kb import (
    KnowledgeBase, catalog_fingerprint, enrich_narratives, narrative_digest,
    profile_database,
)
from .llm import LlmGateway
from .orchestrator import Orchestrator
from .runtime import assemble_services
from .semindex import HashingEmbeddingProvider, build_index, serialize_index

EXIT_CONFIG = 2
EXIT_DATABASE = 3


def _fail(kind: str, message: str, exit_code: int) -> None:
    flat = " ".join(str(message).split())
    click.echo(f"error: {kind}: {flat}", err=True)
    sys.exit(exit_code)


def guarded(fn):
    """Map engine errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail("config", str(exc), EXIT_CONFIG)
        except GatewayConnectError as exc:
            _fail("database", str(exc), EXIT_DATABASE)
        except TerraSqlError as exc:
            _fail("engine", str(exc), 1)
        except (click.ClickException, click.exceptions.Exit, SystemExit,
                KeyboardInterrupt):
            raise
        except Exception as exc:
            _fail("unexpected", f"{type(exc).__name__}: {exc}", 1)

    return wrapper


def _resolve_config(path: Optional[str]) -> EngineConfig:
    config = EngineConfig.from_file(path) if path else EngineConfig()
    if not config.kb_dir:
        config.kb_dir = str(Path.home() / ".cache" / "terrasql" / "kb")
    return config


def _services(config: EngineConfig):
    return assemble_services(config, llm=LlmGateway(config.llm))


def _render_bundle(bundle: dict, preview_width: int) -> str:
    lines = [f"Intent: {bundle['canonical_intent']}", ""]
    lines += ["Unreviewed SQL:", bundle["unreviewed_sql"], ""]
    lines += ["Reviewed SQL:", bundle["reviewed_sql"], ""]
    verdict = "approved" if bundle["approved"] else "not approved"
    lines.append(f"Review: {verdict}")
    for correction in bundle["corrections"]:
        note = " ".join(correction["description"].split())
        lines.append(f"  corrected at {correction['stage']}: {note}")
    preview = bundle.get("preview")
    if preview:
        table = ResultTable(
            columns=[(c["name"], c["type"]) for c in preview["columns"]],
            rows=[tuple(row) for row in preview["rows"]],
            truncated=preview["truncated"], elapsed_ms=0.0, statement="")
        lines += ["", "Preview:", format_preview(table, preview_width)]
    return "\n".join(lines)


@click.group()
@click.option("--config", "-c", "config_path", envvar="TERRASQL_CONFIG",
              type=click.Path(), default=None,
              help="Governance config file (or TERRASQL_CONFIG).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str]) -> None:
    """Spatially-aware question answering over a governed database."""
    ctx.obj = config_path


@main.command()
@click.pass_obj
@guarded
def profile(config_path: Optional[str]) -> None:
    """Profile the database schema and contents into the knowledge base."""
    config = _resolve_config(config_path)
    gateway = connect_gateway(config)
    kb = KnowledgeBase(config.kb_dir)
    columns, tables = profile_database(gateway, config.thresholds)
    kb.save_profiles(catalog_fingerprint(gateway), columns, tables)
    click.echo(f"profiled {len(tables)} tables, {len(columns)} columns "
               f"-> {config.kb_dir}")


@main.command()
@click.pass_obj
@guarded
def enrich(config_path: Optional[str]) -> None:
    """Write schema narratives from the stored profiles."""
    config = _resolve_config(config_path)
    kb = KnowledgeBase(config.kb_dir)
    columns, tables = kb.load_profiles()
    if not tables:
        _fail("engine", "no stored profiles; run `profile` first", 1)
    llm = LlmGateway(config.llm) if config.llm.mode == "live" else None
    narratives = enrich_narratives(columns, tables, llm)
    kb.save_narratives(narrative_digest(narratives), narratives)
    click.echo(f"wrote {len(narratives)} narratives -> {config.kb_dir}")


@main.command()
@click.pass_obj
@guarded
def index(config_path: Optional[str]) -> None:
    """Build the semantic search index over the narratives."""
    config = _resolve_config(config_path)
    kb = KnowledgeBase(config.kb_dir)
    narratives = kb.load_narratives()
    if not narratives:
        _fail("engine", "no stored narratives; run `enrich` first", 1)
    provider = HashingEmbeddingProvider(
        dim=config.embedding.dim, seed=config.embedding.seed)
    built = build_index(narratives, provider)
    fingerprint = kb.fingerprint("profiles") or ""
    kb.save_index(fingerprint, serialize_index(built))
    click.echo(f"indexed {len(narratives)} narratives -> {config.kb_dir}")


@main.command()
@click.argument("question")
@click.pass_obj
@guarded
def ask(config_path: Optional[str], question: str) -> None:
    """Answer one question: intent, both SQL statements, and a preview."""
    config = _resolve_config(config_path)
    services = _services(config)
    orchestrator = Orchestrator(services)
    session = orchestrator.create_session()
    reply = orchestrator.handle_message(session, question)
    kind = reply["kind"]
    if kind == "answer":
        click.echo(_render_bundle(reply["bundle"],
                                  services.thresholds.preview_width))
        return
    if kind == "clarification":
        _fail("clarification", reply["question"], 1)
    if kind == "rejection":
        _fail("rejected", reply["reason"], 1)
    _fail("engine", reply.get("message", "pipeline failure"), 1)


@main.command()
@click.pass_obj
@guarded
def chat(config_path: Optional[str]) -> None:
    """Multi-turn conversation on the terminal; 'exit' ends it."""
    config = _resolve_config(config_path)
    services = _services(config)
    orchestrator = Orchestrator(services)
    session = orchestrator.create_session()
    click.echo("Ask about the data. Commands: exit | satisfied [note] | "
               "unsatisfied [note]")
    while True:
        try:
            text = click.prompt("you", prompt_suffix="> ")
        except (EOFError, click.exceptions.Abort):
            break
        stripped = text.strip()
        if not stripped:
            continue
        if stripped.lower() in ("exit", "quit"):
            break
        verdict, _, note = stripped.partition(" ")
        if verdict in ("satisfied", "unsatisfied"):
            with warnings.catch_warnings():
                # rating before any answer warns and records nothing
                warnings.simplefilter("ignore")
                record = orchestrator.submit_feedback(session, verdict,
                                                      note.strip())
            acknowledged = "recorded" if record else "nothing to rate yet"
            click.echo(f"feedback {acknowledged}")
            continue
        reply = orchestrator.handle_message(session, stripped)
        kind = reply["kind"]
        if kind == "answer":
            click.echo(_render_bundle(reply["bundle"],
                                      services.thresholds.preview_width))
        elif kind == "clarification":
            click.echo(f"assistant> {reply['question']}")
        elif kind == "rejection":
            click.echo(f"assistant> I cannot help with that: "
                       f"{reply['reason']}")
        else:
            click.echo(f"assistant> {reply.get('message', 'try again')}")
    click.echo("bye")


@main.command()
@click.argument("suite", type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Human label file; prints the accuracy table.")
@click.option("--worksheet", "worksheet_path", type=click.Path(),
              help="Where to write the labeling worksheet "
                   "(default: <suite>.worksheet.jsonl).")
@click.pass_obj
@guarded
def bench(config_path: Optional[str], suite: str,
          labels_path: Optional[str],
          worksheet_path: Optional[str]) -> None:
    """Run a benchmark suite; score it when labels are provided."""
    config = _resolve_config(config_path)
    items = load_benchmark(suite)
    services = _services(config)
    records = run_suite(
        items, services,
        progress=lambda r: click.echo(
            f"  {r.item_id}: "
            f"{'ok' if r.failure is None else 'failed'}", err=True))
    completed = sum(1 for r in records if r.failure is None)
    click.echo(f"ran {len(records)} items ({completed} completed)")
    if labels_path:
        labels = load_labels(labels_path,
                             valid_ids=[i.item_id for i in items])
        click.echo(render_score_table(score(records, labels)))
    else:
        target = worksheet_path or f"{suite}.worksheet.jsonl"
        write_worksheet(records, target)
        click.echo(f"worksheet written to {target}")


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.pass_obj
@guarded
def serve(config_path: Optional[str], port: int, host: str) -> None:
    """Start the HTTP service."""
    from . import service as service_module

    config = _resolve_config(config_path)
    app = service_module.create_app(services=_services(config))
    click.echo(f"serving on http://{host}:{port}")
    service_module.serve(app, host=host, port=port)


@main.group()
def fixtures() -> None:
    """Maintain the bundled deterministic replay exchanges."""


@fixtures.command("record")
@click.option("--path", type=click.Path(), default=None,
              help="Target file (default: the bundled fixture file).")
@guarded
def fixtures_record(path: Optional[str]) -> None:
    """Re-record every scripted conversation."""
    from .fixtures import record_bundled_fixtures

    ok, report = record_bundled_fixtures(path)
    for line in report:
        click.echo(line)
    if not ok:
        sys.exit(1)


@fixtures.command("verify")
@click.option("--path", type=click.Path(), default=None,
              help="Fixture file to check (default: the bundled one).")
@guarded
def fixtures_verify(path: Optional[str]) -> None:
    """Replay every conversation and demand byte-identical statements."""
    from .fixtures import verify_bundled_fixtures

    ok, report = verify_bundled_fixtures(path)
    for line in report:
        click.echo(line)
    if not ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
