"""Self-verification loop for generated SQL.

Each attempt dry-runs the statement, asks the logic checker whether the
sample answers the question, and cross-validates the statement against the
profiled schema (existence, literal types, value membership, spatial rules).
Missing output columns are injected in place; anything else regenerates with
the findings as feedback. The loop is bounded and never raises: callers
always get a ReviewOutcome, approved or not.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from ..errors import (
    BlockedStatementError, ColumnInjectionError, EscalationError, ExecutionError,
    LlmError, SqlParseError,
)
from ..gateway import DbGateway, ExecutionPolicy, ResultTable, format_preview
from ..llm import LlmGateway, render_prompt
from ..sqlkit import (
    GeometryColumn, SpatialFinding, StatementClass, check_spatial_rules,
    classify_statement, extract_manifest, inject_columns,
)
from ..sqlkit.nodes import Binary, ColumnRef, Literal, TableRef
from ..sqlkit.parser import parse_sql
from ..sqlkit.walk import walk
from .generation import generate_sql
from .messages import LogicalPlan, MessageStatus, SchemaMapping, SqlArtifact
from .rendering import render_rules_prose

if TYPE_CHECKING:
    from ..runtime import PipelineServices

REVIEW_STAGES = (
    "logic_check", "spatial_rules", "double_check", "dry_run", "add_column",
    "regenerate",
)

_VERDICT_SCHEMA = {"ok": "boolean", "reason": "string"}


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str

    def __post_init__(self) -> None:
        if not self.ok and not self.reason:
            object.__setattr__(self, "reason", "unspecified")


@dataclass(frozen=True)
class Correction:
    stage: str
    description: str
    sql_before: str
    sql_after: str

    def __post_init__(self) -> None:
        if self.stage not in REVIEW_STAGES:
            raise ValueError(f"unknown review stage: {self.stage!r}")

    def to_dict(self) -> dict:
        return {"stage": self.stage, "description": self.description,
                "sql_before": self.sql_before, "sql_after": self.sql_after}


@dataclass
class ReviewOutcome:
    final_sql: str
    approved: bool
    corrections: list[Correction] = field(default_factory=list)
    findings: list[SpatialFinding] = field(default_factory=list)
    attempts: int = 0
    preview: Optional[ResultTable] = None
    first_error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "final_sql": self.final_sql,
            "approved": self.approved,
            "corrections": [c.to_dict() for c in self.corrections],
            "findings": [
                {"rule_id": f.rule_id, "severity": f.severity,
                 "location": f.location, "message": f.message,
                 "suggested_fix": f.suggested_fix}
                for f in self.findings],
            "attempts": self.attempts,
            "first_error": self.first_error,
        }


def logic_check(
    question: str,
    sql: str,
    preview: str,
    llm_gateway: LlmGateway,
) -> Verdict:
    """LLM judgment of whether the sampled output answers the question.

    Any failure to produce a valid verdict counts as a rejection; a dead
    model must never approve a statement."""
    prompt = render_prompt(
        "logic_check", question=question, sql=sql, preview=preview,
        rules=render_rules_prose())
    try:
        parsed = llm_gateway.complete_structured(
            "logic_check", prompt, _VERDICT_SCHEMA)
    except (EscalationError, LlmError):
        return Verdict(ok=False, reason="verdict unavailable")
    return Verdict(ok=bool(parsed["ok"]), reason=str(parsed.get("reason", "")))


def dry_run(
    sql: str,
    gateway: DbGateway,
    session_id: str = "-",
) -> tuple[Optional[ResultTable], Optional[str]]:
    """Capped read-only execution; errors are captured, not raised."""
    policy = ExecutionPolicy(row_cap=10)
    try:
        result = gateway.execute_readonly(sql, policy, session_id=session_id)
        return result, None
    except (ExecutionError, BlockedStatementError) as exc:
        return None, str(exc)


def _geometry_columns(services: "PipelineServices") -> list[GeometryColumn]:
    columns = []
    for profile in services.table_profiles:
        if profile.has_geometry and profile.geometry_column:
            columns.append(GeometryColumn(
                table=profile.table_name, column=profile.geometry_column,
                subtype=profile.geometry_subtype or "GEOMETRY",
                srid=profile.srid))
    return columns


def _binding_map(statements) -> dict[str, str]:
    bindings: dict[str, str] = {}
    for stmt in statements:
        for node in walk(stmt):
            if isinstance(node, TableRef):
                bindings[node.binding_name()] = node.relation_name()
    return bindings


def _literal_value(literal: Literal):
    if literal.kind == "string":
        return literal.text[1:-1].replace("''", "'")
    if literal.kind == "number":
        try:
            return int(literal.text)
        except ValueError:
            return float(literal.text)
    return None


def _equality_literals(statements, bindings, sole_table):
    """(table or None, column, literal value) for each col = literal predicate."""
    pairs = []
    for stmt in statements:
        for node in walk(stmt):
            if not (isinstance(node, Binary) and node.op == "="):
                continue
            column, literal = None, None
            for left, right in ((node.left, node.right), (node.right, node.left)):
                if isinstance(left, ColumnRef) and isinstance(right, Literal):
                    column, literal = left, right
                    break
            if column is None or literal is None:
                continue
            value = _literal_value(literal)
            if value is None:
                continue
            parts = column.normalized()
            if len(parts) > 1:
                table = bindings.get(parts[-2], parts[-2])
            else:
                table = sole_table
            pairs.append((table, parts[-1], value))
    return pairs


def _nearest_values(literal: str, values: list[str]) -> list[str]:
    """Suggestions for a value that is not in the column: case-insensitive
    match first, then substring containment, then edit distance."""
    lowered = literal.lower()
    ci = [v for v in values if v.lower() == lowered]
    if ci:
        return ci
    contains = [v for v in values
                if lowered in v.lower() or v.lower() in lowered]
    if contains:
        return contains[:3]
    return difflib.get_close_matches(literal, values, n=3, cutoff=0.6)


def _scan_other_columns(
    services: "PipelineServices", literal: str,
    exclude: tuple[Optional[str], str],
) -> Optional[tuple[str, str]]:
    """Find the literal in any other profiled column's full value set."""
    lowered = literal.lower()
    for profile in services.column_profiles:
        if (profile.table_name, profile.column_name) == exclude:
            continue
        if not profile.full_unique_values:
            continue
        for value in profile.full_unique_values:
            if str(value).lower() == lowered:
                return profile.table_name, profile.column_name
    return None


def double_check(
    sql: str,
    services: "PipelineServices",
) -> list[SpatialFinding]:
    """Programmatic cross-validation against the profiled schema."""
    findings: list[SpatialFinding] = []
    try:
        manifest = extract_manifest(sql)
        statements = parse_sql(sql)
    except SqlParseError as exc:
        return [SpatialFinding(
            rule_id="existence", severity="error", location=sql[:80],
            message=f"statement does not parse: {exc}",
            suggested_fix="regenerate the statement")]

    known_tables = {p.table_name for p in services.table_profiles}
    columns_by_table: dict[str, set[str]] = {}
    for profile in services.column_profiles:
        columns_by_table.setdefault(profile.table_name, set()).add(
            profile.column_name)

    unknown_tables = set()
    for table in manifest.tables:
        if table not in known_tables:
            unknown_tables.add(table)
            suggestion = difflib.get_close_matches(table, sorted(known_tables), n=1)
            hint = f"did you mean {suggestion[0]!r}?" if suggestion else \
                "check the table name against the schema"
            findings.append(SpatialFinding(
                rule_id="existence", severity="error", location=table,
                message=f'relation "{table}" does not exist',
                suggested_fix=hint))

    for table, column in manifest.base_columns:
        if table in unknown_tables:
            continue
        if table in columns_by_table and column not in columns_by_table[table]:
            suggestion = difflib.get_close_matches(
                column, sorted(columns_by_table[table]), n=1)
            hint = (f"did you mean {table}.{suggestion[0]}?" if suggestion
                    else "check the column name against the schema")
            findings.append(SpatialFinding(
                rule_id="existence", severity="error",
                location=f"{table}.{column}",
                message=f'column "{column}" does not exist in {table}',
                suggested_fix=hint))

    bindings = _binding_map(statements)
    sole = manifest.tables[0] if len(manifest.tables) == 1 else None
    for table, column, value in _equality_literals(statements, bindings, sole):
        profile = services.column_profile(table, column) if table else None
        if profile is None:
            # column unresolvable (unknown table); still try to place the value
            if isinstance(value, str):
                home = _scan_other_columns(services, value, (table, column))
                if home:
                    findings.append(SpatialFinding(
                        rule_id="value_membership", severity="error",
                        location=f"{column} = '{value}'",
                        message=(f"value '{value}' was not found under "
                                 f"{column}, but it appears in "
                                 f"{home[0]}.{home[1]}"),
                        suggested_fix=f"filter on {home[0]}.{home[1]} instead"))
            continue

        numeric_column = profile.value_type_label == "purely_numeric"
        if numeric_column and isinstance(value, str):
            findings.append(SpatialFinding(
                rule_id="literal_type", severity="warning",
                location=f"{table}.{column} = '{value}'",
                message=(f"{table}.{column} stores numbers; comparing against "
                         f"the string '{value}' relies on implicit casts"),
                suggested_fix="use an unquoted numeric literal"))
        if not numeric_column and isinstance(value, (int, float)) \
                and profile.value_type_label == "purely_text":
            findings.append(SpatialFinding(
                rule_id="literal_type", severity="error",
                location=f"{table}.{column} = {value}",
                message=(f"{table}.{column} stores text; comparing against the "
                         f"number {value} will not match"),
                suggested_fix="quote the literal or filter another column"))

        if profile.full_unique_values is not None:
            as_strings = [str(v) for v in profile.full_unique_values]
            if str(value) not in as_strings:
                near = _nearest_values(str(value), as_strings)
                home = None
                if isinstance(value, str) and not near:
                    home = _scan_other_columns(
                        services, value, (table, column))
                if near:
                    hint = "nearest matches: " + ", ".join(
                        repr(v) for v in near)
                elif home:
                    hint = (f"the value appears in {home[0]}.{home[1]}; "
                            "filter that column instead")
                else:
                    hint = "inspect the column's values before filtering"
                findings.append(SpatialFinding(
                    rule_id="value_membership", severity="error",
                    location=f"{table}.{column} = {value!r}",
                    message=(f"no row of {table}.{column} holds the value "
                             f"{value!r}"),
                    suggested_fix=hint))

    findings.extend(check_spatial_rules(sql, _geometry_columns(services)))
    return findings


_MISSING_HINT = re.compile(r"\bmissing\b|\bomit(s|ted)?\b|\bwithout\b|\blacks\b",
                           re.IGNORECASE)


def _fields_named_in(reason: str, mapping: SchemaMapping) -> list[tuple[str, str]]:
    """Trimmed columns the verdict reason mentions by name."""
    found = []
    lowered = reason.lower()
    for table, columns in sorted(mapping.trimmed_schema.items()):
        for col in columns:
            pattern = r"\b" + re.escape(col.column.lower()) + r"\b"
            if re.search(pattern, lowered):
                found.append((table, col.column))
    return found


def add_missing_columns(
    question: str,
    sql: str,
    mapping: SchemaMapping,
    reason: str,
) -> tuple[str, bool, str]:
    """Inject output fields the checker says are missing.

    Returns (sql, applied, description); when nothing can be resolved the
    caller falls through to regeneration."""
    targets = _fields_named_in(reason, mapping)
    if not targets:
        return sql, False, "no trimmed-schema column matches the reason"
    try:
        manifest = extract_manifest(sql)
    except SqlParseError as exc:
        return sql, False, f"statement does not parse: {exc}"
    present = {c for _, c in manifest.base_columns}
    for _, alias in manifest.output_columns:
        if alias:
            present.add(alias.lower())
    requests = [(table, column, None) for table, column in targets
                if column not in present]
    if not requests:
        return sql, False, "named columns are already selected"
    try:
        result = inject_columns(sql, requests)
    except ColumnInjectionError as exc:
        return sql, False, f"injection failed: {exc}"
    names = ", ".join(f"{t}.{c}" for t, c, _ in requests)
    return result.sql, True, f"injected {names} into the SELECT clause"


def _failure_feedback(
    verdict: Optional[Verdict],
    findings: list[SpatialFinding],
    error: Optional[str],
) -> str:
    parts = []
    if error:
        parts.append(f"Execution failed with: {error}")
    if verdict and not verdict.ok:
        parts.append(f"Logic check: {verdict.reason}")
    for finding in findings:
        parts.append(
            f"[{finding.rule_id}/{finding.severity}] {finding.message} "
            f"({finding.suggested_fix})")
    return "\n".join(parts)


def review(
    question: str,
    artifact: SqlArtifact,
    mapping: SchemaMapping,
    plan: LogicalPlan,
    services: "PipelineServices",
    session_id: str = "-",
    memory_context: str = "",
) -> ReviewOutcome:
    """Bounded verify-and-repair loop; never raises."""
    max_attempts = max(1, services.thresholds.review_attempts)
    sql = artifact.sql
    corrections: list[Correction] = []
    outcome_findings: list[SpatialFinding] = []
    first_error: Optional[str] = None
    attempt = 0

    # mutating statements are rejected outright, not repaired
    if classify_statement(sql) is not StatementClass.READ_ONLY:
        return ReviewOutcome(
            final_sql=sql, approved=False, corrections=[], findings=[],
            attempts=0, first_error="statement is not read-only")

    while attempt < max_attempts:
        attempt += 1
        result, error = dry_run(sql, services.gateway, session_id=session_id)
        if error and first_error is None:
            first_error = error
        preview = format_preview(result) if result is not None else \
            f"ERROR: {error}"
        verdict = logic_check(question, sql, preview, services.llm)
        findings = double_check(sql, services)
        outcome_findings = findings
        error_findings = [f for f in findings if f.severity == "error"]

        if verdict.ok and not error_findings and error is None:
            return ReviewOutcome(
                final_sql=sql, approved=True, corrections=corrections,
                findings=findings, attempts=attempt, preview=result,
                first_error=first_error)

        if attempt >= max_attempts:
            stage = ("dry_run" if error else
                     "logic_check" if not verdict.ok else
                     "spatial_rules" if any(
                         f.rule_id.startswith("R") for f in error_findings)
                     else "double_check")
            corrections.append(Correction(
                stage=stage,
                description=_failure_feedback(verdict, error_findings, error),
                sql_before=sql, sql_after=sql))
            break

        # repair: pure missing-column complaints are patched in place
        only_missing = (error is None and not error_findings
                        and not verdict.ok
                        and _MISSING_HINT.search(verdict.reason) is not None)
        if only_missing:
            patched, applied, description = add_missing_columns(
                question, sql, mapping, verdict.reason)
            if applied and classify_statement(patched) is StatementClass.READ_ONLY:
                corrections.append(Correction(
                    stage="add_column", description=description,
                    sql_before=sql, sql_after=patched))
                sql = patched
                continue

        feedback = _failure_feedback(verdict, findings, error)
        try:
            message = generate_sql(
                question, plan, mapping, services, session_id=session_id,
                memory_context=memory_context, feedback=feedback)
        except (EscalationError, LlmError) as exc:  # pragma: no cover - defensive
            corrections.append(Correction(
                stage="regenerate", description=f"regeneration failed: {exc}",
                sql_before=sql, sql_after=sql))
            break
        if message.status is MessageStatus.FAILED:
            corrections.append(Correction(
                stage="regenerate",
                description=f"regeneration failed: {message.note}",
                sql_before=sql, sql_after=sql))
            break
        regenerated: SqlArtifact = message.payload
        corrections.append(Correction(
            stage="regenerate", description=feedback,
            sql_before=sql, sql_after=regenerated.sql))
        sql = regenerated.sql

    return ReviewOutcome(
        final_sql=sql, approved=False, corrections=corrections,
        findings=outcome_findings, attempts=attempt, preview=None,
        first_error=first_error)
