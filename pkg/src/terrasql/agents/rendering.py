"""Deterministic text rendering shared by the pipeline agents.

Prompts are part of the replay contract: the same inputs must produce the
same bytes, so everything here renders from sorted or explicitly ordered
structures and never embeds timestamps, ids or float formatting surprises.
"""

from __future__ import annotations

import re
from typing import Optional

from ..errors import PlanFormatError
from ..sqlkit.spatial_rules import rule_registry
from .messages import (
    FunctionDoc, JoinChoice, LogicalPlan, OutputSpec, PlanColumn, SchemaMapping,
    TrimmedColumn,
)

_ROLE_TEXT = {
    "join_key": "join key",
    "filter_criterion": "filter criterion",
    "output_field": "output field",
    "aggregation_input": "aggregation input",
    "unused": "unused",
}
_ROLE_FROM_TEXT = {v: k for k, v in _ROLE_TEXT.items()}

_SECTION_NAMES = (
    "Tables & Columns",
    "Join Strategy",
    "Filter Conditions",
    "Output Definition",
    "High-Level Algorithm",
    "Spatial Abstractions",
)

_JOIN_KINDS = ("INNER", "LEFT OUTER", "LEFT", "RIGHT OUTER", "RIGHT",
               "FULL OUTER", "FULL", "CROSS")


def render_trimmed_schema(mapping: SchemaMapping) -> str:
    """Candidate schema as the agents see it: table, columns, notes, samples."""
    if not mapping.trimmed_schema:
        return "(no candidate tables)"
    lines: list[str] = []
    for table in sorted(mapping.trimmed_schema):
        lines.append(f"Table {table}")
        for col in mapping.trimmed_schema[table]:
            entry = f"  - {col.column} ({col.declared_type})"
            if col.narrative:
                entry += f": {col.narrative}"
            if col.samples:
                shown = ", ".join(col.samples)
                entry += f" [samples: {shown}]"
            lines.append(entry)
        lines.append("")
    return "\n".join(lines).rstrip()


def render_function_docs(docs: list[FunctionDoc]) -> str:
    if not docs:
        return "none"
    lines = []
    for doc in docs:
        lines.append(f"- {doc.name}: {doc.signature}")
        if doc.example:
            lines.append(f"  example: {doc.example}")
    return "\n".join(lines)


def render_rules_prose() -> str:
    """The spatial constraint list, rendered once for the review prompts."""
    registry = rule_registry()
    lines = [
        "- R1: Distance predicates take the threshold as their third argument"
        " (predicate(geom_a, geom_b, distance)); never compare a two-argument"
        " call against a number.",
        "- R2: Area and perimeter functions apply to polygon geometries only.",
        "- R3: Geodesic distances and areas in meters require geography"
        " arguments; planar math over EPSG:4326 degrees is wrong.",
        "- R4: Both arguments of a binary spatial operation must share one"
        " SRID; transform first when they differ.",
    ]
    flagged = registry.get("flagged_planar_srids", {})
    if flagged:
        srids = ", ".join(sorted(flagged))
        lines.append(
            f"- R5: Avoid measuring in projections that distort ({srids});"
            " prefer geography or an equal-area projection.")
    return "\n".join(lines)


def render_plan_text(plan: LogicalPlan) -> str:
    """Logical plan in its canonical sectioned text layout."""
    lines: list[str] = ["Tables & Columns", ""]
    by_table: dict[str, list[PlanColumn]] = {}
    order: list[str] = []
    for col in plan.tables_and_columns:
        if col.table not in by_table:
            by_table[col.table] = []
            order.append(col.table)
        by_table[col.table].append(col)
    for table in order:
        lines.append(table)
        lines.append("")
        for col in by_table[table]:
            role = _ROLE_TEXT[col.role]
            lines.append(f"- {col.column}: Role = {role}. {col.rationale}")
        lines.append("")
    if plan.join_strategy:
        lines.extend(["Join Strategy", ""])
        for i, join in enumerate(plan.join_strategy):
            letter = chr(ord("A") + i)
            lines.append(
                f"- {letter}. {join.kind} JOIN between {join.relations} "
                f"on {join.condition}. {join.justification}")
        lines.append("")
    if plan.filter_conditions:
        lines.extend(["Filter Conditions", ""])
        for cond in plan.filter_conditions:
            lines.append(f"- {cond}")
        lines.append("")
    lines.extend(["Output Definition", ""])
    for out in plan.output_definition:
        lines.append(f"- {out.expression} AS {out.alias}: {out.description}")
    lines.append("")
    lines.extend(["High-Level Algorithm", ""])
    for i, step in enumerate(plan.high_level_algorithm, start=1):
        lines.append(f"- {i}) {step}")
    if plan.spatial_abstractions:
        lines.extend(["", "Spatial Abstractions", ""])
        for name, function in plan.spatial_abstractions:
            lines.append(f"- {name}: {function}")
    return "\n".join(lines).rstrip() + "\n"


def _split_sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for raw in text.splitlines():
        line = raw.rstrip()
        stripped = line.strip()
        if stripped in _SECTION_NAMES:
            current = stripped
            sections[current] = []
            continue
        if current is not None and stripped:
            sections[current].append(stripped)
    return sections


def _parse_join_item(item: str) -> JoinChoice:
    body = re.sub(r"^[A-Z]\.\s+", "", item)
    kind = "INNER"
    rest = body
    upper = body.upper()
    for candidate in _JOIN_KINDS:
        prefix = candidate + " JOIN"
        if upper.startswith(prefix):
            kind = candidate
            rest = body[len(prefix):].lstrip()
            break
    match = re.match(r"(?:between\s+)?(.+?)\s+on\s+(.+)$", rest,
                     re.IGNORECASE | re.DOTALL)
    if not match:
        return JoinChoice(relations=rest, kind=kind, condition="",
                          justification="")
    relations = match.group(1).strip()
    tail = match.group(2).strip()
    # first sentence is the condition, the rest is justification
    parts = tail.split(". ", 1)
    condition = parts[0].rstrip(".")
    justification = parts[1].strip() if len(parts) > 1 else ""
    return JoinChoice(relations=relations, kind=kind, condition=condition,
                      justification=justification)


def parse_plan_text(text: str) -> LogicalPlan:
    """Parse the sectioned plan layout back into a LogicalPlan.

    Raises PlanFormatError when required sections are missing or a line does
    not follow the documented shape."""
    sections = _split_sections(text)
    if "Tables & Columns" not in sections:
        raise PlanFormatError("missing Tables & Columns section")
    if "High-Level Algorithm" not in sections:
        raise PlanFormatError("missing High-Level Algorithm section")

    columns: list[PlanColumn] = []
    table: Optional[str] = None
    for line in sections["Tables & Columns"]:
        if not line.startswith("-"):
            table = line.strip().rstrip(":")
            continue
        if table is None:
            raise PlanFormatError(f"column bullet before any table: {line!r}")
        body = line.lstrip("- ").strip()
        match = re.match(
            r"(?P<col>[\w.\"]+):\s*Role\s*=\s*(?P<role>[a-z ]+?)\.\s*(?P<why>.*)$",
            body)
        if not match:
            raise PlanFormatError(f"unparseable column line: {line!r}")
        role_text = match.group("role").strip()
        role = _ROLE_FROM_TEXT.get(role_text)
        if role is None:
            raise PlanFormatError(f"unknown role {role_text!r} in {line!r}")
        columns.append(PlanColumn(
            table=table.lower(), column=match.group("col").lower(),
            role=role, rationale=match.group("why").strip()))

    joins = [_parse_join_item(item.lstrip("- ").strip())
             for item in sections.get("Join Strategy", [])]
    filters = [item.lstrip("- ").strip()
               for item in sections.get("Filter Conditions", [])]

    outputs: list[OutputSpec] = []
    for item in sections.get("Output Definition", []):
        body = item.lstrip("- ").strip()
        if ":" not in body:
            raise PlanFormatError(f"output line needs a description: {item!r}")
        head, description = body.split(":", 1)
        match = re.match(r"(?s)(.+)\s+AS\s+([\w\"]+)\s*$", head)
        if not match:
            raise PlanFormatError(f"output line needs an alias: {item!r}")
        outputs.append(OutputSpec(
            expression=match.group(1).strip(), alias=match.group(2).strip(),
            description=description.strip()))

    steps = []
    for item in sections["High-Level Algorithm"]:
        body = item.lstrip("- ").strip()
        body = re.sub(r"^\d+[).]\s*", "", body)
        if body:
            steps.append(body)
    if not steps:
        raise PlanFormatError("High-Level Algorithm has no steps")

    abstractions: list[tuple[str, str]] = []
    for item in sections.get("Spatial Abstractions", []):
        body = item.lstrip("- ").strip()
        if ":" not in body:
            raise PlanFormatError(f"abstraction line needs a function: {item!r}")
        name, function = body.split(":", 1)
        abstractions.append((name.strip(), function.strip()))

    return LogicalPlan(
        tables_and_columns=columns,
        join_strategy=joins,
        filter_conditions=filters,
        output_definition=outputs,
        high_level_algorithm=steps,
        spatial_abstractions=abstractions,
    )


_FENCED_SQL = re.compile(r"```(?:sql)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_ASSUMPTION_LINE = re.compile(r"^ASSUMPTION:\s*(.+)$", re.MULTILINE)


def extract_sql_response(text: str) -> tuple[str, list[str]]:
    """Pull (sql, assumption list) out of a generation reply.

    The statement comes from the first fenced code block, or the whole reply
    when no fence is present. Assumption lines may follow the fence."""
    match = _FENCED_SQL.search(text)
    if match:
        sql = match.group(1).strip()
    else:
        sql = text.strip()
        sql = _ASSUMPTION_LINE.sub("", sql).strip()
    assumptions = [m.group(1).strip() for m in _ASSUMPTION_LINE.finditer(text)]
    return sql, assumptions


def first_sentence(text: str, limit: int = 200) -> str:
    """Narrative excerpt: first sentence, capped."""
    text = " ".join(text.split())
    match = re.search(r"(?<=[.!?])\s", text)
    head = text[:match.start()] if match else text
    if len(head) > limit:
        head = head[:limit - 1].rstrip() + "…"
    return head
