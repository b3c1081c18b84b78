"""Specialist agents and the message protocol that links them."""

from .extraction import extract_entities
from .generation import generate_sql
from .messages import (
    COLUMN_ROLES, ENTITY_AGENT, ENTITY_KINDS, GENERATION_AGENT, LOGIC_AGENT,
    METADATA_AGENT, ORCHESTRATOR, REGISTERED_AGENTS, REVIEW_AGENT,
    AgentMessage, EntityExtraction, FunctionDoc, JoinChoice, LogicalPlan,
    MessageStatus, NextAction, OutputSpec, PlanColumn, SchemaMapping,
    SqlArtifact, TrimmedColumn,
)
from .planning import plan_logic
from .rendering import (
    extract_sql_response, parse_plan_text, render_function_docs,
    render_plan_text, render_rules_prose, render_trimmed_schema,
)
from .retrieval import lookup_spatial_functions, resolve_schema
from .review import (
    REVIEW_STAGES, Correction, ReviewOutcome, Verdict, add_missing_columns,
    double_check, dry_run, logic_check, review,
)

__all__ = [
    "AgentMessage",
    "COLUMN_ROLES",
    "Correction",
    "ENTITY_AGENT",
    "ENTITY_KINDS",
    "EntityExtraction",
    "FunctionDoc",
    "GENERATION_AGENT",
    "JoinChoice",
    "LOGIC_AGENT",
    "LogicalPlan",
    "METADATA_AGENT",
    "MessageStatus",
    "NextAction",
    "ORCHESTRATOR",
    "OutputSpec",
    "PlanColumn",
    "REGISTERED_AGENTS",
    "REVIEW_AGENT",
    "REVIEW_STAGES",
    "ReviewOutcome",
    "SchemaMapping",
    "SqlArtifact",
    "TrimmedColumn",
    "Verdict",
    "add_missing_columns",
    "double_check",
    "dry_run",
    "extract_entities",
    "extract_sql_response",
    "generate_sql",
    "logic_check",
    "lookup_spatial_functions",
    "parse_plan_text",
    "plan_logic",
    "render_function_docs",
    "render_plan_text",
    "render_rules_prose",
    "render_trimmed_schema",
    "resolve_schema",
    "review",
]
