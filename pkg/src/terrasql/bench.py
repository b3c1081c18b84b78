"""Benchmark harness: suite loading, batch pipeline runs, scoring.

Correctness labels come from a human-reviewed label file, never from
automatic result comparison; ``execution_match`` exists only as an
optional diagnostic column for annotators.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import BenchmarkFormatError
from .gateway import DbGateway, ResultTable
from .orchestrator import Orchestrator
from .agents.review import dry_run
from .runtime import PipelineServices

DIFFICULTY_LEVELS = ("basic", "intermediate", "advanced")


@dataclass(frozen=True)
class BenchmarkItem:
    """One benchmark question tied to a target database."""

    item_id: str
    question: str
    database: str
    difficulty: Optional[str] = None
    gold_sql: Optional[str] = None
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.difficulty is not None and self.difficulty not in DIFFICULTY_LEVELS:
            raise ValueError(
                f"difficulty must be one of {DIFFICULTY_LEVELS}, "
                f"got {self.difficulty!r}")


@dataclass(frozen=True)
class RunRecord:
    """Everything captured for one item in one suite run."""

    item_id: str
    question: str
    database: str
    difficulty: Optional[str]
    unreviewed_sql: str
    reviewed_sql: str
    unreviewed_exec: str
    unreviewed_error: Optional[str]
    reviewed_exec: str
    reviewed_error: Optional[str]
    approved: bool
    preview_digest: str
    elapsed_ms: int
    failure: Optional[str] = None

    def __post_init__(self) -> None:
        # A completed pipeline always yields both statements.
        if self.failure is None:
            if not self.unreviewed_sql.strip() or not self.reviewed_sql.strip():
                raise ValueError(
                    "completed runs must carry both SQL statements")
        for status in (self.unreviewed_exec, self.reviewed_exec):
            if status not in ("ok", "error"):
                raise ValueError(f"execution status must be ok or error, "
                                 f"got {status!r}")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "database": self.database,
            "difficulty": self.difficulty,
            "unreviewed_sql": self.unreviewed_sql,
            "reviewed_sql": self.reviewed_sql,
            "unreviewed_exec": self.unreviewed_exec,
            "unreviewed_error": self.unreviewed_error,
            "reviewed_exec": self.reviewed_exec,
            "reviewed_error": self.reviewed_error,
            "approved": self.approved,
            "preview_digest": self.preview_digest,
            "elapsed_ms": self.elapsed_ms,
            "failure": self.failure,
        }


@dataclass(frozen=True)
class LabelEntry:
    """Human verdict on one run record."""

    item_id: str
    unreviewed_correct: bool
    reviewed_correct: bool
    rationale: str = ""


@dataclass(frozen=True)
class ScoreRow:
    group: str
    questions: int
    unreviewed_correct: int
    reviewed_correct: int
    unreviewed_accuracy: Decimal
    reviewed_accuracy: Decimal

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "questions": self.questions,
            "unreviewed_correct": self.unreviewed_correct,
            "reviewed_correct": self.reviewed_correct,
            "unreviewed_accuracy": str(self.unreviewed_accuracy),
            "reviewed_accuracy": str(self.reviewed_accuracy),
        }


@dataclass(frozen=True)
class ScoreReport:
    grouping: str
    rows: tuple[ScoreRow, ...]
    overall: ScoreRow
    skipped: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "grouping": self.grouping,
            "groups": [row.to_dict() for row in self.rows],
            "overall": self.overall.to_dict(),
            "skipped": list(self.skipped),
        }


def _require(entry: dict, line: int, name: str, kind: type) -> object:
    if name not in entry:
        raise BenchmarkFormatError(line, name, "required field is absent")
    value = entry[name]
    if not isinstance(value, kind) or (kind is str and not value.strip()):
        raise BenchmarkFormatError(
            line, name, f"expected non-empty {kind.__name__}, "
            f"got {value!r}")
    return value


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            entry = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BenchmarkFormatError(number, "-", f"not valid JSON: {exc}")
        if not isinstance(entry, dict):
            raise BenchmarkFormatError(number, "-", "entry must be an object")
        yield number, entry


def load_benchmark(path: str | Path) -> list[BenchmarkItem]:
    """Read a JSONL suite; validates every entry and the suite as a whole.

    Duplicate item ids and malformed entries fail loudly with the line
    number and field; an empty file is legal but warned about."""
    path = Path(path)
    items: list[BenchmarkItem] = []
    seen: dict[str, int] = {}
    first_with: Optional[int] = None
    first_without: Optional[int] = None
    for number, entry in _iter_jsonl(path):
        item_id = _require(entry, number, "item_id", str)
        question = _require(entry, number, "question", str)
        database = _require(entry, number, "database", str)
        difficulty = entry.get("difficulty")
        if difficulty is not None:
            if difficulty not in DIFFICULTY_LEVELS:
                raise BenchmarkFormatError(
                    number, "difficulty",
                    f"must be one of {', '.join(DIFFICULTY_LEVELS)}; "
                    f"got {difficulty!r}")
            first_with = first_with if first_with is not None else number
        else:
            first_without = first_without if first_without is not None else number
        gold_sql = entry.get("gold_sql")
        if gold_sql is not None and not isinstance(gold_sql, str):
            raise BenchmarkFormatError(number, "gold_sql",
                                       "must be a string when present")
        tags = entry.get("tags", [])
        if not isinstance(tags, list) or any(
                not isinstance(t, str) for t in tags):
            raise BenchmarkFormatError(number, "tags",
                                       "must be a list of strings")
        if item_id in seen:
            raise BenchmarkFormatError(
                number, "item_id",
                f"duplicate item id {item_id!r} "
                f"(first seen on line {seen[item_id]})")
        seen[item_id] = number
        items.append(BenchmarkItem(
            item_id=item_id, question=question, database=database,
            difficulty=difficulty, gold_sql=gold_sql, tags=tuple(tags)))
    if first_with is not None and first_without is not None:
        raise BenchmarkFormatError(
            first_without, "difficulty",
            "required because other items in this suite carry one")
    if not items:
        warnings.warn(f"benchmark suite {path} contains no items")
    return items


def _digest(result: Optional[ResultTable]) -> str:
    if result is None:
        return ""
    body = json.dumps(
        {"columns": [[n, t] for n, t in result.columns],
         "rows": [[str(v) for v in row] for row in result.rows]},
        sort_keys=True)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


def _failure_record(item: BenchmarkItem, message: str,
                    elapsed_ms: int) -> RunRecord:
    return RunRecord(
        item_id=item.item_id, question=item.question,
        database=item.database, difficulty=item.difficulty,
        unreviewed_sql="", reviewed_sql="",
        unreviewed_exec="error", unreviewed_error=message,
        reviewed_exec="error", reviewed_error=message,
        approved=False, preview_digest="", elapsed_ms=elapsed_ms,
        failure=message)


def _describe_reply(reply: dict) -> str:
    kind = reply.get("kind", "unknown")
    detail = (reply.get("question") or reply.get("reason")
              or reply.get("message") or "")
    return f"pipeline returned {kind}: {detail}".rstrip(": ")


def run_suite(
    items: list[BenchmarkItem],
    services: PipelineServices,
    progress: Optional[Callable[[RunRecord], None]] = None,
) -> list[RunRecord]:
    """Run every item through the full pipeline and both executions.

    Each item gets a fresh conversational memory so the outcome depends
    only on the question; a failing item yields a failure record and the
    run continues."""
    records: list[RunRecord] = []
    with tempfile.TemporaryDirectory(prefix="bench-memory-") as memdir:
        for position, item in enumerate(items):
            started = time.perf_counter()

            def _elapsed() -> int:
                return int((time.perf_counter() - started) * 1000)

            memory_path = Path(memdir) / f"item-{position}.jsonl"
            try:
                orchestrator = Orchestrator(services, memory_path=memory_path)
                session = orchestrator.create_session()
                reply = orchestrator.handle_message(session, item.question)
            except Exception as exc:
                record = _failure_record(
                    item, f"pipeline crash: {exc}", _elapsed())
                records.append(record)
                if progress:
                    progress(record)
                continue
            if reply.get("kind") != "answer":
                record = _failure_record(
                    item, _describe_reply(reply), _elapsed())
                records.append(record)
                if progress:
                    progress(record)
                continue
            bundle = reply["bundle"]
            unreviewed = bundle["unreviewed_sql"]
            reviewed = bundle["reviewed_sql"]
            _, unreviewed_error = dry_run(
                unreviewed, services.gateway, session_id=session.session_id)
            preview, reviewed_error = dry_run(
                reviewed, services.gateway, session_id=session.session_id)
            record = RunRecord(
                item_id=item.item_id, question=item.question,
                database=item.database, difficulty=item.difficulty,
                unreviewed_sql=unreviewed, reviewed_sql=reviewed,
                unreviewed_exec="ok" if unreviewed_error is None else "error",
                unreviewed_error=unreviewed_error,
                reviewed_exec="ok" if reviewed_error is None else "error",
                reviewed_error=reviewed_error,
                approved=bool(bundle["approved"]),
                preview_digest=_digest(preview),
                elapsed_ms=_elapsed())
            records.append(record)
            if progress:
                progress(record)
    return records


def write_worksheet(records: list[RunRecord], path: str | Path) -> int:
    """Dump run records as a labeling worksheet.

    Annotators fill in the two null verdicts and the rationale; the
    completed file loads back through ``load_labels``."""
    path = Path(path)
    lines = []
    for record in records:
        entry = record.to_dict()
        entry["unreviewed_correct"] = None
        entry["reviewed_correct"] = None
        entry["rationale"] = ""
        lines.append(json.dumps(entry, sort_keys=True))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def load_labels(
    path: str | Path,
    valid_ids: Optional[Iterable[str]] = None,
) -> dict[str, LabelEntry]:
    """Read human verdicts; every entry must name a known item once."""
    path = Path(path)
    known = set(valid_ids) if valid_ids is not None else None
    labels: dict[str, LabelEntry] = {}
    seen: dict[str, int] = {}
    for number, entry in _iter_jsonl(path):
        item_id = _require(entry, number, "item_id", str)
        verdicts = {}
        for name in ("unreviewed_correct", "reviewed_correct"):
            value = entry.get(name)
            if not isinstance(value, bool):
                raise BenchmarkFormatError(
                    number, name,
                    f"expected true or false, got {value!r}")
            verdicts[name] = value
        rationale = entry.get("rationale", "")
        if not isinstance(rationale, str):
            raise BenchmarkFormatError(number, "rationale",
                                       "must be a string")
        if item_id in seen:
            raise BenchmarkFormatError(
                number, "item_id",
                f"duplicate label for {item_id!r} "
                f"(first seen on line {seen[item_id]})")
        if known is not None and item_id not in known:
            raise BenchmarkFormatError(
                number, "item_id",
                f"{item_id!r} does not appear in the suite")
        seen[item_id] = number
        labels[item_id] = LabelEntry(item_id=item_id,
                                     rationale=rationale, **verdicts)
    return labels


def _accuracy(correct: int, total: int) -> Decimal:
    if total == 0:
        return Decimal("0.0")
    ratio = Decimal(correct * 100) / Decimal(total)
    return ratio.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def _score_group(group: str, rows: list[tuple[bool, bool]]) -> ScoreRow:
    unreviewed = sum(1 for u, _ in rows if u)
    reviewed = sum(1 for _, r in rows if r)
    return ScoreRow(
        group=group, questions=len(rows),
        unreviewed_correct=unreviewed, reviewed_correct=reviewed,
        unreviewed_accuracy=_accuracy(unreviewed, len(rows)),
        reviewed_accuracy=_accuracy(reviewed, len(rows)))


def score(records: list[RunRecord],
          labels: dict[str, LabelEntry]) -> ScoreReport:
    """Pure scoring over labeled records.

    Groups by difficulty when every record carries one, otherwise by
    database; unlabeled records are excluded with a warning. Accuracy is
    percent correct rounded half-up to one decimal."""
    skipped = tuple(r.item_id for r in records if r.item_id not in labels)
    if skipped:
        warnings.warn(
            f"{len(skipped)} run record(s) have no label and were "
            f"excluded: {', '.join(skipped[:5])}"
            + ("..." if len(skipped) > 5 else ""))
    labeled = [r for r in records if r.item_id in labels]
    by_difficulty = all(r.difficulty is not None for r in labeled)
    grouping = "difficulty" if labeled and by_difficulty else "database"
    groups: dict[str, list[tuple[bool, bool]]] = {}
    for record in labeled:
        key = record.difficulty if grouping == "difficulty" else record.database
        label = labels[record.item_id]
        groups.setdefault(str(key), []).append(
            (label.unreviewed_correct, label.reviewed_correct))
    if grouping == "difficulty":
        order = [level for level in DIFFICULTY_LEVELS if level in groups]
    else:
        order = sorted(groups)
    rows = tuple(_score_group(name, groups[name]) for name in order)
    overall = _score_group(
        "overall", [pair for name in order for pair in groups[name]])
    return ScoreReport(grouping=grouping, rows=rows,
                       overall=overall, skipped=skipped)


def render_score_table(report: ScoreReport) -> str:
    """Fixed-width text table: one row per group plus an overall row."""
    headers = (report.grouping.capitalize(), "Questions",
               "Unreviewed Correct", "Reviewed Correct",
               "Unreviewed Acc. (%)", "Reviewed Acc. (%)")
    body = [
        (row.group, str(row.questions), str(row.unreviewed_correct),
         str(row.reviewed_correct), str(row.unreviewed_accuracy),
         str(row.reviewed_accuracy))
        for row in (*report.rows, report.overall)
    ]
    widths = [max(len(headers[i]), *(len(line[i]) for line in body))
              for i in range(len(headers))]

    def fmt(cells: tuple[str, ...]) -> str:
        padded = [cells[0].ljust(widths[0])]
        padded += [cells[i].rjust(widths[i]) for i in range(1, len(cells))]
        return "  ".join(padded).rstrip()

    ruler = "  ".join("-" * w for w in widths)
    lines = [fmt(headers), ruler]
    lines += [fmt(line) for line in body[:-1]]
    lines.append(ruler)
    lines.append(fmt(body[-1]))
    return "\n".join(lines)


def execution_match(record: RunRecord, item: BenchmarkItem,
                    gateway: DbGateway) -> Optional[bool]:
    """Diagnostic only: do gold and reviewed results agree as multisets?

    Never a substitute for human labels; ``None`` when no gold SQL is
    available or either side cannot be executed."""
    if item.gold_sql is None or record.failure is not None:
        return None
    gold, gold_error = dry_run(item.gold_sql, gateway)
    if gold_error is not None or gold is None:
        return None
    ours, our_error = dry_run(record.reviewed_sql, gateway)
    if our_error is not None or ours is None:
        return False

    def rows_of(table: ResultTable) -> list[tuple[str, ...]]:
        return sorted(tuple(str(v) for v in row) for row in table.rows)

    return rows_of(gold) == rows_of(ours)
