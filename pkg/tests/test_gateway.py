"""Gateway behavior: blocking, capping, auditing, sampling, previews."""

import json

import pytest

from terrasql.engine.seed import GHCN_STATIONS, STATES, create_toy_engine
from terrasql.errors import BlockedStatementError, ExecutionError
from terrasql.gateway import (
    DbGateway,
    ExecutionPolicy,
    ResultTable,
    format_preview,
)

BOX6_SQL = ("SELECT lon AS longitude, lat AS latitude FROM ghcn "
            "WHERE station_id = 'US1NCHR0026'")


@pytest.fixture()
def gateway():
    engine = create_toy_engine()
    yield DbGateway(engine)
    engine.close()


class TestExecuteReadonly:
    def test_delete_blocked_nothing_executed(self, gateway):
        with pytest.raises(BlockedStatementError) as err:
            gateway.execute_readonly("DELETE FROM poi")
        assert err.value.kind == "delete"
        assert gateway.audit.records[-1].outcome == "blocked:delete"
        assert gateway.row_count("poi") == 9

    def test_update_blocked(self, gateway):
        with pytest.raises(BlockedStatementError) as err:
            gateway.execute_readonly("UPDATE states SET name = 'x'")
        assert err.value.kind == "update"

    def test_station_lookup_returns_single_row(self, gateway):
        result = gateway.execute_readonly(BOX6_SQL)
        station = next(s for s in GHCN_STATIONS if s[1] == "US1NCHR0026")
        assert [c[0] for c in result.columns] == ["longitude", "latitude"]
        assert result.rows == [(station[3], station[4])]
        assert not result.truncated

    def test_invalid_sql_raises_execution_error(self, gateway):
        with pytest.raises(ExecutionError, match="syntax error"):
            gateway.execute_readonly("SELECT * FRO states")
        assert gateway.audit.records[-1].outcome == "error"

    def test_row_cap_applied_and_flagged(self, gateway):
        result = gateway.execute_readonly(
            "SELECT id FROM ghcn_obs ORDER BY id",
            ExecutionPolicy(row_cap=10))
        assert len(result.rows) == 10
        assert result.truncated
        assert "limit 10" in result.statement.lower()

    def test_under_cap_not_truncated(self, gateway):
        result = gateway.execute_readonly(
            "SELECT name FROM states ORDER BY name",
            ExecutionPolicy(row_cap=10))
        assert len(result.rows) == len(STATES)
        assert not result.truncated

    def test_execution_error_audited(self, gateway):
        with pytest.raises(ExecutionError, match='relation "missing" does not exist'):
            gateway.execute_readonly("SELECT * FROM missing")
        assert gateway.audit.records[-1].outcome == "error"

    def test_every_executed_statement_classified_read_only(self, gateway):
        from terrasql.sqlkit import StatementClass, classify_statement

        attempts = [
            "SELECT 1",
            "DELETE FROM poi",
            "DROP TABLE states",
            "SELECT name FROM states ORDER BY 1",
            "INSERT INTO poi VALUES (99, 'x', 'y', 1, NULL)",
        ]
        for sql in attempts:
            try:
                gateway.execute_readonly(sql)
            except (BlockedStatementError, ExecutionError):
                pass
        for record in gateway.audit.records:
            if record.outcome == "ok":
                assert classify_statement(record.statement) is StatementClass.READ_ONLY

    def test_policy_rejects_writable_transaction(self):
        with pytest.raises(ValueError):
            ExecutionPolicy(read_only_transaction=False)

    def test_deterministic_given_order_by(self, gateway):
        first = gateway.execute_readonly("SELECT name FROM poi ORDER BY id")
        second = gateway.execute_readonly("SELECT name FROM poi ORDER BY id")
        assert first.rows == second.rows

    def test_column_types_inferred(self, gateway):
        result = gateway.execute_readonly(
            "SELECT name, population FROM states ORDER BY id")
        assert result.columns == [("name", "text"), ("population", "integer")]

    def test_audit_file_lines(self, tmp_path):
        engine = create_toy_engine()
        gw = DbGateway(engine, audit_path=str(tmp_path / "audit.jsonl"))
        gw.execute_readonly("SELECT 1", session_id="s-1")
        lines = (tmp_path / "audit.jsonl").read_text().splitlines()
        record = json.loads(lines[0])
        assert set(record) == {"timestamp", "session_id", "statement_digest", "outcome"}
        assert record["session_id"] == "s-1"
        assert record["outcome"] == "ok"
        engine.close()


class TestSampleValues:
    def test_supply_bounded(self, gateway):
        values = gateway.sample_values("counties", "state", 10)
        assert sorted(values) == ["12", "37", "42"]

    def test_seeded_and_deterministic(self, gateway):
        first = gateway.sample_values("ghcn_obs", "precip_text", 5)
        second = gateway.sample_values("ghcn_obs", "precip_text", 5)
        assert first == second
        assert len(first) == 5

    def test_values_come_from_column(self, gateway):
        values = gateway.sample_values("ghcn", "station_id", 4)
        actual = {s[1] for s in GHCN_STATIONS}
        assert set(values) <= actual

    def test_nulls_excluded(self, gateway):
        values = gateway.sample_values("poi", "name", 20)
        assert None not in values
        assert len(values) == 8

    def test_missing_column(self, gateway):
        with pytest.raises(ExecutionError, match='column "nope" does not exist'):
            gateway.sample_values("poi", "nope", 3)

    def test_missing_table(self, gateway):
        with pytest.raises(ExecutionError, match='relation "ghost" does not exist'):
            gateway.sample_values("ghost", "x", 3)


class TestFormatPreview:
    def test_empty_result(self):
        result = ResultTable(columns=[("name", "text")], rows=[],
                             truncated=False, elapsed_ms=0.1, statement="")
        text = format_preview(result)
        assert text.splitlines()[0].strip() == "name"
        assert text.splitlines()[-1] == "0 rows"

    def test_null_marker_and_footer(self):
        result = ResultTable(
            columns=[("name", "text"), ("elev", "double precision")],
            rows=[("A", 1.5), (None, None)],
            truncated=False, elapsed_ms=0.1, statement="")
        text = format_preview(result)
        assert "∅" in text
        assert text.splitlines()[-1] == "2 rows"

    def test_truncated_footer(self):
        result = ResultTable(columns=[("id", "integer")],
                             rows=[(i,) for i in range(10)],
                             truncated=True, elapsed_ms=0.1, statement="")
        assert format_preview(result).splitlines()[-1] == "10 rows (truncated)"

    def test_wide_cell_capped_with_ellipsis(self):
        geom = "SRID=4326;POLYGON((" + "0 0, " * 30 + "0 0))"
        result = ResultTable(columns=[("geom", "text")], rows=[(geom,)],
                             truncated=False, elapsed_ms=0.1, statement="")
        text = format_preview(result, max_width=40)
        body = text.splitlines()[2]
        assert body.rstrip().endswith("…")
        assert len(body.rstrip()) == 40

    def test_single_row_footer_grammar(self):
        result = ResultTable(columns=[("x", "integer")], rows=[(1,)],
                             truncated=False, elapsed_ms=0.1, statement="")
        assert format_preview(result).splitlines()[-1] == "1 row"

    def test_alignment_deterministic(self):
        result = ResultTable(
            columns=[("a", "text"), ("b", "integer")],
            rows=[("xx", 1), ("y", 22)],
            truncated=False, elapsed_ms=0.1, statement="")
        assert format_preview(result) == format_preview(result)
