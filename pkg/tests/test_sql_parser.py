"""Parser internals: spans, round-trips and hostile input."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrasql.errors import SqlParseError
from terrasql.sqlkit import classify_statement, parse_single_query, parse_sql
from terrasql.sqlkit.render import render_query
from terrasql.sqlkit.tokenizer import tokenize


class TestTokenizer:
    def test_string_escapes(self):
        tokens = tokenize("SELECT 'It''s fine'")
        assert tokens[1].value == "'It''s fine'"

    def test_line_and_block_comments_skipped(self):
        tokens = tokenize("SELECT 1 -- trailing\n/* block\n comment */ + 2")
        values = [t.value for t in tokens if t.kind != "EOF"]
        assert values == ["SELECT", "1", "+", "2"]

    def test_nested_block_comment(self):
        tokens = tokenize("/* outer /* inner */ still */ SELECT 1")
        assert [t.value for t in tokens][:2] == ["SELECT", "1"]

    def test_dollar_quoted_string(self):
        tokens = tokenize("SELECT $$raw 'text'$$")
        assert tokens[1].kind == "STRING"

    def test_spans_match_source(self):
        sql = "SELECT abc, 'lit' FROM t"
        for tok in tokenize(sql):
            if tok.kind != "EOF":
                assert sql[tok.start:tok.end] == tok.value

    def test_unterminated_string_raises(self):
        with pytest.raises(SqlParseError):
            tokenize("SELECT 'oops")

    def test_multichar_operators(self):
        values = [t.value for t in tokenize("a::b <= c <> d || e != f")]
        assert "::" in values and "<=" in values and "<>" in values
        assert "||" in values and "!=" in values


class TestParserShapes:
    def test_query_spans_cover_source(self):
        sql = "SELECT a FROM t WHERE b = 1"
        query = parse_single_query(sql)
        assert sql[query.start:query.end] == sql

    def test_case_expression(self):
        query = parse_single_query(
            "SELECT CASE WHEN team = 'Arsenal' THEN 'home' ELSE 'away' END FROM games")
        assert query is not None

    def test_nested_subqueries(self):
        parse_single_query(
            "SELECT * FROM (SELECT a FROM (SELECT a FROM t) AS inner_t) AS outer_t")

    def test_operator_precedence(self):
        from terrasql.sqlkit.render import render_expr
        from terrasql.sqlkit.nodes import SelectCore

        query = parse_single_query("SELECT 1 + 2 * 3 = 7 AND true OR false")
        assert isinstance(query.body, SelectCore)
        text = render_expr(query.body.items[0].expr)
        assert text == "1 + 2 * 3 = 7 and true or false"

    def test_cast_binds_tighter_than_division(self):
        from terrasql.sqlkit.render import render_expr
        query = parse_single_query("SELECT SUM(ST_Area(geom::geography)) / 1000000.0 FROM p")
        text = render_expr(query.body.items[0].expr)
        assert text == "sum(st_area(geom::geography)) / 1000000.0"

    def test_between_does_not_eat_and(self):
        query = parse_single_query("SELECT 1 FROM t WHERE a BETWEEN 1 AND 5 AND b = 2")
        from terrasql.sqlkit.render import render_expr
        assert render_expr(query.body.where) == "a between 1 and 5 and b = 2"

    def test_double_quoted_identifiers(self):
        query = parse_single_query('SELECT "Mixed Case" FROM "My Table"')
        from terrasql.sqlkit.nodes import ColumnRef
        expr = query.body.items[0].expr
        assert isinstance(expr, ColumnRef)
        assert expr.normalized() == ["Mixed Case"]

    def test_interval_literal(self):
        parse_single_query("SELECT now() - INTERVAL '7 days'")

    def test_errors_carry_offset(self):
        try:
            parse_sql("SELECT a FROM WHERE")
        except SqlParseError as exc:
            assert exc.offset >= 0
        else:
            pytest.fail("expected SqlParseError")


class TestNormalizedRendering:
    CASES = [
        "SELECT a, b FROM t WHERE c = 1 ORDER BY a DESC LIMIT 5",
        "SELECT DISTINCT x FROM t GROUP BY x HAVING count(*) > 1",
        "SELECT * FROM a LEFT JOIN b ON a.id = b.a_id",
        "WITH c AS (SELECT 1 AS one) SELECT one FROM c",
        "SELECT CASE WHEN a THEN 1 ELSE 2 END FROM t",
        "SELECT a FROM t WHERE b IN (1, 2, 3) AND c NOT IN (SELECT c FROM u)",
        "SELECT a FROM t UNION ALL SELECT a FROM u",
        "SELECT count(*) FILTER (WHERE x > 0) FROM t",
    ]

    @pytest.mark.parametrize("sql", CASES)
    def test_normalization_is_a_fixed_point(self, sql):
        first = render_query(parse_single_query(sql))
        second = render_query(parse_single_query(first))
        assert first == second


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_classify_is_total_on_arbitrary_text(text):
    # Never raises; unknown shapes land on the blocking side.
    classify_statement(text)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="SELECT FROM WHERE ();'\"-/*abc123,.=<>", max_size=80))
def test_classify_is_total_on_sql_shaped_noise(text):
    classify_statement(text)
