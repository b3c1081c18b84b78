"""Recursive-descent parser for the PostgreSQL dialect subset used here.

Queries (SELECT / VALUES / set operations / CTEs) are parsed into a full
expression tree. Data-modifying and DDL statements are recognized by shape
and skimmed: enough structure to classify them, no more.
"""

from __future__ import annotations

from .nodes import (
    Between, Binary, Case, Cast, ColumnRef, Cte, DdlStatement, DmlStatement,
    Exists, ExplainStatement, Expr, FuncCall, FuncTable, InList, InSubquery,
    IsTest, Join, Literal, OrderItem, OtherStatement, Param, Paren,
    Query, QueryBody, ScalarSubquery, SelectCore, SelectItem, SelectStatement,
    SetOp, Star, Statement, SubqueryTable, TableExpr, TableRef, TypedLiteral,
    Unary, Values,
)
from .tokenizer import EOF, NUMBER, OP, PARAM, QIDENT, STRING, WORD, Token, tokenize
from ..errors import SqlParseError

# Words that terminate an implicit (AS-less) alias position.
_ALIAS_STOPPERS = {
    "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET", "FETCH",
    "UNION", "EXCEPT", "INTERSECT", "INTO", "ON", "USING", "JOIN", "INNER",
    "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "AND", "OR", "NOT", "AS",
    "WHEN", "THEN", "ELSE", "END", "ASC", "DESC", "NULLS", "FOR", "WINDOW",
    "RETURNING", "WITH", "CASE", "IS", "IN", "LIKE", "ILIKE", "BETWEEN",
    "SIMILAR", "COLLATE", "AT", "OVER", "FILTER", "VALUES",
}

_JOIN_INTRO = {"JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL"}

_SET_OPS = {"UNION", "INTERSECT", "EXCEPT"}

# Words that can never stand as a bare column or table identifier. Words like
# LEFT or RIGHT stay callable as functions: the reservation only applies when
# no '(' follows.
_RESERVED_IDENTS = {
    "SELECT", "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET",
    "UNION", "EXCEPT", "INTERSECT", "JOIN", "INNER", "LEFT", "RIGHT", "FULL",
    "CROSS", "NATURAL", "ON", "USING", "AS", "AND", "OR", "NOT", "WHEN",
    "THEN", "ELSE", "END", "INTO", "VALUES", "BY", "ASC", "DESC", "FETCH",
    "FOR", "WITH", "DISTINCT", "ALL", "IN", "IS", "LIKE", "ILIKE", "BETWEEN",
    "CASE", "EXISTS", "RETURNING",
}

_COMPARISON_OPS = {"=", "<", ">", "<=", ">=", "<>", "!=", "~~", "~~*", "!~~", "!~~*", "~", "~*", "!~"}

_AGG_START = {"SELECT", "VALUES", "WITH", "TABLE"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token helpers ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        i = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[i]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def at_word(self, *words: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind == WORD and tok.upper() in words

    def at_op(self, *ops: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind == OP and tok.value in ops

    def take_word(self, *words: str) -> Token | None:
        if self.at_word(*words):
            return self.next()
        return None

    def expect_word(self, word: str) -> Token:
        tok = self.take_word(word)
        if tok is None:
            got = self.peek()
            raise SqlParseError(f"expected {word}, found {got.value or 'end of input'!r}", got.start)
        return tok

    def expect_op(self, op: str) -> Token:
        if self.at_op(op):
            return self.next()
        got = self.peek()
        raise SqlParseError(f"expected {op!r}, found {got.value or 'end of input'!r}", got.start)

    # -- statement level --------------------------------------------------

    def parse_statements(self) -> list[Statement]:
        stmts: list[Statement] = []
        while self.peek().kind != EOF:
            if self.at_op(";"):
                self.next()
                continue
            stmts.append(self.parse_statement())
            tok = self.peek()
            if tok.kind != EOF and not (tok.kind == OP and tok.value == ";"):
                raise SqlParseError(f"syntax error at or near {tok.value!r}", tok.start)
        return stmts

    def parse_statement(self) -> Statement:
        tok = self.peek()
        if tok.kind != WORD and not (tok.kind == OP and tok.value == "("):
            raise SqlParseError(f"statement cannot start with {tok.value!r}", tok.start)
        word = tok.upper() if tok.kind == WORD else "("
        if word in ("SELECT", "VALUES", "TABLE", "WITH", "("):
            return self.parse_select_statement()
        if word == "EXPLAIN":
            return self.parse_explain()
        if word in ("INSERT", "UPDATE", "DELETE", "MERGE"):
            kind = {"INSERT": "insert", "UPDATE": "update", "DELETE": "delete", "MERGE": "update"}[word]
            start = self.next().start
            end = self.skim_statement()
            return DmlStatement(kind=kind, start=start, end=end)
        if word in ("CREATE", "ALTER", "DROP"):
            kind = {"CREATE": "ddl_create", "ALTER": "ddl_alter", "DROP": "ddl_drop"}[word]
            start = self.next().start
            end = self.skim_statement()
            return DdlStatement(kind=kind, start=start, end=end)
        start = self.next().start
        end = self.skim_statement()
        return OtherStatement(first_word=word, start=start, end=end)

    def parse_explain(self) -> ExplainStatement:
        start = self.expect_word("EXPLAIN").start
        analyze = False
        if self.at_op("("):
            # Option list form: EXPLAIN (ANALYZE, BUFFERS) ...
            self.next()
            depth = 1
            while depth and self.peek().kind != EOF:
                tok = self.next()
                if tok.kind == OP and tok.value == "(":
                    depth += 1
                elif tok.kind == OP and tok.value == ")":
                    depth -= 1
                elif tok.kind == WORD and tok.upper() == "ANALYZE":
                    analyze = True
        else:
            while self.at_word("ANALYZE", "ANALYSE", "VERBOSE"):
                if self.next().upper() in ("ANALYZE", "ANALYSE"):
                    analyze = True
        body = self.parse_statement()
        return ExplainStatement(analyze=analyze, body=body, start=start, end=body.end)

    def skim_statement(self) -> int:
        """Consume tokens to the end of the current statement (top-level ';').

        Returns the end offset of the last consumed token.
        """
        depth = 0
        end = self.peek().start
        while True:
            tok = self.peek()
            if tok.kind == EOF:
                return end
            if tok.kind == OP:
                if tok.value == "(":
                    depth += 1
                elif tok.value == ")":
                    if depth == 0:
                        return end
                    depth -= 1
                elif tok.value == ";" and depth == 0:
                    return end
            end = self.next().end

    def parse_select_statement(self) -> SelectStatement:
        start = self.peek().start
        query = self.parse_query()
        dml = [c for c in query.ctes if c.dml_kind]
        if dml:
            return_kind = dml[0].dml_kind
            assert return_kind is not None
            return_stmt = DmlStatement(kind=return_kind, ctes=query.ctes, start=start, end=query.end)
            return return_stmt  # classified by CTE side effect
        return SelectStatement(query=query, start=start, end=query.end)

    # -- query level -------------------------------------------------------

    def parse_query(self) -> Query:
        start = self.peek().start
        ctes: list[Cte] = []
        if self.at_word("WITH"):
            ctes = self.parse_with_clause()
        body = self.parse_query_body()
        order_by: list[OrderItem] = []
        limit: Expr | None = None
        limit_all = False
        offset: Expr | None = None
        locking: list[str] = []
        if self.at_word("ORDER"):
            self.next()
            self.expect_word("BY")
            order_by.append(self.parse_order_item())
            while self.at_op(","):
                self.next()
                order_by.append(self.parse_order_item())
        while self.at_word("LIMIT", "OFFSET", "FETCH", "FOR"):
            word = self.next().upper()
            if word == "LIMIT":
                if self.at_word("ALL"):
                    self.next()
                    limit_all = True
                else:
                    limit = self.parse_expr()
            elif word == "OFFSET":
                offset = self.parse_expr_no_row_words()
                self.take_word("ROW") or self.take_word("ROWS")
            elif word == "FETCH":
                self.take_word("FIRST") or self.take_word("NEXT")
                if not self.at_word("ROW", "ROWS"):
                    limit = self.parse_expr_no_row_words()
                else:
                    limit = Literal(text="1", kind="number", start=self.peek().start, end=self.peek().start)
                self.take_word("ROW") or self.take_word("ROWS")
                self.expect_word("ONLY")
            else:  # FOR UPDATE / FOR SHARE / FOR NO KEY UPDATE / FOR KEY SHARE
                parts = ["FOR"]
                while self.at_word("UPDATE", "SHARE", "NO", "KEY"):
                    parts.append(self.next().upper())
                if self.at_word("OF"):
                    self.next()
                    parts.append("OF")
                    while self.peek().kind in (WORD, QIDENT):
                        parts.append(self.next().value)
                        if self.at_op(","):
                            self.next()
                        else:
                            break
                self.take_word("NOWAIT")
                if self.at_word("SKIP"):
                    self.next()
                    self.expect_word("LOCKED")
                locking.append(" ".join(parts))
        end = self.tokens[self.pos - 1].end if self.pos else start
        return Query(
            ctes=ctes, body=body, order_by=order_by, limit=limit, limit_all=limit_all,
            offset=offset, locking=locking, start=start, end=end,
        )

    def parse_expr_no_row_words(self) -> Expr:
        return self.parse_expr()

    def parse_with_clause(self) -> list[Cte]:
        self.expect_word("WITH")
        self.take_word("RECURSIVE")
        ctes = [self.parse_cte()]
        while self.at_op(","):
            self.next()
            ctes.append(self.parse_cte())
        return ctes

    def parse_cte(self) -> Cte:
        name_tok = self.next()
        if name_tok.kind not in (WORD, QIDENT):
            raise SqlParseError("expected CTE name", name_tok.start)
        name = _ident_text(name_tok)
        columns: list[str] = []
        if self.at_op("("):
            self.next()
            while not self.at_op(")"):
                col = self.next()
                if col.kind in (WORD, QIDENT):
                    columns.append(_ident_text(col))
                if self.at_op(","):
                    self.next()
            self.expect_op(")")
        self.expect_word("AS")
        self.take_word("NOT")  # [NOT] MATERIALIZED
        self.take_word("MATERIALIZED")
        open_tok = self.expect_op("(")
        first = self.peek()
        if first.kind == WORD and first.upper() in ("INSERT", "UPDATE", "DELETE", "MERGE"):
            kind = {"INSERT": "insert", "UPDATE": "update", "DELETE": "delete", "MERGE": "update"}[first.upper()]
            self.next()
            self.skim_statement()
            end = self.expect_op(")").end
            return Cte(name=name, columns=columns, query=None, dml_kind=kind,
                       start=name_tok.start, end=end)
        query = self.parse_query()
        end = self.expect_op(")").end
        return Cte(name=name, columns=columns, query=query, dml_kind=None,
                   start=name_tok.start, end=end)

    def parse_query_body(self) -> QueryBody:
        left = self.parse_query_term()
        while self.at_word(*_SET_OPS):
            op = self.next().upper()
            all_flag = bool(self.take_word("ALL"))
            self.take_word("DISTINCT")
            right = self.parse_query_term()
            left = SetOp(op=op, all=all_flag, left=left, right=right,
                         start=_body_start(left), end=_body_end(right))
        return left

    def parse_query_term(self) -> QueryBody:
        if self.at_op("("):
            open_tok = self.next()
            inner = self.parse_query()
            end = self.expect_op(")").end
            inner.start, inner.end = open_tok.start, end
            return inner
        if self.at_word("VALUES"):
            return self.parse_values()
        if self.at_word("TABLE"):
            start = self.next().start
            ref = self.parse_table_name()
            item = SelectItem(expr=Star(qualifier=[], start=start, end=ref.end), alias=None,
                              start=start, end=ref.end)
            return SelectCore(items=[item], from_clause=[ref], start=start, end=ref.end)
        return self.parse_select_core()

    def parse_values(self) -> Values:
        start = self.expect_word("VALUES").start
        rows: list[list[Expr]] = []
        while True:
            self.expect_op("(")
            row: list[Expr] = [self.parse_expr()]
            while self.at_op(","):
                self.next()
                row.append(self.parse_expr())
            end = self.expect_op(")").end
            rows.append(row)
            if self.at_op(","):
                self.next()
                continue
            break
        return Values(rows=rows, start=start, end=end)

    def parse_select_core(self) -> SelectCore:
        start = self.expect_word("SELECT").start
        distinct = False
        distinct_on: list[Expr] = []
        if self.take_word("ALL"):
            pass
        elif self.take_word("DISTINCT"):
            distinct = True
            if self.at_word("ON"):
                self.next()
                self.expect_op("(")
                distinct_on.append(self.parse_expr())
                while self.at_op(","):
                    self.next()
                    distinct_on.append(self.parse_expr())
                self.expect_op(")")
        items = [self.parse_select_item()]
        while self.at_op(","):
            self.next()
            items.append(self.parse_select_item())
        into_table: str | None = None
        if self.at_word("INTO"):
            self.next()
            self.take_word("TEMP") or self.take_word("TEMPORARY") or self.take_word("UNLOGGED")
            self.take_word("TABLE")
            ref = self.parse_table_name()
            into_table = ref.relation_name()
        from_clause: list[TableExpr] = []
        if self.at_word("FROM"):
            self.next()
            from_clause.append(self.parse_table_expr())
            while self.at_op(","):
                self.next()
                from_clause.append(self.parse_table_expr())
        where: Expr | None = None
        if self.at_word("WHERE"):
            self.next()
            where = self.parse_expr()
        group_by: list[Expr] = []
        if self.at_word("GROUP"):
            self.next()
            self.expect_word("BY")
            self.take_word("ALL") or self.take_word("DISTINCT")
            group_by.append(self.parse_expr())
            while self.at_op(","):
                self.next()
                group_by.append(self.parse_expr())
        having: Expr | None = None
        if self.at_word("HAVING"):
            self.next()
            having = self.parse_expr()
        window_text: str | None = None
        if self.at_word("WINDOW"):
            window_start = self.peek().start
            self.next()
            while True:
                self.next()  # window name
                self.expect_word("AS")
                self.expect_op("(")
                depth = 1
                while depth and self.peek().kind != EOF:
                    tok = self.next()
                    if tok.kind == OP and tok.value == "(":
                        depth += 1
                    elif tok.kind == OP and tok.value == ")":
                        depth -= 1
                if self.at_op(","):
                    self.next()
                    continue
                break
            window_text = self.text[window_start:self.tokens[self.pos - 1].end]
        end = self.tokens[self.pos - 1].end if self.pos else start
        return SelectCore(
            items=items, from_clause=from_clause, where=where, group_by=group_by,
            having=having, distinct=distinct, distinct_on=distinct_on,
            into_table=into_table, window_text=window_text, start=start, end=end,
        )

    def parse_select_item(self) -> SelectItem:
        start = self.peek().start
        if self.at_op("*"):
            tok = self.next()
            expr: Expr = Star(qualifier=[], start=tok.start, end=tok.end)
        else:
            expr = self.parse_expr()
        alias = self.parse_alias()
        end = self.tokens[self.pos - 1].end
        return SelectItem(expr=expr, alias=alias, start=start, end=end)

    def parse_alias(self) -> str | None:
        if self.take_word("AS"):
            tok = self.next()
            if tok.kind not in (WORD, QIDENT, STRING):
                raise SqlParseError("expected alias after AS", tok.start)
            return _ident_text(tok)
        tok = self.peek()
        if tok.kind == QIDENT:
            self.next()
            return _ident_text(tok)
        if tok.kind == WORD and tok.upper() not in _ALIAS_STOPPERS:
            self.next()
            return _ident_text(tok)
        return None

    # -- FROM clause --------------------------------------------------------

    def parse_table_expr(self) -> TableExpr:
        left = self.parse_table_primary()
        while True:
            natural = False
            if self.at_word("NATURAL"):
                natural = True
                kind_tok = self.peek(1)
                if not (kind_tok.kind == WORD and kind_tok.upper() in _JOIN_INTRO):
                    break
                self.next()
            if not (self.peek().kind == WORD and self.peek().upper() in _JOIN_INTRO):
                break
            kind = "INNER"
            word = self.next().upper()
            if word in ("LEFT", "RIGHT", "FULL"):
                kind = word
                self.take_word("OUTER")
                self.expect_word("JOIN")
            elif word == "CROSS":
                kind = "CROSS"
                self.expect_word("JOIN")
            elif word == "INNER":
                self.expect_word("JOIN")
            # bare JOIN falls through as INNER
            right = self.parse_table_primary()
            on: Expr | None = None
            using: list[str] = []
            if kind != "CROSS" and not natural:
                if self.take_word("ON"):
                    on = self.parse_expr()
                elif self.take_word("USING"):
                    self.expect_op("(")
                    while not self.at_op(")"):
                        tok = self.next()
                        if tok.kind in (WORD, QIDENT):
                            using.append(_ident_text(tok))
                        if self.at_op(","):
                            self.next()
                    self.expect_op(")")
            left = Join(left=left, right=right, kind=kind, on=on, using=using,
                        start=_table_start(left), end=self.tokens[self.pos - 1].end)
        return left

    def parse_table_primary(self) -> TableExpr:
        if self.at_op("("):
            open_tok = self.next()
            if self.at_word(*_AGG_START) or self.at_op("("):
                query = self.parse_query()
                self.expect_op(")")
                alias, col_aliases = self.parse_table_alias()
                return SubqueryTable(query=query, alias=alias, column_aliases=col_aliases,
                                     start=open_tok.start, end=self.tokens[self.pos - 1].end)
            inner = self.parse_table_expr()
            self.expect_op(")")
            return inner
        if self.at_word("LATERAL"):
            self.next()
            return self.parse_table_primary()
        tok = self.peek()
        if tok.kind not in (WORD, QIDENT):
            raise SqlParseError(f"expected table name, found {tok.value!r}", tok.start)
        # Function in FROM: name(...) possibly schema-qualified.
        probe = self.pos
        parts_end = probe
        while self.tokens[parts_end].kind in (WORD, QIDENT):
            if self.tokens[parts_end + 1].kind == OP and self.tokens[parts_end + 1].value == ".":
                parts_end += 2
            else:
                break
        if self.tokens[parts_end].kind in (WORD, QIDENT) and \
                self.tokens[parts_end + 1].kind == OP and self.tokens[parts_end + 1].value == "(":
            func = self.parse_primary()
            if isinstance(func, FuncCall):
                alias, col_aliases = self.parse_table_alias()
                return FuncTable(func=func, alias=alias, column_aliases=col_aliases,
                                 start=func.start, end=self.tokens[self.pos - 1].end)
            raise SqlParseError("expected table function", tok.start)
        ref = self.parse_table_name()
        alias, col_aliases = self.parse_table_alias()
        if alias:
            ref.alias = alias
            ref.end = self.tokens[self.pos - 1].end
        return ref

    def parse_table_name(self) -> TableRef:
        tok = self.peek()
        if tok.kind == WORD and tok.upper() in _RESERVED_IDENTS:
            raise SqlParseError(f"expected table name, found keyword {tok.value!r}", tok.start)
        tok = self.next()
        if tok.kind not in (WORD, QIDENT):
            raise SqlParseError(f"expected table name, found {tok.value!r}", tok.start)
        parts, quoted = [tok.value], [tok.kind == QIDENT]
        end = tok.end
        while self.at_op("."):
            self.next()
            part = self.next()
            if part.kind not in (WORD, QIDENT):
                raise SqlParseError("expected identifier after '.'", part.start)
            parts.append(part.value)
            quoted.append(part.kind == QIDENT)
            end = part.end
        return TableRef(parts=parts, quoted=quoted, start=tok.start, end=end)

    def parse_table_alias(self) -> tuple[str | None, list[str]]:
        alias = self.parse_alias()
        col_aliases: list[str] = []
        if alias and self.at_op("("):
            self.next()
            while not self.at_op(")"):
                tok = self.next()
                if tok.kind in (WORD, QIDENT):
                    col_aliases.append(_ident_text(tok))
                if self.at_op(","):
                    self.next()
            self.expect_op(")")
        return alias, col_aliases

    # -- expressions ----------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_word("OR"):
            self.next()
            right = self.parse_and()
            left = Binary(op="OR", left=left, right=right, start=left.start, end=right.end)
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at_word("AND"):
            self.next()
            right = self.parse_not()
            left = Binary(op="AND", left=left, right=right, start=left.start, end=right.end)
        return left

    def parse_not(self) -> Expr:
        if self.at_word("NOT"):
            tok = self.next()
            operand = self.parse_not()
            return Unary(op="NOT", operand=operand, start=tok.start, end=operand.end)
        return self.parse_predicate()

    def parse_predicate(self) -> Expr:
        left = self.parse_comparison()
        while True:
            if self.at_word("IS"):
                self.next()
                negated = bool(self.take_word("NOT"))
                if self.take_word("DISTINCT"):
                    self.expect_word("FROM")
                    right = self.parse_comparison()
                    op = "IS NOT DISTINCT FROM" if negated else "IS DISTINCT FROM"
                    left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
                    continue
                tok = self.next()
                if tok.kind != WORD or tok.upper() not in ("NULL", "TRUE", "FALSE", "UNKNOWN"):
                    raise SqlParseError("expected NULL, TRUE, FALSE or UNKNOWN after IS", tok.start)
                left = IsTest(operand=left, negated=negated, target=tok.upper(),
                              start=left.start, end=tok.end)
                continue
            negated = False
            save = self.pos
            if self.at_word("NOT") and self.peek(1).kind == WORD and \
                    self.peek(1).upper() in ("IN", "LIKE", "ILIKE", "BETWEEN", "SIMILAR"):
                self.next()
                negated = True
            if self.at_word("IN"):
                self.next()
                self.expect_op("(")
                if self.at_word(*_AGG_START):
                    q = self.parse_query()
                    end = self.expect_op(")").end
                    left = InSubquery(operand=left, query=q, negated=negated,
                                      start=left.start, end=end)
                else:
                    items = [self.parse_expr()]
                    while self.at_op(","):
                        self.next()
                        items.append(self.parse_expr())
                    end = self.expect_op(")").end
                    left = InList(operand=left, items=items, negated=negated,
                                  start=left.start, end=end)
                continue
            if self.at_word("LIKE", "ILIKE"):
                word = self.next().upper()
                right = self.parse_comparison()
                if self.at_word("ESCAPE"):
                    self.next()
                    esc = self.parse_comparison()
                    right = Binary(op="ESCAPE", left=right, right=esc,
                                   start=right.start, end=esc.end)
                op = f"NOT {word}" if negated else word
                left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
                continue
            if self.at_word("SIMILAR"):
                self.next()
                self.expect_word("TO")
                right = self.parse_comparison()
                op = "NOT SIMILAR TO" if negated else "SIMILAR TO"
                left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
                continue
            if self.at_word("BETWEEN"):
                self.next()
                self.take_word("SYMMETRIC")
                low = self.parse_additive()
                self.expect_word("AND")
                high = self.parse_additive()
                left = Between(operand=left, low=low, high=high, negated=negated,
                               start=left.start, end=high.end)
                continue
            self.pos = save
            break
        return left

    def parse_comparison(self) -> Expr:
        left = self.parse_additive()
        while self.peek().kind == OP and self.peek().value in _COMPARISON_OPS:
            op = self.next().value
            right = self.parse_additive()
            left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at_op("+", "-", "||", "->", "->>", "#>", "#>>", "^"):
            op = self.next().value
            right = self.parse_multiplicative()
            left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at_op("*", "/", "%"):
            op = self.next().value
            right = self.parse_unary()
            left = Binary(op=op, left=left, right=right, start=left.start, end=right.end)
        return left

    def parse_unary(self) -> Expr:
        if self.at_op("-", "+"):
            tok = self.next()
            operand = self.parse_unary()
            return Unary(op=tok.value, operand=operand, start=tok.start, end=operand.end)
        return self.parse_cast_chain()

    def parse_cast_chain(self) -> Expr:
        expr = self.parse_primary()
        while True:
            if self.at_op("::"):
                self.next()
                type_text, end = self.parse_type_name()
                expr = Cast(operand=expr, type_text=type_text, start=expr.start, end=end)
                continue
            if self.at_op("["):
                open_tok = self.next()
                depth = 1
                end = open_tok.end
                while depth and self.peek().kind != EOF:
                    tok = self.next()
                    if tok.kind == OP and tok.value == "[":
                        depth += 1
                    elif tok.kind == OP and tok.value == "]":
                        depth -= 1
                    end = tok.end
                from .nodes import Subscript

                expr = Subscript(operand=expr, index_text=self.text[open_tok.start:end],
                                 start=expr.start, end=end)
                continue
            break
        return expr

    def parse_type_name(self) -> tuple[str, int]:
        tok = self.next()
        if tok.kind not in (WORD, QIDENT):
            raise SqlParseError(f"expected type name, found {tok.value!r}", tok.start)
        words = [tok.value]
        end = tok.end
        # Multi-word types: double precision, timestamp with time zone, ...
        while self.at_word("PRECISION", "VARYING", "WITH", "WITHOUT", "TIME", "ZONE"):
            nxt = self.next()
            words.append(nxt.value)
            end = nxt.end
        type_text = " ".join(words)
        if self.at_op("("):
            self.next()
            inner = []
            while not self.at_op(")"):
                inner.append(self.next().value)
                if self.at_op(","):
                    inner.append(", ")
                    self.next()
            end = self.expect_op(")").end
            type_text += "(" + "".join(inner) + ")"
        if self.at_op("[") and self.peek(1).kind == OP and self.peek(1).value == "]":
            self.next()
            end = self.next().end
            type_text += "[]"
        return type_text, end

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == STRING:
            self.next()
            return Literal(text=tok.value, kind="string", start=tok.start, end=tok.end)
        if tok.kind == NUMBER:
            self.next()
            return Literal(text=tok.value, kind="number", start=tok.start, end=tok.end)
        if tok.kind == PARAM:
            self.next()
            return Param(text=tok.value, start=tok.start, end=tok.end)
        if tok.kind == OP and tok.value == "(":
            self.next()
            if self.at_word(*_AGG_START):
                q = self.parse_query()
                end = self.expect_op(")").end
                return ScalarSubquery(query=q, start=tok.start, end=end)
            inner = self.parse_expr()
            if self.at_op(","):
                # Row constructor: (a, b, ...) — treat as function-like row value.
                items = [inner]
                while self.at_op(","):
                    self.next()
                    items.append(self.parse_expr())
                end = self.expect_op(")").end
                return FuncCall(parts=["row"], args=items, start=tok.start, end=end)
            end = self.expect_op(")").end
            return Paren(expr=inner, start=tok.start, end=end)
        if tok.kind == QIDENT:
            return self.parse_column_or_call()
        if tok.kind != WORD:
            raise SqlParseError(f"unexpected token {tok.value!r}", tok.start)
        word = tok.upper()
        if word == "NULL":
            self.next()
            return Literal(text=tok.value, kind="null", start=tok.start, end=tok.end)
        if word in ("TRUE", "FALSE"):
            self.next()
            return Literal(text=tok.value, kind="bool", start=tok.start, end=tok.end)
        if word == "CASE":
            return self.parse_case()
        if word == "EXISTS":
            self.next()
            self.expect_op("(")
            q = self.parse_query()
            end = self.expect_op(")").end
            return Exists(query=q, start=tok.start, end=end)
        if word == "CAST":
            self.next()
            self.expect_op("(")
            operand = self.parse_expr()
            self.expect_word("AS")
            type_text, _ = self.parse_type_name()
            end = self.expect_op(")").end
            return Cast(operand=operand, type_text=type_text, start=tok.start, end=end)
        if word in ("INTERVAL", "DATE", "TIMESTAMP", "TIME") and self.peek(1).kind == STRING:
            self.next()
            lit = self.next()
            return TypedLiteral(type_word=word, text=lit.value, start=tok.start, end=lit.end)
        if word == "ARRAY" and self.peek(1).kind == OP and self.peek(1).value == "[":
            self.next()
            self.next()
            items: list[Expr] = []
            if not self.at_op("]"):
                items.append(self.parse_expr())
                while self.at_op(","):
                    self.next()
                    items.append(self.parse_expr())
            end_tok = self.peek()
            if not (end_tok.kind == OP and end_tok.value == "]"):
                raise SqlParseError("expected ']' to close ARRAY", end_tok.start)
            self.next()
            return FuncCall(parts=["array"], args=items, start=tok.start, end=end_tok.end)
        if word == "NOT":
            self.next()
            operand = self.parse_not()
            return Unary(op="NOT", operand=operand, start=tok.start, end=operand.end)
        return self.parse_column_or_call()

    def parse_case(self) -> Expr:
        start = self.expect_word("CASE").start
        operand: Expr | None = None
        if not self.at_word("WHEN"):
            operand = self.parse_expr()
        whens: list[tuple[Expr, Expr]] = []
        while self.at_word("WHEN"):
            self.next()
            cond = self.parse_expr()
            self.expect_word("THEN")
            result = self.parse_expr()
            whens.append((cond, result))
        else_: Expr | None = None
        if self.at_word("ELSE"):
            self.next()
            else_ = self.parse_expr()
        end = self.expect_word("END").end
        if not whens:
            raise SqlParseError("CASE requires at least one WHEN branch", start)
        return Case(operand=operand, whens=whens, else_=else_, start=start, end=end)

    def parse_column_or_call(self) -> Expr:
        tok = self.peek()
        if tok.kind == WORD and tok.upper() in _RESERVED_IDENTS and \
                not self.at_op("(", ahead=1):
            raise SqlParseError(f"unexpected keyword {tok.value!r}", tok.start)
        tok = self.next()
        if tok.kind not in (WORD, QIDENT):
            raise SqlParseError(f"unexpected token {tok.value!r}", tok.start)
        parts, quoted = [tok.value], [tok.kind == QIDENT]
        end = tok.end
        while self.at_op("."):
            if self.peek(1).kind == OP and self.peek(1).value == "*":
                self.next()
                star_tok = self.next()
                return Star(qualifier=parts, start=tok.start, end=star_tok.end)
            self.next()
            part = self.next()
            if part.kind not in (WORD, QIDENT):
                raise SqlParseError("expected identifier after '.'", part.start)
            parts.append(part.value)
            quoted.append(part.kind == QIDENT)
            end = part.end
        if self.at_op("("):
            self.next()
            distinct = False
            star = False
            args: list[Expr] = []
            if self.take_word("DISTINCT"):
                distinct = True
            elif self.take_word("ALL"):
                pass
            if self.at_op("*"):
                self.next()
                star = True
            elif not self.at_op(")"):
                args.append(self.parse_expr())
                while self.at_op(","):
                    self.next()
                    args.append(self.parse_expr())
            agg_order_text: str | None = None
            if self.at_word("ORDER"):
                order_start = self.peek().start
                self.next()
                self.expect_word("BY")
                self.parse_order_item()
                while self.at_op(","):
                    self.next()
                    self.parse_order_item()
                agg_order_text = self.text[order_start:self.tokens[self.pos - 1].end]
            end = self.expect_op(")").end
            call = FuncCall(parts=parts, args=args, distinct=distinct, star=star,
                            agg_order_text=agg_order_text, start=tok.start, end=end)
            end = self.consume_call_suffixes(call, end)
            call.end = end
            return call
        return ColumnRef(parts=parts, quoted=quoted, start=tok.start, end=end)

    def consume_call_suffixes(self, call: FuncCall, end: int) -> int:
        """FILTER (...) and OVER (...) clauses after an aggregate call."""
        while True:
            if self.at_word("FILTER"):
                self.next()
                self.expect_op("(")
                self.expect_word("WHERE")
                cond = self.parse_expr()
                end = self.expect_op(")").end
                call.filter_where = cond
                continue
            if self.at_word("OVER"):
                over_start = self.peek().start
                self.next()
                if self.at_op("("):
                    self.next()
                    depth = 1
                    while depth and self.peek().kind != EOF:
                        tok = self.next()
                        if tok.kind == OP and tok.value == "(":
                            depth += 1
                        elif tok.kind == OP and tok.value == ")":
                            depth -= 1
                        end = tok.end
                else:
                    end = self.next().end  # named window
                call.over_text = self.text[over_start:end]
                continue
            return end

    def parse_order_item(self) -> OrderItem:
        expr = self.parse_expr()
        direction = None
        nulls = None
        if self.at_word("ASC", "DESC"):
            direction = self.next().upper()
        elif self.at_word("USING"):
            self.next()
            self.next()
        if self.at_word("NULLS"):
            self.next()
            tok = self.next()
            if tok.kind != WORD or tok.upper() not in ("FIRST", "LAST"):
                raise SqlParseError("expected FIRST or LAST after NULLS", tok.start)
            nulls = tok.upper()
        return OrderItem(expr=expr, direction=direction, nulls=nulls,
                         start=expr.start, end=self.tokens[self.pos - 1].end)


def _ident_text(tok: Token) -> str:
    if tok.kind == QIDENT:
        return tok.value[1:-1].replace('""', '"')
    if tok.kind == STRING:
        return tok.value[1:-1].replace("''", "'")
    return tok.value


def _body_start(body: QueryBody) -> int:
    return body.start


def _body_end(body: QueryBody) -> int:
    return body.end


def _table_start(t: TableExpr) -> int:
    return t.start


def parse_sql(text: str) -> list[Statement]:
    """Parse SQL text into statements. Raises SqlParseError on malformed input."""
    if not text or not text.strip():
        raise SqlParseError("empty statement", 0)
    return _Parser(text).parse_statements()


def parse_single_query(text: str) -> Query:
    """Parse text that must be exactly one SELECT-shaped statement."""
    stmts = parse_sql(text)
    if len(stmts) != 1:
        raise SqlParseError("expected a single statement", 0)
    stmt = stmts[0]
    if not isinstance(stmt, SelectStatement):
        raise SqlParseError("expected a SELECT statement", stmt.start)
    return stmt.query
