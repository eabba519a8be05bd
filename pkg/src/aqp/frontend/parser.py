"""Recursive-descent parser for the supported subset.

Nothing is silently dropped: text outside the grammar raises
``SqlSyntaxError`` with the byte offset of the offending token, and
recognized-but-unapproximable constructs (EXISTS, IN with a subquery) set
the query's ``passthrough`` reason so it runs exactly.
"""

from __future__ import annotations

from typing import Optional

from ..errors import SqlSyntaxError
from .ast import (
    AVG,
    AggCall,
    BinOp,
    COUNT,
    COUNT_DISTINCT,
    ColRef,
    ExistsSubquery,
    InList,
    InSubquery,
    JoinCond,
    LikeOp,
    Literal,
    MAX,
    MIN,
    Negate,
    NotOp,
    OrderItem,
    QUANTILE,
    QueryAst,
    STDDEV,
    ScalarSubquery,
    SelectItem,
    SUM,
    SqlExpr,
    TableRef,
    VAR,
    aggregates_in,
    column_refs_in,
    subqueries_in,
)
from .lexer import Token, tokenize

AGG_NAMES = {
    "count": COUNT,
    "sum": SUM,
    "avg": AVG,
    "var": VAR,
    "variance": VAR,
    "var_samp": VAR,
    "stddev": STDDEV,
    "stddev_samp": STDDEV,
    "min": MIN,
    "max": MAX,
    "quantile": QUANTILE,
    "percentile": QUANTILE,
}


class _Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.tokens = tokenize(sql)
        self.i = 0

    # -- token helpers -----------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.type != "end":
            self.i += 1
        return tok

    def accept(self, type_: str, text: Optional[str] = None) -> Optional[Token]:
        tok = self.peek()
        if tok.type == type_ and (text is None or tok.text == text):
            return self.next()
        return None

    def expect(self, type_: str, text: Optional[str] = None) -> Token:
        tok = self.accept(type_, text)
        if tok is None:
            got = self.peek()
            want = text or type_
            raise SqlSyntaxError(got.pos, f"expected {want}, found {got.text or 'end'!r}")
        return tok

    # -- grammar ------------------------------------------------------------

    def parse_query(self, top_level=True) -> QueryAst:
        self.expect("keyword", "select")
        star = False
        items: list[SelectItem] = []
        if self.accept("symbol", "*"):
            star = True
        else:
            items.append(self.select_item())
            while self.accept("symbol", ","):
                items.append(self.select_item())
        self.expect("keyword", "from")
        tables = [self.table_ref()]
        join_conds: list[tuple[JoinCond, ...]] = []
        while True:
            if self.accept("keyword", "inner"):
                self.expect("keyword", "join")
            elif not self.accept("keyword", "join"):
                break
            tables.append(self.table_ref())
            self.expect("keyword", "on")
            conds = [self.join_equality()]
            while self.accept("keyword", "and"):
                conds.append(self.join_equality())
            join_conds.append(tuple(conds))
        where = None
        if self.accept("keyword", "where"):
            where = self.predicate()
        group_by: list[ColRef] = []
        if self.accept("keyword", "group"):
            self.expect("keyword", "by")
            group_by.append(self.column_ref())
            while self.accept("symbol", ","):
                group_by.append(self.column_ref())
        order_by: list[OrderItem] = []
        if top_level and self.accept("keyword", "order"):
            self.expect("keyword", "by")
            while True:
                ref = self.column_ref()
                desc = bool(self.accept("keyword", "desc"))
                if not desc:
                    self.accept("keyword", "asc")
                order_by.append(OrderItem(ref, desc))
                if not self.accept("symbol", ","):
                    break
        limit = None
        if top_level and self.accept("keyword", "limit"):
            tok = self.expect("number")
            limit = int(tok.text)
        ast = QueryAst(
            select=tuple(items),
            tables=tuple(tables),
            join_conds=tuple(join_conds),
            where=where,
            group_by=tuple(group_by),
            order_by=tuple(order_by),
            limit=limit,
            star=star,
        )
        return ast

    def select_item(self) -> SelectItem:
        expr = self.expr()
        alias = None
        if self.accept("keyword", "as"):
            alias = self.expect("ident").text
        elif self.peek().type == "ident":
            alias = self.next().text
        return SelectItem(expr, alias)

    def table_ref(self) -> TableRef:
        if self.accept("symbol", "("):
            sub = self.parse_query(top_level=False)
            self.expect("symbol", ")")
            self.accept("keyword", "as")
            alias = self.expect("ident").text
            return TableRef(alias=alias, subquery=sub)
        name = self.expect("ident").text
        alias = name
        if self.accept("keyword", "as"):
            alias = self.expect("ident").text
        elif self.peek().type == "ident":
            alias = self.next().text
        return TableRef(alias=alias, name=name)

    def join_equality(self) -> JoinCond:
        left = self.column_ref()
        self.expect("symbol", "=")
        right = self.column_ref()
        return JoinCond(left, right)

    def column_ref(self) -> ColRef:
        first = self.expect("ident").text
        if self.accept("symbol", "."):
            return ColRef(self.expect("ident").text, table=first)
        return ColRef(first)

    # predicates -------------------------------------------------------------

    def predicate(self) -> SqlExpr:
        left = self.pred_conjunction()
        while self.accept("keyword", "or"):
            left = BinOp("or", left, self.pred_conjunction())
        return left

    def pred_conjunction(self) -> SqlExpr:
        left = self.pred_unary()
        while self.accept("keyword", "and"):
            left = BinOp("and", left, self.pred_unary())
        return left

    def pred_unary(self) -> SqlExpr:
        if self.accept("keyword", "not"):
            child = self.pred_unary()
            if isinstance(child, ExistsSubquery):
                return ExistsSubquery(child.query, negated=not child.negated)
            return NotOp(child)
        if self.peek().text == "exists":
            self.next()
            self.expect("symbol", "(")
            sub = self.parse_query(top_level=False)
            self.expect("symbol", ")")
            return ExistsSubquery(sub)
        if self.peek().text == "(" and self._looks_like_pred_group():
            self.next()
            inner = self.predicate()
            self.expect("symbol", ")")
            return inner
        return self.comparison()

    def _looks_like_pred_group(self):
        # a parenthesized predicate, as opposed to an arithmetic group:
        # scan ahead for a comparison operator before the matching paren
        depth = 0
        j = self.i
        while j < len(self.tokens):
            t = self.tokens[j]
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
                if depth == 0:
                    return False
            elif depth == 1 and t.type == "keyword" and t.text in ("and", "or", "exists"):
                return True
            elif depth == 1 and t.text in ("<", "<=", ">", ">=", "=", "<>", "!="):
                return True
            elif depth == 1 and t.type == "keyword" and t.text == "select":
                return False
            j += 1
        return False

    def comparison(self) -> SqlExpr:
        left = self.expr()
        tok = self.peek()
        if tok.type == "keyword" and tok.text == "in":
            self.next()
            self.expect("symbol", "(")
            if self.peek().text == "select":
                sub = self.parse_query(top_level=False)
                self.expect("symbol", ")")
                return InSubquery(left, sub)
            options = [self.literal_value()]
            while self.accept("symbol", ","):
                options.append(self.literal_value())
            self.expect("symbol", ")")
            return InList(left, tuple(options))
        if tok.type == "keyword" and tok.text == "like":
            self.next()
            pattern = self.expect("string").text
            return LikeOp(left, pattern)
        if tok.text in ("<", "<=", ">", ">=", "=", "<>", "!="):
            self.next()
            op = "!=" if tok.text == "<>" else tok.text
            if self.peek().text == "(" and self.peek(1).text == "select":
                self.next()
                sub = self.parse_query(top_level=False)
                self.expect("symbol", ")")
                return BinOp(op, left, ScalarSubquery(sub))
            return BinOp(op, left, self.expr())
        raise SqlSyntaxError(tok.pos, f"expected a comparison, found {tok.text!r}")

    def literal_value(self):
        tok = self.next()
        if tok.type == "number":
            return _number(tok.text)
        if tok.type == "string":
            return tok.text
        if tok.type == "keyword" and tok.text in ("true", "false"):
            return tok.text == "true"
        raise SqlSyntaxError(tok.pos, "expected a literal")

    # value expressions --------------------------------------------------------

    def expr(self) -> SqlExpr:
        left = self.term()
        while True:
            tok = self.peek()
            if tok.text in ("+", "-") and tok.type == "symbol":
                self.next()
                left = BinOp(tok.text, left, self.term())
            else:
                return left

    def term(self) -> SqlExpr:
        left = self.factor()
        while True:
            tok = self.peek()
            if tok.text in ("*", "/") and tok.type == "symbol":
                self.next()
                left = BinOp(tok.text, left, self.factor())
            else:
                return left

    def factor(self) -> SqlExpr:
        tok = self.peek()
        if tok.type == "symbol" and tok.text == "-":
            self.next()
            return Negate(self.factor())
        if tok.type == "symbol" and tok.text == "(":
            self.next()
            inner = self.expr()
            self.expect("symbol", ")")
            return inner
        if tok.type == "number":
            self.next()
            return Literal(_number(tok.text))
        if tok.type == "string":
            self.next()
            return Literal(tok.text)
        if tok.type == "keyword" and tok.text in ("true", "false"):
            self.next()
            return Literal(tok.text == "true")
        if tok.type == "keyword" and tok.text == "null":
            self.next()
            return Literal(None)
        if tok.type == "ident":
            if self.peek(1).text == "(":
                return self.call()
            return self.column_ref()
        raise SqlSyntaxError(tok.pos, f"unexpected token {tok.text!r}")

    def call(self) -> SqlExpr:
        name_tok = self.expect("ident")
        name = name_tok.text.lower()
        self.expect("symbol", "(")
        if name not in AGG_NAMES:
            raise SqlSyntaxError(name_tok.pos, f"unknown function {name_tok.text!r}")
        kind = AGG_NAMES[name]
        if kind == COUNT:
            if self.accept("symbol", "*"):
                self.expect("symbol", ")")
                return AggCall(COUNT)
            if self.accept("keyword", "distinct"):
                arg = self.expr()
                self.expect("symbol", ")")
                return AggCall(COUNT_DISTINCT, arg)
            arg = self.expr()
            self.expect("symbol", ")")
            return AggCall(COUNT, arg)
        arg = self.expr()
        param = None
        if kind == QUANTILE:
            self.expect("symbol", ",")
            param = _number(self.expect("number").text)
            if not 0.0 < param < 1.0:
                raise SqlSyntaxError(name_tok.pos, "quantile fraction must be in (0,1)")
        self.expect("symbol", ")")
        return AggCall(kind, arg, param)


def _number(text: str):
    if any(c in text for c in ".eE"):
        return float(text)
    return int(text)


def _mark_passthrough(ast: QueryAst) -> QueryAst:
    reasons = []
    for sub in subqueries_in(ast.where):
        if isinstance(sub, ExistsSubquery):
            reasons.append("EXISTS subquery is not approximated")
        elif isinstance(sub, InSubquery):
            reasons.append("IN subquery is not approximated")
    if reasons:
        return ast.with_(passthrough="; ".join(sorted(set(reasons))))
    return ast


def _validate(ast: QueryAst, sql: str) -> QueryAst:
    has_agg = ast.is_aggregate
    if has_agg:
        grouped = {(c.table, c.name) for c in ast.group_by}
        grouped_names = {c.name for c in ast.group_by}
        for item in ast.select:
            aggs = aggregates_in(item.expr)
            if aggs:
                continue
            for ref in column_refs_in(item.expr):
                if (ref.table, ref.name) in grouped or ref.name in grouped_names:
                    continue
                raise SqlSyntaxError(
                    0, f"column {ref} must appear in group by or inside an aggregate"
                )
    else:
        if ast.group_by:
            raise SqlSyntaxError(0, "group by without aggregates")
    for table in ast.tables:
        if table.is_derived:
            for inner in table.subquery.tables:
                if inner.is_derived and any(
                    t.is_derived for t in inner.subquery.tables
                ):
                    raise SqlSyntaxError(0, "derived tables nest at most one level")
    return ast


def parse(sql: str) -> QueryAst:
    """Parse one statement of the supported subset into an AST."""
    parser = _Parser(sql)
    ast = parser.parse_query()
    trailing = parser.peek()
    if trailing.type != "end" and trailing.text != ";":
        raise SqlSyntaxError(trailing.pos, f"trailing input {trailing.text!r}")
    return _mark_passthrough(_validate(ast, sql))
