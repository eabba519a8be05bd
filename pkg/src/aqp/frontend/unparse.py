"""Serialize an AST back into SQL text."""

from __future__ import annotations

from .ast import (
    AggCall,
    BinOp,
    COUNT,
    COUNT_DISTINCT,
    ColRef,
    ExistsSubquery,
    InList,
    InSubquery,
    LikeOp,
    Literal,
    Negate,
    NotOp,
    QUANTILE,
    QueryAst,
    ScalarSubquery,
    SqlExpr,
)

_PRECEDENCE = {"or": 1, "and": 2, "=": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
               "+": 4, "-": 4, "*": 5, "/": 5}


def _literal(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value)


def unparse_expr(expr: SqlExpr, parent_prec: int = 0) -> str:
    if isinstance(expr, ColRef):
        return str(expr)
    if isinstance(expr, Literal):
        return _literal(expr.value)
    if isinstance(expr, BinOp):
        prec = _PRECEDENCE[expr.op]
        op = expr.op.upper() if expr.op in ("and", "or") else expr.op
        text = f"{unparse_expr(expr.left, prec)} {op} {unparse_expr(expr.right, prec + 1)}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(expr, NotOp):
        return f"NOT {unparse_expr(expr.child, 6)}"
    if isinstance(expr, Negate):
        return f"-{unparse_expr(expr.child, 6)}"
    if isinstance(expr, InList):
        opts = ", ".join(_literal(v) for v in expr.options)
        return f"{unparse_expr(expr.child, 6)} IN ({opts})"
    if isinstance(expr, LikeOp):
        return f"{unparse_expr(expr.child, 6)} LIKE {_literal(expr.pattern)}"
    if isinstance(expr, AggCall):
        if expr.kind == COUNT and expr.arg is None:
            return "count(*)"
        if expr.kind == COUNT_DISTINCT:
            return f"count(DISTINCT {unparse_expr(expr.arg)})"
        if expr.kind == QUANTILE:
            return f"quantile({unparse_expr(expr.arg)}, {expr.param!r})"
        return f"{expr.kind}({unparse_expr(expr.arg)})"
    if isinstance(expr, ScalarSubquery):
        return f"({unparse(expr.query)})"
    if isinstance(expr, ExistsSubquery):
        head = "NOT EXISTS" if expr.negated else "EXISTS"
        return f"{head} ({unparse(expr.query)})"
    if isinstance(expr, InSubquery):
        return f"{unparse_expr(expr.child, 6)} IN ({unparse(expr.query)})"
    raise TypeError(f"cannot unparse {expr!r}")


def unparse(ast: QueryAst) -> str:
    parts = ["SELECT"]
    if ast.star:
        parts.append("*")
    else:
        items = []
        for item in ast.select:
            text = unparse_expr(item.expr)
            if item.alias:
                text += f" AS {item.alias}"
            items.append(text)
        parts.append(", ".join(items))
    froms = []
    for i, table in enumerate(ast.tables):
        if table.is_derived:
            ref = f"({unparse(table.subquery)}) AS {table.alias}"
        elif table.alias != table.name:
            ref = f"{table.name} AS {table.alias}"
        else:
            ref = table.name
        if i == 0:
            froms.append(ref)
        else:
            conds = " AND ".join(
                f"{c.left} = {c.right}" for c in ast.join_conds[i - 1]
            )
            froms.append(f"INNER JOIN {ref} ON {conds}")
    parts.append("FROM " + " ".join(froms))
    if ast.where is not None:
        parts.append("WHERE " + unparse_expr(ast.where))
    if ast.group_by:
        parts.append("GROUP BY " + ", ".join(str(c) for c in ast.group_by))
    if ast.order_by:
        orders = ", ".join(
            f"{o.ref}{' DESC' if o.descending else ''}" for o in ast.order_by
        )
        parts.append("ORDER BY " + orders)
    if ast.limit is not None:
        parts.append(f"LIMIT {ast.limit}")
    return " ".join(parts)
