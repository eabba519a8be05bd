"""Splitting extreme aggregates out of a query.

min/max cannot be approximated from samples with useful error bounds, so
a query carrying both extreme and mean-like aggregates is decomposed into
two queries over the same FROM/WHERE/GROUP BY. The caller merges results
by group key, keeping the original select order.
"""

from __future__ import annotations

from typing import Optional

from .ast import QueryAst, SelectItem, aggregates_in


def split_extreme_aggregates(
    ast: QueryAst,
) -> tuple[Optional[QueryAst], Optional[QueryAst]]:
    """Return (approximable part, exact part); either may be None.

    Select items whose expressions mix extreme and mean-like aggregates
    force the whole query into the exact part.
    """
    approx_items: list[SelectItem] = []
    exact_items: list[SelectItem] = []
    shared_items: list[SelectItem] = []
    for item in ast.select:
        aggs = aggregates_in(item.expr)
        if not aggs:
            shared_items.append(item)
            continue
        extremes = [a for a in aggs if a.is_extreme]
        if extremes and len(extremes) != len(aggs):
            # mixed expression: run everything exactly
            return None, ast
        (exact_items if extremes else approx_items).append(item)

    approx = (
        ast.with_(select=tuple(shared_items + approx_items)) if approx_items else None
    )
    exact = ast.with_(select=tuple(shared_items + exact_items)) if exact_items else None
    return approx, exact
