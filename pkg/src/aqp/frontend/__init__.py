"""SQL frontend: parsing, flattening, splitting, unparse, and exact lowering.

The grammar is documented in ``docs/grammar.ebnf`` at the repository root.
"""

from . import ast
from .ast import AggCall, ColRef, QueryAst, SelectItem, TableRef
from .flatten import flatten_comparison_subquery
from .lower import LoweredQuery, lower, output_names_for
from .parser import parse
from .split import split_extreme_aggregates
from .unparse import unparse

__all__ = [
    "AggCall",
    "ColRef",
    "LoweredQuery",
    "QueryAst",
    "SelectItem",
    "TableRef",
    "ast",
    "flatten_comparison_subquery",
    "lower",
    "output_names_for",
    "parse",
    "split_extreme_aggregates",
    "unparse",
]
