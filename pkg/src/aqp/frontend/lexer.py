"""Tokenizer for the supported SQL subset; tokens carry byte offsets."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SqlSyntaxError

KEYWORDS = {
    "select", "from", "where", "group", "by", "order", "limit", "as", "and",
    "or", "not", "in", "like", "exists", "inner", "join", "on", "asc",
    "desc", "distinct", "true", "false", "null", "between",
}

SYMBOLS = ("<=", ">=", "<>", "!=", "<", ">", "=", "(", ")", ",", "+", "-", "*", "/", ".")


@dataclass(frozen=True)
class Token:
    type: str  # keyword | ident | number | string | symbol | end
    text: str
    pos: int


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "-" and sql.startswith("--", i):
            j = sql.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            word = sql[i:j]
            kind = "keyword" if word.lower() in KEYWORDS else "ident"
            tokens.append(Token(kind, word.lower() if kind == "keyword" else word, i))
            i = j
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = False
            seen_exp = False
            while j < n:
                c = sql[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j > i:
                    seen_exp = True
                    j += 1
                    if j < n and sql[j] in "+-":
                        j += 1
                else:
                    break
            tokens.append(Token("number", sql[i:j], i))
            i = j
            continue
        if ch == "'":
            j = i + 1
            out = []
            while True:
                if j >= n:
                    raise SqlSyntaxError(i, "unterminated string literal")
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":
                        out.append("'")
                        j += 2
                        continue
                    break
                out.append(sql[j])
                j += 1
            tokens.append(Token("string", "".join(out), i))
            i = j + 1
            continue
        if ch in "`\"":
            close = sql.find(ch, i + 1)
            if close < 0:
                raise SqlSyntaxError(i, "unterminated quoted identifier")
            tokens.append(Token("ident", sql[i + 1 : close], i))
            i = close + 1
            continue
        for sym in SYMBOLS:
            if sql.startswith(sym, i):
                tokens.append(Token("symbol", sym, i))
                i += len(sym)
                break
        else:
            raise SqlSyntaxError(i, f"unexpected character {ch!r}")
    tokens.append(Token("end", "", n))
    return tokens
