"""SQL tokenizer for the PostgreSQL dialect subset the engine understands."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SqlParseError

WORD = "WORD"
QIDENT = "QIDENT"
STRING = "STRING"
NUMBER = "NUMBER"
OP = "OP"
PARAM = "PARAM"
EOF = "EOF"

# Longest-match-first operator table.
_OPERATORS = (
    "::", ":=", "<=", ">=", "<>", "!=", "||", "->>", "->", "#>>", "#>",
    "!~~*", "!~~", "~~*", "~~", "~*", "!~",
    "(", ")", "[", "]", ",", ";", ".", "+", "-", "*", "/", "%",
    "<", ">", "=", "~", "^", ":", "?",
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    start: int
    end: int

    def upper(self) -> str:
        return self.value.upper()


def _is_word_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_$"


def tokenize(text: str) -> list[Token]:
    """Tokenize SQL text, skipping whitespace and comments but keeping offsets."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text.startswith("--", i):
            nl = text.find("\n", i)
            i = n if nl < 0 else nl + 1
            continue
        if text.startswith("/*", i):
            depth, j = 1, i + 2
            while j < n and depth:
                if text.startswith("/*", j):
                    depth, j = depth + 1, j + 2
                elif text.startswith("*/", j):
                    depth, j = depth - 1, j + 2
                else:
                    j += 1
            if depth:
                raise SqlParseError("unterminated block comment", i)
            i = j
            continue
        if ch == "'" or (ch in "eE" and i + 1 < n and text[i + 1] == "'"):
            escaped = ch in "eE"
            j = i + 2 if escaped else i + 1
            while j < n:
                if escaped and text[j] == "\\":
                    j += 2
                    continue
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise SqlParseError("unterminated string literal", i)
            tokens.append(Token(STRING, text[i : j + 1], i, j + 1))
            i = j + 1
            continue
        if ch == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise SqlParseError("unterminated quoted identifier", i)
            tokens.append(Token(QIDENT, text[i : j + 1], i, j + 1))
            i = j + 1
            continue
        if ch == "$":
            # Dollar-quoted string ($$...$$ or $tag$...$tag$) or positional param ($1).
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j < n and text[j] == "$":
                tag = text[i : j + 1]
                close = text.find(tag, j + 1)
                if close < 0:
                    raise SqlParseError("unterminated dollar-quoted string", i)
                end = close + len(tag)
                tokens.append(Token(STRING, text[i:end], i, end))
                i = end
                continue
            if j > i + 1 and text[i + 1 : j].isdigit():
                tokens.append(Token(PARAM, text[i:j], i, j))
                i = j
                continue
        if ch == "%" and i + 1 < n and text[i + 1] in "sd":
            tokens.append(Token(PARAM, text[i : i + 2], i, i + 2))
            i += 2
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    # "1.." would be a number followed by an operator
                    if j + 1 < n and text[j + 1] == ".":
                        break
                    seen_dot = True
                j += 1
            if j < n and text[j] in "eE" and j + 1 < n and (text[j + 1].isdigit() or text[j + 1] in "+-"):
                j += 2
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(Token(NUMBER, text[i:j], i, j))
            i = j
            continue
        if _is_word_start(ch):
            j = i + 1
            while j < n and _is_word_char(text[j]):
                j += 1
            tokens.append(Token(WORD, text[i:j], i, j))
            i = j
            continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token(OP, op, i, i + len(op)))
                i += len(op)
                break
        else:
            raise SqlParseError(f"unexpected character {ch!r}", i)
    tokens.append(Token(EOF, "", n, n))
    return tokens
