"""Java-lite lexer. Literals collapse to STR / NUM / CHAR category tokens."""
from __future__ import annotations

import re

STR, NUM, CHAR = "STR", "NUM", "CHAR"

JAVA_KEYWORDS = frozenset("""
abstract assert boolean break byte case catch char class const continue default do double
else enum extends final finally float for goto if implements import instanceof int interface
long native new package private protected public return short static strictfp super switch
synchronized this throw throws transient try void volatile while var record yield true false null
""".split())

# longest first
_OPERATORS = sorted("""
>>>= <<= >>= >>> ... -> :: ++ -- && || == != <= >= += -= *= /= &= |= ^= %= << >>
+ - * / % = < > ! ~ ? : ; , . ( ) [ ] { } & | ^ @
""".split(), key=len, reverse=True)

_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_NUMBER = re.compile(
    r"0[xX][0-9a-fA-F_]+[lL]?"
    r"|0[bB][01_]+[lL]?"
    r"|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[fFdDlL]?"
)


class LexError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def lex_java(source: str) -> list[str]:
    tokens: list[str] = []
    i, n, line = 0, len(source), 1
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated block comment", line)
            line += source.count("\n", i, j)
            i = j + 2
            continue
        if source.startswith('"""', i):
            j = source.find('"""', i + 3)
            if j < 0:
                raise LexError("unterminated text block", line)
            line += source.count("\n", i, j)
            tokens.append(STR)
            i = j + 3
            continue
        if c == '"' or c == "'":
            j = i + 1
            while j < n and source[j] != c:
                if source[j] == "\\":
                    j += 1
                elif source[j] == "\n":
                    break
                j += 1
            if j >= n or source[j] != c:
                raise LexError("unterminated string literal" if c == '"' else "unterminated char literal", line)
            tokens.append(STR if c == '"' else CHAR)
            i = j + 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            m = _NUMBER.match(source, i)
            tokens.append(NUM)
            i = m.end()
            continue
        m = _IDENT.match(source, i)
        if m:
            tokens.append(m.group())
            i = m.end()
            continue
        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(op)
                i += len(op)
                break
        else:
            tokens.append(c)
            i += 1
    return tokens
