"""Syntactic API-usage extraction over lexed Java tokens.

Receiver types resolve through (a) the import table, (b) local declarations
``Type ident`` and (c) static calls ``Type . method (``. Nothing else is
inferred: chained receivers, fields and return values stay unresolved.
"""
from __future__ import annotations

from typing import Mapping, Sequence

from .lexer import JAVA_KEYWORDS
from .types import ApiSite, DomainSpec, MethodSample

_DECL_FOLLOW = {"=", ";", ",", ")", ":"}
_CONTROL = {"if", "for", "while", "switch", "catch", "synchronized", "return", "new", "throw"}


def _is_ident(tok: str) -> bool:
    return bool(tok) and (tok[0].isalpha() or tok[0] in "_$") and tok not in JAVA_KEYWORDS


def _match_close(tokens: Sequence[str], open_idx: int, open_tok="(", close_tok=")") -> int:
    depth = 0
    for j in range(open_idx, len(tokens)):
        if tokens[j] == open_tok:
            depth += 1
        elif tokens[j] == close_tok:
            depth -= 1
            if depth == 0:
                return j
    return -1


def _skip_type_suffix(tokens, j: int) -> int:
    """Skip ``< ... >`` and ``[ ]`` after a type name; returns the next index."""
    n = len(tokens)
    if j < n and tokens[j] == "<":
        depth = 0
        while j < n:
            t = tokens[j]
            if t == "<":
                depth += 1
            elif t == ">":
                depth -= 1
            elif t == ">>":
                depth -= 2
            elif t == ">>>":
                depth -= 3
            elif not (_is_ident(t) or t in {",", ".", "?", "[", "]", "extends", "super", "&"}):
                return -1
            j += 1
            if depth <= 0:
                break
    while j + 1 < n and tokens[j] == "[" and tokens[j + 1] == "]":
        j += 2
    return j


def local_declarations(tokens: Sequence[str]) -> dict:
    """Map variable name -> declared simple type name for ``Type ident`` patterns."""
    decls = {}
    n = len(tokens)
    for i, t in enumerate(tokens):
        if not _is_ident(t) or not t[0].isupper():
            continue
        if i > 0 and tokens[i - 1] == ".":
            continue
        j = _skip_type_suffix(tokens, i + 1)
        if j < 0 or j + 1 >= n:
            continue
        name = tokens[j]
        if _is_ident(name) and tokens[j + 1] in _DECL_FOLLOW:
            decls.setdefault(name, t)
    return decls


def extract_api_usages(tokens: Sequence[str], imports: Mapping[str, str] | None = None,
                       specs: Sequence[DomainSpec] = ()) -> MethodSample:
    # every resolved receiver is import-backed, so spec-listed and other
    # import-resolved calls are both recorded; domain membership is decided later
    imports = dict(imports or {})
    tokens = list(tokens)
    decls = local_declarations(tokens)
    sites = []
    n = len(tokens)
    for i in range(n - 3):
        recv, dot, meth, paren = tokens[i], tokens[i + 1], tokens[i + 2], tokens[i + 3]
        if dot != "." or paren != "(" or not _is_ident(recv) or not _is_ident(meth):
            continue
        if i > 0 and tokens[i - 1] in (".", "new"):
            continue
        type_name = decls.get(recv)
        if type_name is None and recv[0].isupper():
            type_name = recv          # static call Type.method(
        if type_name is None or type_name not in imports:
            continue
        qualified = imports[type_name]
        package, _, iface = qualified.rpartition(".")
        if iface != type_name or not package:
            continue
        close = _match_close(tokens, i + 3)
        if close < 0:
            continue
        sites.append(ApiSite(i, i + 2, close + 1, package, iface, meth))
    # nested usages inside an earlier span are dropped to keep spans disjoint
    kept, last_end = [], -1
    for s in sorted(sites, key=lambda s: s.start):
        if s.start >= last_end:
            kept.append(s)
            last_end = s.end
    return MethodSample(tokens, kept)


def parse_imports(tokens: Sequence[str]) -> dict:
    """Single-type imports only; wildcard and static imports are ignored."""
    out = {}
    n = len(tokens)
    i = 0
    while i < n:
        if tokens[i] == "import" and (i == 0 or tokens[i - 1] in (";", "}")):
            j = i + 1
            if j < n and tokens[j] == "static":
                while j < n and tokens[j] != ";":
                    j += 1
                i = j + 1
                continue
            parts = []
            while j < n and tokens[j] != ";":
                parts.append(tokens[j])
                j += 1
            name = "".join(parts)
            if name and not name.endswith("*"):
                out[name.rsplit(".", 1)[-1]] = name
            i = j + 1
            continue
        i += 1
    return out


def split_methods(tokens: Sequence[str]) -> list:
    """Token slices of every method or constructor body declared directly in a type body."""
    methods = []
    stack = []          # 'type' | 'other'
    n = len(tokens)
    member_start = 0
    i = 0
    while i < n:
        t = tokens[i]
        if t == "{":
            kind = "other"
            k = i - 1
            while k >= 0 and tokens[k] not in (";", "{", "}"):
                if tokens[k] in ("class", "interface", "enum", "record") and (k == 0 or tokens[k - 1] != "."):
                    kind = "type"
                    break
                k -= 1
            if kind == "other" and stack and stack[-1] == "type" and _is_method_header(tokens, member_start, i):
                close = _match_close(tokens, i, "{", "}")
                if close < 0:
                    break
                methods.append(list(tokens[member_start:close + 1]))
                i = close + 1
                member_start = i
                continue
            stack.append(kind)
            member_start = i + 1
        elif t == "}":
            if stack:
                stack.pop()
            member_start = i + 1
        elif t == ";":
            member_start = i + 1
        i += 1
    return methods


def _is_method_header(tokens, start: int, brace: int) -> bool:
    j = brace - 1
    if j >= 0 and _is_ident(tokens[j]):
        # throws clause: skip back to the closing paren
        while j >= start and tokens[j] != ")":
            if tokens[j] in ("=", "new", "->"):
                return False
            j -= 1
    if j < start or tokens[j] != ")":
        return False
    depth = 0
    while j >= start:
        if tokens[j] == ")":
            depth += 1
        elif tokens[j] == "(":
            depth -= 1
            if depth == 0:
                break
        j -= 1
    if j <= start:
        return False
    name = tokens[j - 1]
    if not _is_ident(name) or name in _CONTROL:
        return False
    return not any(tok in ("=", "->") for tok in tokens[start:j])


def extract_file(source: str, specs: Sequence[DomainSpec] = ()) -> list:
    from .lexer import lex_java
    toks = lex_java(source)
    imports = parse_imports(toks)
    return [extract_api_usages(m, imports, specs) for m in split_methods(toks)]
