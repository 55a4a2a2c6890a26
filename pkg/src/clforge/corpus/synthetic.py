"""Template-grammar generator of Java-like methods with API usages.

Methods are rendered as source text and sent through the regular lexer and
extractor, so generated samples exercise the same path as real files.

Each API gets a preferred "cue" identifier (the assignment target written
just before the receiver) drawn from a pool shared by every domain, so a cue
means different calls in different domains. That sharing is what lets
sequential fine-tuning interfere with earlier domains.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..numcore import Rng
from .extract import extract_api_usages
from .lexer import lex_java
from .types import DomainSpec, MethodSample

# interface -> methods; the first entry is the static factory
CATALOG = {
    # in-distribution
    "ArrayList": ["of", "add", "get", "remove", "size", "contains"],
    "HashMap": ["of", "put", "get", "containsKey", "remove"],
    "LinkedList": ["of", "addFirst", "poll", "peek", "push"],
    "StringBuilder": ["valueOf", "append", "insert", "reverse", "toString"],
    "File": ["createTempFile", "exists", "delete", "getName", "mkdirs"],
    "BufferedReader": ["open", "readLine", "close", "ready", "skip"],
    "PrintWriter": ["open", "println", "flush", "close", "print"],
    "Random": ["current", "nextInt", "nextDouble", "nextBoolean", "setSeed"],
    "Scanner": ["open", "nextLine", "hasNext", "nextInt", "skip"],
    "Duration": ["ofMillis", "toMillis", "plus", "getSeconds", "minus"],
    "Matcher": ["compile", "find", "group", "matches", "reset"],
    "Optional": ["ofNullable", "isPresent", "orElse", "map", "filter"],
    # General
    "BlockingQueue": ["create", "offer", "take", "drainTo", "remainingCapacity"],
    "ThreadPoolExecutor": ["create", "execute", "shutdown", "getPoolSize", "awaitTermination"],
    "BigInteger": ["valueOf", "add", "multiply", "mod", "pow"],
    "Base64": ["getEncoder", "encode", "decode", "encodeToString", "withoutPadding"],
    "TreeSet": ["create", "first", "ceiling", "headSet", "pollFirst"],
    "ForkJoinPool": ["commonPool", "invoke", "submit", "getParallelism", "shutdown"],
    "Proxy": ["newProxyInstance", "type", "address", "isProxyClass", "getInvocationHandler"],
    "ServerSocket": ["create", "accept", "bind", "close", "setSoTimeout"],
    "SocketAddress": ["create", "toString", "equals", "hashCode", "getClass"],
    "URLEncoder": ["getInstance", "encode", "encodeAll", "encodeComponent", "reset"],
    # Security
    "Cipher": ["getInstance", "init", "update", "doFinal", "getBlockSize"],
    "CodeSource": ["create", "getLocation", "getCertificates", "implies", "getCodeSigners"],
    "Identity": ["create", "getName", "getPublicKey", "addCertificate", "getScope"],
    "KeyFactory": ["getInstance", "generatePublic", "generatePrivate", "getKeySpec", "translateKey"],
    "KeyPair": ["generate", "getPublic", "getPrivate", "equals", "toString"],
    "MessageDigest": ["getInstance", "update", "digest", "reset", "getDigestLength"],
    "Policy": ["getPolicy", "implies", "refresh", "getPermissions", "getType"],
    "Provider": ["getProvider", "getService", "getName", "getVersionStr", "getInfo"],
    "Security": ["getInstance", "getProvider", "addProvider", "getProperty", "removeProvider"],
    "Timestamp": ["create", "getTimestamp", "getSignerCertPath", "hashCode", "equals"],
    # Android
    "Display": ["getDefault", "getWidth", "getHeight", "getRotation", "getRefreshRate"],
    "InputEvent": ["obtain", "getDeviceId", "getSource", "getEventTime", "recycle"],
    "Window": ["current", "setFlags", "addFlags", "getDecorView", "setContentView"],
    "Checkbox": ["create", "setChecked", "isChecked", "toggle", "setText"],
    "GridLayout": ["create", "setColumnCount", "setRowCount", "addView", "getOrientation"],
    "AudioFormat": ["builder", "getSampleRate", "getEncoding", "getChannelMask", "getFrameSizeInBytes"],
    "ImageReader": ["newInstance", "acquireLatestImage", "acquireNextImage", "setOnImageAvailableListener", "close"],
    "Camera": ["open", "startPreview", "stopPreview", "setParameters", "release"],
    "Sensor": ["getDefault", "getMaximumRange", "getResolution", "getPower", "getMinDelay"],
    "DatabaseUtils": ["getInstance", "queryNumEntries", "dumpCursor", "sqlEscapeString", "longForQuery"],
    # Web
    "CacheManager": ["create", "getCache", "getCacheNames", "evict", "clear"],
    "ClassPathResource": ["of", "getInputStream", "exists", "getFilename", "getURL"],
    "DataBuffer": ["allocate", "read", "write", "readableByteCount", "asByteBuffer"],
    "HttpMessage": ["create", "getHeaders", "getBody", "setHeader", "getStatus"],
    "HttpRequest": ["newBuilder", "getMethod", "getURI", "getHeaders", "execute"],
    "JdbcTemplate": ["create", "query", "update", "queryForObject", "batchUpdate"],
    "MessageChannel": ["create", "send", "receive", "subscribe", "getName"],
    "MessageHandler": ["create", "handleMessage", "setOrder", "getOrder", "supports"],
    "TaskExecutor": ["create", "execute", "submit", "shutdown", "getActiveCount"],
    # Guava
    "GraphBuilder": ["directed", "allowsSelfLoops", "expectedNodeCount", "nodeOrder", "build"],
    "Network": ["create", "nodes", "edges", "adjacentNodes", "inEdges"],
    "ByteSource": ["wrap", "openStream", "read", "size", "contentEquals"],
    "ByteStreams": ["getInstance", "toByteArray", "copy", "readFully", "skipFully"],
    "CacheBuilder": ["newBuilder", "maximumSize", "expireAfterWrite", "recordStats", "build"],
    "LoadingCache": ["create", "get", "getUnchecked", "refresh", "invalidate"],
    "ListMultimap": ["create", "put", "get", "removeAll", "keySet"],
    "Multimap": ["create", "put", "containsEntry", "values", "asMap"],
    "CharMatcher": ["is", "matches", "removeFrom", "trimFrom", "countIn"],
    "Splitter": ["on", "split", "trimResults", "omitEmptyStrings", "limit"],
}

ID_SPEC = DomainSpec("ID", (
    ("java.util", "ArrayList"), ("java.util", "HashMap"), ("java.util", "LinkedList"),
    ("java.lang", "StringBuilder"), ("java.io", "File"), ("java.io", "BufferedReader"),
    ("java.io", "PrintWriter"), ("java.util", "Random"), ("java.util", "Scanner"),
    ("java.time", "Duration"), ("java.util.regex", "Matcher"), ("java.util", "Optional"),
))

CUES = ["result", "value", "out", "res", "data", "item", "tmp", "count", "status", "entry",
        "node", "info", "flag", "size", "buf", "key"]
RECEIVERS = ["obj", "inst", "helper", "target", "src", "handle", "ref", "svc"]
LOCALS = ["a", "b", "c", "n", "idx", "total", "len", "pos"]
RET_TYPES = ["int", "long", "boolean", "String", "Object", "double"]
ARG_KINDS = ["NUM", "STR", "LOCAL", "TRUE", "NULL"]


@dataclass
class SyntheticConfig:
    domains: list = field(default_factory=list)            # DomainSpec, fine-tuning order
    methods_per_domain: int = 1120
    id_methods: int = 20000
    length_range: tuple = (40, 90)
    seed: int = 0
    id_spec: DomainSpec = ID_SPEC
    cue_fidelity: float = 0.85       # P(assignment target is the API's own cue)
    max_blocks: int = 2
    max_calls_per_block: int = 3

    def __post_init__(self):
        lo, hi = self.length_range
        if not 0 < lo <= hi:
            raise ValueError("length_range must satisfy 0 < lo <= hi")


def _methods_for(iface: str) -> list:
    if iface in CATALOG:
        return CATALOG[iface]
    stem = iface[0].lower() + iface[1:]
    return ["create"] + [f"{stem}Op{k}" for k in range(4)]


class _ApiTable:
    """Per-API cue, return type and argument template; fixed by the seed."""

    def __init__(self, entries, rng: Rng):
        self.entries = list(entries)
        self.props = {}
        for k, (pkg, iface) in enumerate(self.entries):
            r = rng.child(k)
            for j, m in enumerate(_methods_for(iface)):
                n_args = int(r.integers(0, 3))
                self.props[(iface, m)] = {
                    "cue": CUES[int(r.integers(len(CUES)))],
                    "ret": RET_TYPES[int(r.integers(len(RET_TYPES)))],
                    "args": [ARG_KINDS[int(r.integers(len(ARG_KINDS)))] for _ in range(n_args)],
                }


def _literal(kind: str, r: Rng, local_names) -> list:
    if kind == "NUM":
        return [str(int(r.integers(0, 100)))]
    if kind == "STR":
        return ['"s%d"' % int(r.integers(0, 50))]
    if kind == "LOCAL":
        return [local_names[int(r.integers(len(local_names)))]]
    if kind == "TRUE":
        return ["true"]
    return ["null"]


def _args(template, r: Rng, local_names) -> list:
    out = ["("]
    for k, kind in enumerate(template):
        if k:
            out.append(",")
        out.extend(_literal(kind, r, local_names))
    out.append(")")
    return out


def _filler(r: Rng, local_names) -> list:
    a = local_names[int(r.integers(len(local_names)))]
    b = local_names[int(r.integers(len(local_names)))]
    choice = int(r.integers(5))
    if choice == 0:
        return [a, "=", b, "+", str(int(r.integers(1, 10))), ";"]
    if choice == 1:
        return ["if", "(", a, ">", str(int(r.integers(0, 50))), ")", "{", a, "=", a, "-", b, ";", "}"]
    if choice == 2:
        return ["for", "(", "int", "i", "=", "0", ";", "i", "<", b, ";", "i", "++", ")",
                "{", a, "+=", "i", ";", "}"]
    if choice == 3:
        return ["String", "s" + str(int(r.integers(0, 5))), "=", '"t%d"' % int(r.integers(0, 20)), ";"]
    return [a, "*=", str(int(r.integers(2, 5))), ";"]


def _usage_block(table: _ApiTable, entry, r: Rng, cfg: SyntheticConfig, local_names, used_recv) -> list:
    pkg, iface = entry
    methods = _methods_for(iface)
    free = [x for x in RECEIVERS if x not in used_recv] or RECEIVERS
    recv = free[int(r.integers(len(free)))]
    used_recv.add(recv)
    factory = methods[0]
    toks = [iface, recv, "=", iface, ".", factory] + _args(table.props[(iface, factory)]["args"], r, local_names) + [";"]
    n_calls = int(r.integers(1, cfg.max_calls_per_block + 1))
    for _ in range(n_calls):
        m = methods[1 + int(r.integers(len(methods) - 1))]
        props = table.props[(iface, m)]
        call = [recv, ".", m] + _args(props["args"], r, local_names) + [";"]
        if r.random() < 0.8:
            cue = props["cue"] if r.random() < cfg.cue_fidelity else CUES[int(r.integers(len(CUES)))]
            toks += [props["ret"], cue, "="] + call
        else:
            toks += call
    return toks


def _method_tokens(table: _ApiTable, pool, r: Rng, cfg: SyntheticConfig, n_blocks: int) -> list:
    n_params = int(r.integers(1, 4))
    local_names = LOCALS[:]
    params = []
    for k in range(n_params):
        if k:
            params.append(",")
        params += ["int", local_names[k]]
    name = "m" + str(int(r.integers(0, 400)))
    head = ["public", RET_TYPES[int(r.integers(len(RET_TYPES)))], name, "("] + params + [")", "{"]
    decl = ["int", "total", "=", "0", ";"]
    lo, hi = cfg.length_range
    target = int(r.integers(lo, hi + 1))
    blocks = []
    used_recv: set = set()
    for _ in range(n_blocks):
        entry = pool[int(r.integers(len(pool)))]
        blocks.append(_usage_block(table, entry, r, cfg, local_names, used_recv))
    tail = ["return", "total", ";", "}"]
    body = list(blocks)
    fixed = len(head) + len(decl) + sum(len(b) for b in blocks) + len(tail)
    fillers = []
    while fixed + sum(len(f) for f in fillers) < target - 3:
        fillers.append(_filler(r, local_names))
    # interleave fillers between blocks at random positions
    for f in fillers:
        body.insert(int(r.integers(len(body) + 1)), f)
    toks = head + decl
    for part in body:
        toks += part
    return toks + tail


def _imports_for(entries) -> dict:
    return {iface: f"{pkg}.{iface}" for pkg, iface in entries}


def render_source(words) -> str:
    return " ".join(words)


def render_java_file(methods_words, imports: dict, class_name: str = "Gen") -> str:
    lines = [f"import {q};" for q in sorted(set(imports.values()))]
    lines.append(f"public class {class_name} {{")
    for words in methods_words:
        lines.append("    " + render_source(words))
    lines.append("}")
    return "\n".join(lines) + "\n"


def generate_method_sources(config: SyntheticConfig):
    """Yield (words, imports, intended_domain) for every generated method."""
    root = Rng(config.seed)
    specs = [config.id_spec] + list(config.domains)
    keys = set()
    for spec in specs:
        for e in spec.entries:
            if e in keys:
                raise ValueError(f"overlapping API vocabularies: {e[0]}.{e[1]}")
            keys.add(e)
    for spec_no, spec in enumerate(specs):
        table = _ApiTable(spec.entries, root.child(1000 + spec_no))
        imports = _imports_for(spec.entries)
        count = config.id_methods if spec_no == 0 else config.methods_per_domain
        for k in range(count):
            r = root.child(spec_no, k)
            if spec_no == 0:
                n_blocks = 0 if r.random() < 0.15 else int(r.integers(1, config.max_blocks + 1))
            else:
                n_blocks = int(r.integers(1, config.max_blocks + 1))
            words = _method_tokens(table, spec.entries, r, config, n_blocks)
            yield words, imports, (None if spec_no == 0 else spec.name)


def gen_synthetic(config: SyntheticConfig) -> list:
    samples = []
    seen = set()
    for words, imports, domain in generate_method_sources(config):
        tokens = lex_java(render_source(words))
        s = extract_api_usages(tokens, imports, config.domains)
        bump = 0
        while s.content_hash in seen:
            # disambiguate an accidental duplicate by renaming the method
            bump += 1
            tokens = list(tokens)
            tokens[2] = f"{tokens[2]}_{bump}"
            s = extract_api_usages(tokens, imports, config.domains)
        seen.add(s.content_hash)
        samples.append(s)
    order = Rng(config.seed, (99,)).permutation(len(samples))
    return [samples[i] for i in order]
