"""Plain-text instance files with exact rationals.

    # comment
    model gt            (or: model triggering)
    n 3
    nodes v a b
    edges
    a -> v
    b -> v
    table v
    {} = 0
    {a} = 1/5
    {b} = 1/5
    {a,b} = 3/5

A gt table must list every nonempty subset of the node's in-neighbors;
``{}`` may be omitted and then reads as 0. Nodes without in-neighbors need
no table. A triggering table lists subset probabilities; omitted subsets
have probability 0. Serialization is canonical, so equal instances give
byte-identical text.
"""
from __future__ import annotations

import hashlib
import re
from fractions import Fraction

from .diffusion import DirectedGraph, GTInstance, TriggeringInstance, distribution_problem, validate_gt
from .setfn import SetFunction

_RATIONAL = re.compile(r"-?\d+(/\d+)?")
_BAD_LABEL = set(",{}=#")


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column
        self.message = message


def parse_rational(text: str, line: int = 0, column: int = 0) -> Fraction:
    if not _RATIONAL.fullmatch(text):
        raise ParseError(f"invalid rational {text!r} (expected p or p/q)", line, column)
    num, _, den = text.partition("/")
    if den and int(den) == 0:
        raise ParseError(f"zero denominator in {text!r}", line, column)
    return Fraction(int(num), int(den) if den else 1)


def format_rational(x: Fraction) -> str:
    return str(Fraction(x))


def _check_label(label: str, line: int, column: int) -> None:
    if not label or any(c in _BAD_LABEL or c.isspace() for c in label) or label == "->":
        raise ParseError(f"invalid node label {label!r}", line, column)


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for no, raw in enumerate(text.splitlines(), 1):
            body = raw.split("#", 1)[0].rstrip()
            if body.strip():
                col = len(body) - len(body.lstrip()) + 1
                self.items.append((no, col, body.strip()))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self, what: str):
        item = self.peek()
        if item is None:
            last = self.items[-1][0] if self.items else 1
            raise ParseError(f"unexpected end of file, expected {what}", last + 1, 1)
        self.pos += 1
        return item


def _keyword(lines: _Lines, word: str) -> tuple[int, int, str]:
    no, col, body = lines.next(f"'{word}'")
    head, _, rest = body.partition(" ")
    if head != word:
        raise ParseError(f"expected '{word}', found {head!r}", no, col)
    return no, col + len(head) + 1, rest.strip()


def _parse_subset(text: str, nbr_index: dict[str, int], owner: str, no: int, col: int) -> int:
    if not (text.startswith("{") and text.endswith("}")):
        raise ParseError(f"expected a subset like {{a,b}}, found {text!r}", no, col)
    inner = text[1:-1].strip()
    mask = 0
    if not inner:
        return 0
    for name in inner.split(","):
        name = name.strip()
        if name not in nbr_index:
            raise ParseError(f"{name!r} is not an in-neighbor of {owner}", no, col)
        bit = 1 << nbr_index[name]
        if mask & bit:
            raise ParseError(f"{name!r} repeated in subset", no, col)
        mask |= bit
    return mask


def parse_instance(text: str) -> GTInstance | TriggeringInstance:
    """Parse and validate an instance; errors carry line and column."""
    lines = _Lines(text)
    no, col, model = _keyword(lines, "model")
    if model not in ("gt", "triggering"):
        raise ParseError(f"model must be gt or triggering, found {model!r}", no, col)
    no, col, n_text = _keyword(lines, "n")
    if not n_text.isdigit():
        raise ParseError(f"invalid node count {n_text!r}", no, col)
    n = int(n_text)
    no, col, rest = _keyword(lines, "nodes")
    labels = rest.split()
    if len(labels) != n:
        raise ParseError(f"declared n {n} but listed {len(labels)} nodes", no, col)
    for lab in labels:
        _check_label(lab, no, col)
    if len(set(labels)) != n:
        raise ParseError("duplicate node label", no, col)
    index = {lab: i for i, lab in enumerate(labels)}

    no, col, rest = _keyword(lines, "edges")
    if rest:
        raise ParseError("unexpected text after 'edges'", no, col)
    in_masks = [0] * n
    while (item := lines.peek()) is not None and not item[2].startswith("table"):
        no, col, body = lines.next("edge")
        parts = body.split()
        if len(parts) != 3 or parts[1] != "->":
            raise ParseError(f"expected 'u -> v', found {body!r}", no, col)
        u, v = parts[0], parts[2]
        for name in (u, v):
            if name not in index:
                raise ParseError(f"unknown node {name!r}", no, col)
        if u == v:
            raise ParseError(f"self-loop on {u!r}", no, col)
        if in_masks[index[v]] >> index[u] & 1:
            raise ParseError(f"duplicate edge {u} -> {v}", no, col)
        in_masks[index[v]] |= 1 << index[u]
    graph = DirectedGraph(tuple(labels), tuple(in_masks))

    tables: dict[int, dict[int, Fraction]] = {}
    table_pos: dict[int, tuple[int, int]] = {}
    while lines.peek() is not None:
        no, col, owner = _keyword(lines, "table")
        if owner not in index:
            raise ParseError(f"unknown node {owner!r}", no, col)
        v = index[owner]
        if v in tables:
            raise ParseError(f"second table for {owner!r}", no, col)
        nbrs = graph.in_neighbors(v)
        nbr_index = {labels[u]: j for j, u in enumerate(nbrs)}
        entries: dict[int, Fraction] = {}
        table_pos[v] = (no, col)
        while (item := lines.peek()) is not None and not item[2].startswith("table"):
            eno, ecol, body = lines.next("table entry")
            key, eq, value = body.partition("=")
            if not eq:
                raise ParseError(f"expected '{{...}} = p/q', found {body!r}", eno, ecol)
            mask = _parse_subset(key.strip(), nbr_index, owner, eno, ecol)
            if mask in entries:
                raise ParseError(f"subset listed twice in table {owner}", eno, ecol)
            vcol = ecol + body.index("=") + 1 + (len(value) - len(value.lstrip()))
            entries[mask] = parse_rational(value.strip(), eno, vcol)
        tables[v] = entries

    functions = []
    for v in range(n):
        ground = graph.in_ground(v)
        entries = tables.get(v, {})
        no, col = table_pos.get(v, (0, 0))
        if model == "gt":
            if entries.get(0, 0) != 0:
                raise ParseError(f"threshold of {labels[v]} must be 0 at {{}}", no, col)
            missing = [m for m in range(1, 1 << ground.size) if m not in entries]
            if missing:
                names = ",".join(ground.labels_of(missing[0]))
                raise ParseError(f"table {labels[v]} is incomplete: missing {{{names}}}", no, col)
            functions.append(SetFunction(ground, tuple(entries.get(m, Fraction(0)) for m in range(1 << ground.size))))
        else:
            if v not in tables and ground.size == 0:
                entries = {0: Fraction(1)}
            q = SetFunction(ground, tuple(entries.get(m, Fraction(0)) for m in range(1 << ground.size)))
            problem = distribution_problem(q)
            if problem:
                raise ParseError(f"node {labels[v]}: {problem}", no, col)
            functions.append(q)
    if model == "gt":
        inst = GTInstance(graph, tuple(functions))
        bad = validate_gt(inst)
        if bad:
            w = bad[0]
            no, col = table_pos.get(w.node, (0, 0))
            raise ParseError(f"threshold of {labels[w.node]} is invalid: {w.kind}", no, col)
        return inst
    return TriggeringInstance(graph, tuple(functions))


def serialize_instance(inst: GTInstance | TriggeringInstance) -> str:
    g = inst.graph
    gt = isinstance(inst, GTInstance)
    out = [f"model {'gt' if gt else 'triggering'}", f"n {g.n}", "nodes " + " ".join(g.labels), "edges"]
    for u, v in sorted(g.edges(), key=lambda e: (e[1], e[0])):
        out.append(f"{g.labels[u]} -> {g.labels[v]}")
    tables = inst.thresholds if gt else inst.dists
    for v, f in enumerate(tables):
        if f.n == 0 and gt:
            continue
        out.append(f"table {g.labels[v]}")
        for m in range(1 << f.n):
            if not gt and f.values[m] == 0:
                continue
            out.append("{" + ",".join(f.ground.labels_of(m)) + "} = " + format_rational(f.values[m]))
    return "\n".join(out) + "\n"


def digest(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return "sha256:" + hashlib.sha256(data).hexdigest()


def read_instance(path: str) -> tuple[GTInstance | TriggeringInstance, str]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_instance(text), digest(text)


__all__ = ["ParseError", "parse_instance", "serialize_instance", "digest", "read_instance",
           "parse_rational", "format_rational"]
