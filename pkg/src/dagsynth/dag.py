"""Directed acyclic graphs over table columns.

Holds the graph model, validation, the per-node ancestor/source/in-edge
sets, construction ordering, transitive reduction and the graph variants used
for sensitivity experiments. Loaders accept JSON ``{"nodes": [...],
"edges": [[from, to], ...]}`` or a small DOT subset.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class DagError(ValueError):
    """Invalid graph (cycle, unknown node, bad file)."""


@dataclass(frozen=True)
class Violation:
    kind: str  # cycle | self_loop | unknown_endpoint | missing_node | extra_node
    detail: str
    names: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(dict.fromkeys(self.nodes)))
        object.__setattr__(
            self, "edges", tuple(dict.fromkeys((str(u), str(v)) for u, v in self.edges))
        )

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], nodes: Iterable[str] = ()) -> "Dag":
        edges = list(edges)
        names = list(nodes)
        for u, v in edges:
            names += [u, v]
        return cls(tuple(names), tuple(edges))

    def parents(self, node: str) -> list[str]:
        return [u for u, v in self.edges if v == node]

    def children(self, node: str) -> list[str]:
        return [v for u, v in self.edges if u == node]

    def in_degree(self, node: str) -> int:
        return sum(1 for _, v in self.edges if v == node)

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True)
class DerivedSets:
    ancestors: frozenset[str] = field(default_factory=frozenset)
    direct_ancestors: frozenset[str] = field(default_factory=frozenset)
    sources: frozenset[str] = field(default_factory=frozenset)
    in_edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)


# ------------------------------------------------------------------ checks


def _find_cycle(dag: Dag) -> list[str] | None:
    children = {n: [] for n in dag.nodes}
    for u, v in dag.edges:
        if u in children and v in children and u != v:
            children[u].append(v)
    state = dict.fromkeys(dag.nodes, 0)  # 0 new, 1 on stack, 2 done
    for root in dag.nodes:
        if state[root]:
            continue
        path = [root]
        iters = [iter(children[root])]
        state[root] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                state[path.pop()] = 2
                iters.pop()
            elif state[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif state[nxt] == 0:
                state[nxt] = 1
                path.append(nxt)
                iters.append(iter(children[nxt]))
    return None


def validate(dag: Dag, columns: Sequence[str] | None = None) -> list[Violation]:
    """List every problem with ``dag``; an empty list means it is usable.

    Disconnected components and isolated nodes are allowed.
    """
    out: list[Violation] = []
    known = set(dag.nodes)
    for u, v in dag.edges:
        if u == v:
            out.append(Violation("self_loop", f"edge {u} -> {v}", (u,)))
        for end in (u, v):
            if end not in known:
                out.append(Violation("unknown_endpoint", f"edge {u} -> {v} uses unknown node {end!r}", (end,)))
    cycle = _find_cycle(dag)
    if cycle:
        out.append(Violation("cycle", " -> ".join(cycle), tuple(cycle)))
    if columns is not None:
        cols = set(columns)
        for c in columns:
            if c not in known:
                out.append(Violation("missing_node", f"column {c!r} has no node in the graph", (c,)))
        for n in dag.nodes:
            if n not in cols:
                out.append(Violation("extra_node", f"node {n!r} is not a column of the table", (n,)))
    return out


def ensure_valid(dag: Dag, columns: Sequence[str] | None = None) -> Dag:
    problems = validate(dag, columns)
    if problems:
        raise DagError("; ".join(str(p) for p in problems))
    return dag


# ------------------------------------------------------------ derived sets


def ancestors(dag: Dag, node: str) -> set[str]:
    seen: set[str] = set()
    stack = dag.parents(node)
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(dag.parents(n))
    return seen


def descendants(dag: Dag, node: str) -> set[str]:
    seen: set[str] = set()
    stack = dag.children(node)
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(dag.children(n))
    return seen


def derive_sets(dag: Dag) -> dict[str, DerivedSets]:
    roots = {n for n in dag.nodes if dag.in_degree(n) == 0}
    out = {}
    for n in dag.nodes:
        anc = ancestors(dag, n)
        out[n] = DerivedSets(
            ancestors=frozenset(anc),
            direct_ancestors=frozenset(dag.parents(n)),
            sources=frozenset(anc & roots),
            in_edges=frozenset((u, v) for u, v in dag.edges if v == n),
        )
    return out


def topo_order(dag: Dag, column_order: Sequence[str] | None = None) -> list[str]:
    """Order nodes so each one follows all of its direct ancestors.

    Nodes are released in waves: first every zero-in-degree node, then every
    node whose in-edges all come from released nodes. Within a wave, nodes
    keep ``column_order`` (default: ``dag.nodes``).
    """
    rank = {n: i for i, n in enumerate(column_order or dag.nodes)}
    for n in dag.nodes:
        rank.setdefault(n, len(rank))
    in_edges = {n: [u for u, v in dag.edges if v == n] for n in dag.nodes}
    untreated = set(dag.nodes)
    treated: list[str] = []
    done: set[str] = set()
    to_treat = sorted((n for n in dag.nodes if not in_edges[n]), key=rank.__getitem__)
    while untreated:
        if not to_treat:
            raise DagError(f"cycle among {sorted(untreated)}")
        for n in to_treat:
            untreated.discard(n)
            treated.append(n)
            done.add(n)
        to_treat = []
        for u, v in dag.edges:
            if u in done and v not in done and v not in to_treat:
                if all(p in done for p in in_edges[v]):
                    to_treat.append(v)
        to_treat.sort(key=rank.__getitem__)
    return treated


def transitive_reduction(dag: Dag) -> Dag:
    """Drop every edge u -> v for which another u ~> v path exists."""
    ensure_valid(dag)
    keep = []
    for u, v in dag.edges:
        redundant = any(v in descendants(dag, w) for w in dag.children(u) if w != v)
        if not redundant:
            keep.append((u, v))
    return Dag(dag.nodes, tuple(keep))


VARIANTS = ("full", "trans_red", "linear", "prediction", "no_links")


def make_variant(
    dag: Dag,
    kind: str,
    column_order: Sequence[str] | None = None,
    sink: str | None = None,
) -> Dag:
    cols = list(column_order or dag.nodes)
    if kind == "full":
        return Dag(tuple(cols), dag.edges)
    if kind == "trans_red":
        return transitive_reduction(Dag(tuple(cols), dag.edges))
    if kind == "linear":
        return Dag(tuple(cols), tuple(zip(cols[:-1], cols[1:])))
    if kind == "prediction":
        if sink not in cols:
            raise DagError(f"prediction variant: unknown sink {sink!r}")
        return Dag(tuple(cols), tuple((c, sink) for c in cols if c != sink))
    if kind == "no_links":
        return Dag(tuple(cols), ())
    raise DagError(f"unknown variant {kind!r}; expected one of {VARIANTS}")


# --------------------------------------------------------------------- I/O

_DOT_ID = r'(?:"(?:[^"\\]|\\.)*"|[A-Za-z0-9_.]+)'


def _unquote(tok: str) -> str:
    tok = tok.strip()
    if tok.startswith('"'):
        return tok[1:-1].replace('\\"', '"')
    return tok


def parse_dot(text: str) -> Dag:
    """Parse ``digraph { a -> b; c; }`` style text (attributes are ignored)."""
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    body_started = False
    closed = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = re.sub(r"(//|#).*$", "", raw).strip()
        if not line:
            continue
        if not body_started:
            m = re.match(rf"^(strict\s+)?digraph(\s+{_DOT_ID})?\s*\{{(.*)$", line)
            if not m:
                raise DagError(f"line {lineno}: expected 'digraph {{', got {raw.strip()!r}")
            body_started = True
            line = m.group(3).strip()
        if closed and line:
            raise DagError(f"line {lineno}: content after closing brace")
        if line.endswith("}"):
            closed = True
            line = line[:-1]
        for stmt in filter(None, (s.strip() for s in line.split(";"))):
            stmt = re.sub(r"\[.*?\]", "", stmt).strip()
            if not stmt or re.match(r"^(graph|node|edge)\b", stmt) or re.match(rf"^{_DOT_ID}\s*=", stmt):
                continue
            if "--" in stmt:
                raise DagError(f"line {lineno}: undirected edge in {stmt!r}")
            parts = [p.strip() for p in stmt.split("->")]
            if any(not re.fullmatch(_DOT_ID, p) for p in parts):
                raise DagError(f"line {lineno}: cannot parse statement {stmt!r}")
            names = [_unquote(p) for p in parts]
            nodes.extend(names)
            edges.extend(zip(names[:-1], names[1:]))
    if not body_started or not closed:
        raise DagError("unterminated digraph")
    return Dag(tuple(nodes), tuple(edges))


def parse_json(text: str) -> Dag:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DagError(f"line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "nodes" not in obj:
        raise DagError('expected an object with "nodes" and "edges"')
    edges = obj.get("edges", [])
    for e in edges:
        if not (isinstance(e, list) and len(e) == 2):
            raise DagError(f"edge must be a [from, to] pair, got {e!r}")
    return Dag(tuple(str(n) for n in obj["nodes"]), tuple((str(u), str(v)) for u, v in edges))


def load_dag(path: str | Path, columns: Sequence[str] | None = None) -> Dag:
    text = Path(path).read_text(encoding="utf-8")
    dag = parse_json(text) if text.lstrip().startswith("{") else parse_dot(text)
    return ensure_valid(dag, columns)


def save_dag(dag: Dag, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dag.to_json(), indent=2) + "\n", encoding="utf-8")
