"""Interaction graphs.

A graph is a vertex count plus a list of directed arcs. Undirected edges are
stored as two opposite arcs, so the scheduler has a single sample space: the
arc list. Vertices are ``0..n-1``.

Vertex labelling of the generated families is fixed so that experiment files
can refer to named vertices:

* ``lollipop(n1, n2)``: clique on ``0..n1-1``, bridge vertex ``v = n1-1``,
  path on ``n1..n1+n2-1`` whose leftmost vertex is ``u = n1``.
* ``two_cliques_bridged(n1, n2)``: cliques on ``0..n1-1`` and
  ``n1..n1+n2-1``, bridge between ``n1-1`` and ``n1``.
* ``clique_with_feeder(n1)``: clique on ``0..n1-1`` and a feeder vertex
  ``n1`` whose only arc is ``(n1, 0)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BRIDGE_MODES = ("undirected", "directed-v-to-u", "directed-u-to-v")


class GraphError(ValueError):
    """Invalid graph construction or parameters."""


class EdgeListParseError(GraphError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Connectivity(NamedTuple):
    weak: bool
    strong: bool


@dataclass(frozen=True)
class InteractionGraph:
    """Vertex count and ordered arc list ``(tail, head)``.

    ``descriptor`` is metadata (family name and parameters) carried into run
    records; it does not take part in equality.
    """

    n: int
    arcs: tuple[tuple[int, int], ...]
    descriptor: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"graph needs at least 2 vertices, got {self.n}")
        arcs = tuple((int(a), int(b)) for a, b in self.arcs)
        object.__setattr__(self, "arcs", arcs)
        seen = set()
        for a, b in arcs:
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise GraphError(f"arc ({a}, {b}) has a vertex outside 0..{self.n - 1}")
            if a == b:
                raise GraphError(f"self-loop at vertex {a}")
            if (a, b) in seen:
                raise GraphError(f"duplicate arc ({a}, {b})")
            seen.add((a, b))
        if not arcs:
            raise GraphError("graph has no arcs")

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    @cached_property
    def arc_set(self) -> frozenset:
        return frozenset(self.arcs)

    @cached_property
    def symmetric_arcs(self) -> bool:
        s = self.arc_set
        return all((b, a) in s for a, b in self.arcs)

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([a for a, _ in self.arcs], dtype=np.int64)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([b for _, b in self.arcs], dtype=np.int64)

    @cached_property
    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR arrays ``(ptr, idx)``: arcs touching vertex ``v`` (as tail or
        head) are ``idx[ptr[v]:ptr[v+1]]``, in arc order."""
        lists = [[] for _ in range(self.n)]
        for k, (a, b) in enumerate(self.arcs):
            lists[a].append(k)
            lists[b].append(k)
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(x) for x in lists])
        idx = np.array([k for x in lists for k in x], dtype=np.int64)
        return ptr, idx

    def in_degree(self, v: int) -> int:
        return sum(1 for _, b in self.arcs if b == v)

    def out_degree(self, v: int) -> int:
        return sum(1 for a, _ in self.arcs if a == v)


def _check_size(name: str, value: int, minimum: int) -> int:
    if int(value) != value or value < minimum:
        raise GraphError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _clique_arcs(vertices) -> list[tuple[int, int]]:
    return [(a, b) for a in vertices for b in vertices if a != b]


def _path_arcs(vertices) -> list[tuple[int, int]]:
    vs = list(vertices)
    out = []
    for a, b in zip(vs, vs[1:]):
        out += [(a, b), (b, a)]
    return out


def clique(n: int) -> InteractionGraph:
    n = _check_size("n", n, 2)
    return InteractionGraph(n, tuple(_clique_arcs(range(n))), {"family": "clique", "n": n})


def line(m: int) -> InteractionGraph:
    """Path ``0 - 1 - ... - m-1``; vertex 0 is the leftmost."""
    m = _check_size("m", m, 2)
    return InteractionGraph(m, tuple(_path_arcs(range(m))), {"family": "line", "m": m})


def lollipop(n1: int, n2: int, bridge: str = "undirected") -> InteractionGraph:
    n1 = _check_size("n1", n1, 2)
    n2 = _check_size("n2", n2, 1)
    if bridge not in BRIDGE_MODES:
        raise GraphError(f"unknown bridge mode {bridge!r}; expected one of {BRIDGE_MODES}")
    v, u = n1 - 1, n1
    arcs = _clique_arcs(range(n1)) + _path_arcs(range(n1, n1 + n2))
    if bridge in ("undirected", "directed-v-to-u"):
        arcs.append((v, u))
    if bridge in ("undirected", "directed-u-to-v"):
        arcs.append((u, v))
    desc = {"family": "lollipop", "n1": n1, "n2": n2, "bridge": bridge}
    return InteractionGraph(n1 + n2, tuple(arcs), desc)


def two_cliques_bridged(n1: int, n2: int) -> InteractionGraph:
    n1 = _check_size("n1", n1, 2)
    n2 = _check_size("n2", n2, 2)
    arcs = _clique_arcs(range(n1)) + _clique_arcs(range(n1, n1 + n2))
    arcs += [(n1 - 1, n1), (n1, n1 - 1)]
    desc = {"family": "two_cliques_bridged", "n1": n1, "n2": n2}
    return InteractionGraph(n1 + n2, tuple(arcs), desc)


def clique_with_feeder(n1: int) -> InteractionGraph:
    """Clique on ``0..n1-1`` plus vertex ``n1`` with the single arc ``(n1, 0)``."""
    n1 = _check_size("n1", n1, 2)
    arcs = _clique_arcs(range(n1)) + [(n1, 0)]
    return InteractionGraph(n1 + 1, tuple(arcs), {"family": "clique_with_feeder", "n1": n1})


def cycle_with_chords(n: int, chord: int = 2) -> InteractionGraph:
    """Directed cycle ``i -> i+1`` plus chords ``i -> i+chord`` (mod n).

    Strongly connected and, for ``n > 2``, not symmetric.
    """
    n = _check_size("n", n, 3)
    chord = int(chord)
    arcs = [(i, (i + 1) % n) for i in range(n)]
    if chord % n not in (0, 1):
        arcs += [(i, (i + chord) % n) for i in range(n)]
    arcs = list(dict.fromkeys(arcs))
    return InteractionGraph(n, tuple(arcs), {"family": "cycle_with_chords", "n": n, "chord": chord})


FAMILIES = {
    "clique": clique,
    "line": line,
    "lollipop": lollipop,
    "two_cliques_bridged": two_cliques_bridged,
    "clique_with_feeder": clique_with_feeder,
    "cycle_with_chords": cycle_with_chords,
}


def from_descriptor(desc: dict) -> InteractionGraph:
    """Build a graph from ``{"family": name, **params}`` or ``{"file": path}``."""
    desc = dict(desc)
    if "file" in desc:
        with open(desc["file"], encoding="utf-8") as fh:
            g = from_edge_list(fh.read())
        return InteractionGraph(g.n, g.arcs, {"file": str(desc["file"])})
    family = desc.pop("family", None)
    if family not in FAMILIES:
        raise GraphError(f"unknown graph family {family!r}; expected one of {sorted(FAMILIES)}")
    try:
        return FAMILIES[family](**desc)
    except TypeError as exc:
        raise GraphError(f"bad parameters for {family}: {exc}") from None


_HEADER = re.compile(r"^n\s+(\d+)$")
_UNDIRECTED = re.compile(r"^(\d+)\s*--\s*(\d+)$")
_DIRECTED = re.compile(r"^(\d+)\s+(\d+)$")


def from_edge_list(text: str) -> InteractionGraph:
    """Parse the edge-list format.

    The first non-comment line is ``n <count>``; every further line is
    ``a b`` (one arc) or ``a -- b`` (both arcs). ``#`` starts a comment.
    """
    n = None
    arcs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if n is None:
            m = _HEADER.match(body)
            if not m:
                raise EdgeListParseError(lineno, f"expected 'n <count>', got {body!r}")
            n = int(m.group(1))
            if n < 2:
                raise EdgeListParseError(lineno, "vertex count must be at least 2")
            continue
        m = _UNDIRECTED.match(body)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            new = [(a, b), (b, a)]
        else:
            m = _DIRECTED.match(body)
            if not m:
                raise EdgeListParseError(lineno, f"cannot parse {body!r}")
            a, b = int(m.group(1)), int(m.group(2))
            new = [(a, b)]
        for arc in new:
            if not (arc[0] < n and arc[1] < n):
                raise EdgeListParseError(lineno, f"vertex out of range 0..{n - 1} in {body!r}")
            if arc[0] == arc[1]:
                raise EdgeListParseError(lineno, f"self-loop in {body!r}")
            if arc in seen:
                raise EdgeListParseError(lineno, f"duplicate arc {arc}")
            seen.add(arc)
            arcs.append(arc)
    if n is None:
        raise EdgeListParseError(1, "missing 'n <count>' header")
    if not arcs:
        raise EdgeListParseError(len(text.splitlines()) or 1, "no arcs")
    return InteractionGraph(n, tuple(arcs))


def to_edge_list(g: InteractionGraph) -> str:
    lines = [f"n {g.n}"]
    s = g.arc_set
    for a, b in g.arcs:
        if (b, a) in s:
            if a < b:
                lines.append(f"{a} -- {b}")
        else:
            lines.append(f"{a} {b}")
    return "\n".join(lines) + "\n"


def connectivity(g: InteractionGraph) -> Connectivity:
    adj = coo_matrix((np.ones(g.num_arcs), (g.tails, g.heads)), shape=(g.n, g.n)).tocsr()
    weak, _ = connected_components(adj, directed=True, connection="weak")
    strong, _ = connected_components(adj, directed=True, connection="strong")
    return Connectivity(weak == 1, strong == 1)


def connected_undirected_graphs(n: int):
    """Yield every connected labelled simple undirected graph on ``n`` vertices."""
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    for mask in range(1, 1 << len(pairs)):
        edges = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
        if len(edges) < n - 1:
            continue
        arcs = tuple(x for a, b in edges for x in ((a, b), (b, a)))
        g = InteractionGraph(n, arcs, {"family": "enumerated", "n": n, "edge_mask": mask})
        if connectivity(g).weak:
            yield g
