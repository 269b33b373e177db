"""Exhaustive configuration-space verification.

Under a fair scheduler every infinite execution on a finite configuration
space eventually stays inside one terminal strongly connected component of
the reachability graph, and every such component is visited with positive
probability by the uniform scheduler. A protocol therefore stably computes
majority from ``c0`` exactly when every terminal component reachable from
``c0`` consists of configurations whose settled output is the input majority.

Configurations are exact vertex-indexed vectors, encoded as base-``|Q|``
integers with vertex ``v`` in digit ``v``. A configuration holding a
conventional state (the blank of the 3-state protocol) has no settled
output, so classification never relies on the output assigned to blank.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from graphlib import TopologicalSorter
from typing import Iterator, NamedTuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, identity
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .graph import InteractionGraph
from .protocols import Configuration, Protocol, inputs_majority

DEFAULT_NODE_LIMIT = 5_000_000

ALL_CORRECT = "all-correct"
ALL_WRONG = "all-wrong"
MIXED = "mixed"


class StateSpaceTooLarge(RuntimeError):
    pass


class PreconditionError(ValueError):
    """Input has no strict majority, or the majority cannot be determined."""


def _powers(q: int, n: int) -> np.ndarray:
    if q**n >= 2**62:
        raise StateSpaceTooLarge(f"|Q|^n = {q}^{n} does not fit the integer encoding")
    return q ** np.arange(n, dtype=np.int64)


def encode(c: Configuration) -> int:
    pw = _powers(len(c.protocol.states), len(c))
    return int(np.dot(c.states, pw))


def decode(p: Protocol, code: int, n: int) -> Configuration:
    q = len(p.states)
    return Configuration(p, [(code // q**v) % q for v in range(n)])


def _digits(codes: np.ndarray, q: int, n: int) -> np.ndarray:
    pw = _powers(q, n)
    return (codes[:, None] // pw[None, :]) % q


def _successors(codes: np.ndarray, g: InteractionGraph, p: Protocol) -> np.ndarray:
    """``(len(codes), num_arcs)`` array of successor codes."""
    q = len(p.states)
    pw = _powers(q, g.n)
    d = _digits(codes, q, g.n)
    dt = p.delta_table
    out = np.empty((codes.size, g.num_arcs), dtype=np.int64)
    for k, (a, b) in enumerate(g.arcs):
        sa, sb = d[:, a], d[:, b]
        out[:, k] = codes + (dt[sa, sb, 0] - sa) * pw[a] + (dt[sa, sb, 1] - sb) * pw[b]
    return out


def _settled_outputs(codes: np.ndarray, p: Protocol, n: int) -> np.ndarray:
    """Common output of every vertex, or -1 (disagreement or a conventional state)."""
    d = _digits(codes, len(p.states), n)
    mask = np.zeros(codes.size, dtype=np.int64)
    for v in range(n):
        mask |= np.int64(1) << d[:, v]
    out = p.consensus_table[mask]
    for s in p.conventional:
        out[(mask >> p.index[s]) & 1 == 1] = -1
    return out


@dataclass
class ConfigGraph:
    """Configurations reachable from ``codes[0]`` in breadth-first order.

    ``succ[i, k]`` is the node reached from node ``i`` through arc ``k``
    (equal to ``i`` for a null interaction). ``parent`` and ``parent_arc``
    form a shortest-path tree rooted at node 0.
    """

    graph: InteractionGraph
    protocol: Protocol
    codes: np.ndarray
    succ: np.ndarray
    parent: np.ndarray
    parent_arc: np.ndarray
    outputs: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.codes.size

    def config(self, i: int) -> Configuration:
        return decode(self.protocol, int(self.codes[i]), self.graph.n)

    def output(self, i: int) -> str | None:
        k = self.outputs[i]
        return self.protocol.outputs[k] if k >= 0 else None

    @cached_property
    def edges(self) -> np.ndarray:
        """Distinct one-step reachability pairs ``(src, dst)``, self-loops excluded."""
        src = np.repeat(np.arange(self.num_nodes), self.graph.num_arcs)
        dst = self.succ.ravel()
        keep = src != dst
        pairs = np.stack([src[keep], dst[keep]], axis=1)
        return np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)

    def adjacency(self) -> csr_matrix:
        e = self.edges
        n = self.num_nodes
        return coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()

    def path_to(self, i: int) -> list[tuple[int, int]]:
        """Shortest arc sequence from the initial configuration to node ``i``."""
        arcs = []
        while self.parent[i] >= 0:
            arcs.append(self.graph.arcs[self.parent_arc[i]])
            i = self.parent[i]
        return arcs[::-1]


def explore(g: InteractionGraph, p: Protocol, c0: Configuration,
            node_limit: int = DEFAULT_NODE_LIMIT) -> ConfigGraph:
    """Breadth-first closure of ``c0`` under every arc."""
    if len(c0) != g.n:
        raise ValueError(f"configuration has {len(c0)} entries for {g.n} vertices")
    start = encode(c0)
    index = {start: 0}
    codes = [start]
    parent = [-1]
    parent_arc = [-1]
    rows = []
    frontier = np.array([start], dtype=np.int64)
    first = 0
    while frontier.size:
        s = _successors(frontier, g, p)
        rows.append(s)
        flat = s.ravel()
        uniq, pos = np.unique(flat, return_index=True)
        order = np.argsort(pos)
        fresh = []
        for code, at in zip(uniq[order].tolist(), pos[order].tolist()):
            if code in index:
                continue
            index[code] = len(codes)
            codes.append(code)
            parent.append(first + at // g.num_arcs)
            parent_arc.append(at % g.num_arcs)
            fresh.append(code)
        if len(codes) > node_limit:
            raise StateSpaceTooLarge(f"more than {node_limit} reachable configurations")
        first += frontier.size
        frontier = np.array(fresh, dtype=np.int64)
    codes_arr = np.array(codes, dtype=np.int64)
    succ_codes = np.concatenate(rows)
    order = np.argsort(codes_arr)
    succ = order[np.searchsorted(codes_arr[order], succ_codes)]
    return ConfigGraph(g, p, codes_arr, succ, np.array(parent), np.array(parent_arc),
                       _settled_outputs(codes_arr, p, g.n))


class TerminalComponent(NamedTuple):
    members: np.ndarray
    outputs: frozenset  # settled outputs of the members; None marks "no settled output"
    tag: str | None


def _tag(outputs: frozenset, expected: str | None) -> str | None:
    if expected is None:
        return None
    if outputs == {expected}:
        return ALL_CORRECT
    if None not in outputs and expected not in outputs and len(outputs) == 1:
        return ALL_WRONG
    return MIXED


def _components(adj: csr_matrix):
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    coo = adj.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    has_exit = np.zeros(ncomp, dtype=bool)
    has_exit[labels[coo.row[cross]]] = True
    return ncomp, labels, has_exit, (labels[coo.row[cross]], labels[coo.col[cross]])


def terminal_components(cg: ConfigGraph, expected: str | None = None) -> list[TerminalComponent]:
    """Strongly connected components with no edge leaving them.

    ``expected`` is the correct output; when given, every component is
    tagged ``all-correct``, ``all-wrong`` or ``mixed``.
    """
    ncomp, labels, has_exit, _ = _components(cg.adjacency())
    out = []
    for comp in np.flatnonzero(~has_exit):
        members = np.flatnonzero(labels == comp)
        outs = frozenset(cg.output(int(i)) for i in members)
        out.append(TerminalComponent(members, outs, _tag(outs, expected)))
    return out


def condensation(cg: ConfigGraph) -> tuple[np.ndarray, dict[int, set[int]]]:
    """Component label per node and the component successor sets."""
    ncomp, labels, _, (src, dst) = _components(cg.adjacency())
    succ: dict[int, set[int]] = {c: set() for c in range(ncomp)}
    for a, b in zip(src.tolist(), dst.tolist()):
        succ[a].add(b)
    return labels, succ


def expected_output(p: Protocol, c0: Configuration) -> str:
    """Output the input majority maps to; ``c0`` must consist of input images."""
    inverse = {}
    for x in p.inputs:
        inverse.setdefault(p.input_map[x], x)
    try:
        inputs = [inverse[p.states[s]] for s in c0.states]
    except KeyError:
        raise PreconditionError("configuration is not an input assignment") from None
    major = inputs_majority(inputs)
    if major is None:
        raise PreconditionError("input has no strict majority")
    return p.output_map[p.input_map[major]]


class Verdict(NamedTuple):
    passed: bool
    expected: str
    witness: list | None
    bad_component: TerminalComponent | None
    num_nodes: int
    num_terminal: int

    def to_dict(self) -> dict:
        d = {
            "verdict": "pass" if self.passed else "fail",
            "expected": self.expected,
            "nodes": self.num_nodes,
            "terminal_components": self.num_terminal,
        }
        if self.witness is not None:
            d["witness"] = [list(a) for a in self.witness]
            d["bad_component_outputs"] = sorted(str(o) for o in self.bad_component.outputs)
        return d


def stably_computes_majority(g: InteractionGraph, p: Protocol, c0: Configuration,
                             node_limit: int = DEFAULT_NODE_LIMIT) -> Verdict:
    """Pass iff every reachable terminal component is all-correct.

    On failure the witness is a shortest arc sequence from ``c0`` into a
    violating terminal component.
    """
    expected = expected_output(p, c0)
    cg = explore(g, p, c0, node_limit)
    terms = terminal_components(cg, expected)
    bad = [t for t in terms if t.tag != ALL_CORRECT]
    if not bad:
        return Verdict(True, expected, None, None, cg.num_nodes, len(terms))
    # nodes are in breadth-first order, so the smallest index is closest
    target = min(bad, key=lambda t: t.members.min())
    witness = cg.path_to(int(target.members.min()))
    return Verdict(False, expected, witness, target, cg.num_nodes, len(terms))


# ---------------------------------------------------------------- every colouring at once

def colorings(g: InteractionGraph, p: Protocol, include_ties: bool = False) -> Iterator[tuple]:
    for inputs in itertools.product(p.inputs, repeat=g.n):
        if include_ties or inputs_majority(inputs) is not None:
            yield inputs


class ColoringVerdict(NamedTuple):
    inputs: tuple
    expected: str
    passed: bool


def verify_all_colorings(g: InteractionGraph, p: Protocol,
                         node_limit: int = DEFAULT_NODE_LIMIT) -> list[ColoringVerdict]:
    """Verdicts for every non-tied input assignment from one pass over the
    whole configuration space.

    The terminal components reachable from every configuration are
    propagated through the condensation in topological order, so each
    colouring is answered by a bitmask test.
    """
    q = len(p.states)
    total = q**g.n
    if total > node_limit:
        raise StateSpaceTooLarge(f"{total} configurations exceed the limit {node_limit}")
    codes = np.arange(total, dtype=np.int64)
    succ = _successors(codes, g, p)
    src = np.repeat(codes, g.num_arcs)
    dst = succ.ravel()
    keep = src != dst
    adj = coo_matrix((np.ones(int(keep.sum())), (src[keep], dst[keep])), shape=(total, total)).tocsr()
    ncomp, labels, has_exit, (csrc, cdst) = _components(adj)

    graph: dict[int, set[int]] = {c: set() for c in range(ncomp)}
    for a, b in zip(csrc.tolist(), cdst.tolist()):
        graph[a].add(b)
    outs = _settled_outputs(codes, p, g.n)
    terminal = np.flatnonzero(~has_exit)
    bit = {int(c): 1 << k for k, c in enumerate(terminal)}
    bad_mask = {}
    for y, y_idx in ((y, p.outputs.index(y)) for y in p.outputs):
        mask = 0
        for c in terminal:
            member_outs = outs[labels == c]
            if not (member_outs == y_idx).all():
                mask |= bit[int(c)]
        bad_mask[y] = mask

    reach = [0] * ncomp
    # successors come before their predecessors in this order
    for c in TopologicalSorter(graph).static_order():
        r = bit.get(c, 0)
        for s in graph[c]:
            r |= reach[s]
        reach[c] = r

    pw = _powers(q, g.n)
    results = []
    for inputs in colorings(g, p):
        c0 = Configuration.from_inputs(p, inputs)
        expected = expected_output(p, c0)
        comp = labels[int(np.dot(c0.states, pw))]
        results.append(ColoringVerdict(inputs, expected, not reach[comp] & bad_mask[expected]))
    return results


# ---------------------------------------------------------------- exact absorption law

class AbsorptionLaw(NamedTuple):
    probabilities: dict  # settled output (or None) of the terminal component -> probability
    expected_steps: float


def absorption_law(g: InteractionGraph, p: Protocol, c0: Configuration,
                   node_limit: int = DEFAULT_NODE_LIMIT) -> AbsorptionLaw:
    """Exact law of the terminal component reached under the uniform
    scheduler, and the expected number of scheduler draws to enter one.

    Terminal components are grouped by their single settled output; a
    component without one is reported under ``None``.
    """
    cg = explore(g, p, c0, node_limit)
    terms = terminal_components(cg)
    n = cg.num_nodes
    group = np.full(n, -1)
    keys = []
    for t in terms:
        key = next(iter(t.outputs)) if len(t.outputs) == 1 else None
        if key not in keys:
            keys.append(key)
        group[t.members] = keys.index(key)
    transient = np.flatnonzero(group < 0)
    if group[0] >= 0:
        return AbsorptionLaw({keys[group[0]]: 1.0}, 0.0)
    e = g.num_arcs
    rows = np.repeat(np.arange(n), e)
    cols = cg.succ.ravel()
    P = coo_matrix((np.full(rows.size, 1.0 / e), (rows, cols)), shape=(n, n)).tocsr()
    pos = np.full(n, -1)
    pos[transient] = np.arange(transient.size)
    PTT = P[transient][:, transient]
    A = (identity(transient.size, format="csc") - PTT).tocsc()
    into = P[transient]
    probs = {}
    for k, key in enumerate(keys):
        b = np.asarray(into[:, np.flatnonzero(group == k)].sum(axis=1)).ravel()
        probs[key] = float(np.atleast_1d(spsolve(A, b))[pos[0]])
    steps = float(np.atleast_1d(spsolve(A, np.ones(transient.size)))[pos[0]])
    return AbsorptionLaw(probs, steps)
