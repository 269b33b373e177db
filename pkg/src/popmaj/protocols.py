"""Population protocols as total transition tables.

A protocol is data: states, inputs, the input and output maps, and the joint
transition function given as a table over every ordered pair of states,
indexed ``(initiator, responder)``. Two built-ins are provided, the 3-state
blank protocol and the 4-state ambassador protocol, and further protocols can
be loaded from a JSON table file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

MAX_TABLE_STATES = 16


class ProtocolError(ValueError):
    """Malformed protocol definition."""


class InvalidStateError(ValueError):
    """A state or configuration does not belong to the protocol."""


@dataclass(frozen=True, eq=False)
class Protocol:
    name: str
    states: tuple[str, ...]
    inputs: tuple[str, ...]
    input_map: Mapping[str, str]
    outputs: tuple[str, ...]
    output_map: Mapping[str, str]
    delta: Mapping[tuple[str, str], tuple[str, str]]
    # labels for configuration-changing pairs; pairs not listed are "changed"
    kinds: Mapping[tuple[str, str], str] = field(default_factory=dict)
    # states whose output is only a naming convention (the blank state);
    # they never count towards output stability
    conventional: frozenset = frozenset()

    def __post_init__(self):
        states = tuple(self.states)
        if len(set(states)) != len(states) or not states:
            raise ProtocolError("states must be a non-empty list of distinct names")
        sset = set(states)
        for x in self.inputs:
            if self.input_map.get(x) not in sset:
                raise ProtocolError(f"input {x!r} is not mapped to a state")
        for q in states:
            if self.output_map.get(q) not in set(self.outputs):
                raise ProtocolError(f"state {q!r} is not mapped to an output")
        for q1 in states:
            for q2 in states:
                out = self.delta.get((q1, q2))
                if out is None:
                    raise ProtocolError(f"delta is missing the pair ({q1}, {q2})")
                if len(out) != 2 or out[0] not in sset or out[1] not in sset:
                    raise ProtocolError(f"delta({q1}, {q2}) = {out!r} is not a pair of states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "conventional", frozenset(self.conventional))
        if not self.conventional <= sset:
            raise ProtocolError("conventional outputs must name states")

    def __repr__(self):
        return f"Protocol({self.name!r}, states={self.states})"

    @cached_property
    def index(self) -> dict[str, int]:
        return {q: i for i, q in enumerate(self.states)}

    @cached_property
    def symmetric(self) -> bool:
        return all(
            self.delta[(q2, q1)] == (b, a)
            for (q1, q2), (a, b) in self.delta.items()
        )

    @cached_property
    def delta_table(self) -> np.ndarray:
        """``(Q, Q, 2)`` array of successor state indices."""
        k = len(self.states)
        t = np.empty((k, k, 2), dtype=np.int64)
        for (q1, q2), (a, b) in self.delta.items():
            t[self.index[q1], self.index[q2]] = (self.index[a], self.index[b])
        return t

    @cached_property
    def change_table(self) -> np.ndarray:
        k = len(self.states)
        ident = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"), axis=-1)
        return (self.delta_table != ident).any(axis=-1)

    @cached_property
    def output_index(self) -> np.ndarray:
        """Output-symbol index of every state."""
        return np.array([self.outputs.index(self.output_map[q]) for q in self.states], dtype=np.int64)

    def _check_table_size(self) -> int:
        k = len(self.states)
        if k > MAX_TABLE_STATES:
            raise ProtocolError(f"at most {MAX_TABLE_STATES} states supported, got {k}")
        return k

    @cached_property
    def consensus_table(self) -> np.ndarray:
        """For every subset of states (bit mask), their common output or -1."""
        k = self._check_table_size()
        out = np.full(1 << k, -1, dtype=np.int64)
        for mask in range(1, 1 << k):
            outs = {int(self.output_index[i]) for i in range(k) if mask >> i & 1}
            if len(outs) == 1:
                out[mask] = outs.pop()
        return out

    @cached_property
    def stable_output_table(self) -> np.ndarray:
        """For every subset of states (bit mask), the common output of the
        closure of that subset under delta, or -1.

        The entry is -1 if outputs in the closure differ or the closure holds
        a conventional state. A configuration whose present states have a
        non-negative entry can never change its output again, whatever the
        graph.
        """
        k = self._check_table_size()
        conv = {self.index[q] for q in self.conventional}
        dt = self.delta_table
        out = np.full(1 << k, -1, dtype=np.int64)
        for mask in range(1, 1 << k):
            closed = mask
            while True:
                members = [i for i in range(k) if closed >> i & 1]
                grown = closed
                for i in members:
                    for j in members:
                        grown |= (1 << int(dt[i, j, 0])) | (1 << int(dt[i, j, 1]))
                if grown == closed:
                    break
                closed = grown
            members = [i for i in range(k) if closed >> i & 1]
            outs = {int(self.output_index[i]) for i in members}
            if len(outs) == 1 and not conv.intersection(members):
                out[mask] = outs.pop()
        return out

    def state_index(self, q: str) -> int:
        try:
            return self.index[q]
        except KeyError:
            raise InvalidStateError(f"{q!r} is not a state of {self.name}") from None

    def kind(self, q_init: str, q_resp: str) -> str:
        if not self.change_table[self.state_index(q_init), self.state_index(q_resp)]:
            return "null"
        return self.kinds.get((q_init, q_resp), "changed")

    @cached_property
    def kind_labels(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(["null", "changed", *self.kinds.values()]))

    @cached_property
    def kind_table(self) -> np.ndarray:
        """``(Q, Q)`` array of indices into ``kind_labels``."""
        labels = self.kind_labels
        k = len(self.states)
        t = np.zeros((k, k), dtype=np.int64)
        for i, q1 in enumerate(self.states):
            for j, q2 in enumerate(self.states):
                t[i, j] = labels.index(self.kind(q1, q2))
        return t


def apply(p: Protocol, q_init: str, q_resp: str) -> tuple[str, str]:
    p.state_index(q_init)
    p.state_index(q_resp)
    return p.delta[(q_init, q_resp)]


class Configuration:
    """Vertex-indexed vector of state indices bound to a protocol."""

    __slots__ = ("protocol", "states")

    def __init__(self, protocol: Protocol, states):
        arr = np.asarray(states, dtype=np.int64)
        if arr.ndim != 1:
            raise InvalidStateError("configuration must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= len(protocol.states)):
            raise InvalidStateError("configuration entry outside the protocol's states")
        self.protocol = protocol
        self.states = arr

    @classmethod
    def from_labels(cls, protocol: Protocol, labels: Iterable[str]) -> "Configuration":
        return cls(protocol, [protocol.state_index(q) for q in labels])

    @classmethod
    def from_inputs(cls, protocol: Protocol, inputs: Iterable[str]) -> "Configuration":
        states = []
        for x in inputs:
            if x not in protocol.input_map:
                raise InvalidStateError(f"{x!r} is not an input symbol of {protocol.name}")
            states.append(protocol.index[protocol.input_map[x]])
        return cls(protocol, states)

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and other.protocol.states == self.protocol.states
            and np.array_equal(other.states, self.states)
        )

    def __repr__(self):
        return f"Configuration({' '.join(self.labels())})"

    def copy(self) -> "Configuration":
        return Configuration(self.protocol, self.states.copy())

    def labels(self) -> list[str]:
        return [self.protocol.states[i] for i in self.states]

    def counts(self) -> dict[str, int]:
        c = np.bincount(self.states, minlength=len(self.protocol.states))
        return {q: int(c[i]) for i, q in enumerate(self.protocol.states)}


def consensus_output(p: Protocol, c: Configuration) -> str | None:
    outs = {p.output_map[p.states[i]] for i in np.unique(c.states)}
    return outs.pop() if len(outs) == 1 else None


class AmbassadorCounts(NamedTuple):
    red_amb: int
    green_amb: int


def ambassador_counts(c: Configuration) -> AmbassadorCounts:
    idx = c.protocol.index
    if not {"r1", "g1"} <= idx.keys():
        raise InvalidStateError(f"{c.protocol.name} has no ambassador states")
    return AmbassadorCounts(
        int(np.count_nonzero(c.states == idx["r1"])),
        int(np.count_nonzero(c.states == idx["g1"])),
    )


def three_state_protocol() -> Protocol:
    """Blank-mediated majority: opposite colours blank the responder, a
    coloured initiator recolours a blank responder, a blank initiator does
    nothing. ``b`` outputs ``g`` by convention."""
    states = ("b", "g", "r")
    delta = {}
    for x in states:
        for y in states:
            if x == y or y == "b":
                delta[(x, y)] = (x, x)
            elif {x, y} == {"g", "r"}:
                delta[(x, y)] = (x, "b")
            else:
                delta[(x, y)] = (x, y)
    # "x->y": initiator of type x meets responder of type y
    kinds = {("g", "r"): "g->r", ("r", "g"): "r->g", ("g", "b"): "g->b", ("r", "b"): "r->b"}
    return Protocol(
        name="three-state",
        states=states,
        inputs=("g", "r"),
        input_map={"g": "g", "r": "r"},
        outputs=("g", "r"),
        output_map={"b": "g", "g": "g", "r": "r"},
        delta=delta,
        kinds=kinds,
        conventional=frozenset({"b"}),
    )


# non-identity cells of the ambassador table, row = first agent, column = second
_AMBASSADOR_CELLS = {
    ("g0", "g1"): ("g1", "g0"),
    ("g0", "r1"): ("r1", "r0"),
    ("g1", "g0"): ("g0", "g1"),
    ("g1", "r0"): ("g0", "g1"),
    ("g1", "r1"): ("g0", "r0"),
    ("r0", "g1"): ("g1", "g0"),
    ("r0", "r1"): ("r1", "r0"),
    ("r1", "g0"): ("r0", "r1"),
    ("r1", "g1"): ("r0", "g0"),
    ("r1", "r0"): ("r0", "r1"),
}


def ambassador_protocol() -> Protocol:
    """4-state protocol: colour plus an ambassador bit (``g1`` = green with
    ambassador). Opposite ambassadors annihilate, an ambassador moves onto an
    ambassador-free neighbour and paints it."""
    states = ("g0", "g1", "r0", "r1")
    delta = {(a, b): _AMBASSADOR_CELLS.get((a, b), (a, b)) for a in states for b in states}
    return Protocol(
        name="ambassador",
        states=states,
        inputs=("g", "r"),
        input_map={"g": "g1", "r": "r1"},
        outputs=("g", "r"),
        output_map={"g0": "g", "g1": "g", "r0": "r", "r1": "r"},
        delta=delta,
    )


BUILTINS = {"three-state": three_state_protocol, "ambassador": ambassador_protocol}


def builtin(name: str) -> Protocol:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ProtocolError(f"unknown protocol {name!r}; built-ins are {sorted(BUILTINS)}") from None


def to_json(p: Protocol) -> str:
    doc = {
        "name": p.name,
        "states": list(p.states),
        "inputs": list(p.inputs),
        "input_map": dict(p.input_map),
        "outputs": list(p.outputs),
        "output_map": dict(p.output_map),
        "delta": [[q1, q2, *p.delta[(q1, q2)]] for q1 in p.states for q2 in p.states],
    }
    if p.kinds:
        doc["kinds"] = [[q1, q2, k] for (q1, q2), k in p.kinds.items()]
    if p.conventional:
        doc["conventional_outputs"] = sorted(p.conventional)
    return json.dumps(doc, indent=2)


def from_json(text: str) -> Protocol:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"protocol file is not valid JSON: {exc}") from None
    missing = {"states", "inputs", "input_map", "outputs", "output_map", "delta"} - doc.keys()
    if missing:
        raise ProtocolError(f"protocol file lacks {sorted(missing)}")
    delta = {}
    for entry in doc["delta"]:
        if len(entry) != 4:
            raise ProtocolError(f"delta entry {entry!r} must be [q1, q2, q1', q2']")
        key = (entry[0], entry[1])
        if key in delta:
            raise ProtocolError(f"delta lists the pair {key} twice")
        delta[key] = (entry[2], entry[3])
    if len(delta) != len(doc["states"]) ** 2:
        raise ProtocolError(
            f"delta has {len(delta)} entries, expected {len(doc['states']) ** 2}"
        )
    kinds = {(a, b): k for a, b, k in doc.get("kinds", [])}
    return Protocol(
        name=doc.get("name", "custom"),
        states=tuple(doc["states"]),
        inputs=tuple(doc["inputs"]),
        input_map=dict(doc["input_map"]),
        outputs=tuple(doc["outputs"]),
        output_map=dict(doc["output_map"]),
        delta=delta,
        kinds=kinds,
        conventional=frozenset(doc.get("conventional_outputs", [])),
    )


def load(spec: str) -> Protocol:
    """Built-in name or path to a JSON table file."""
    if spec in BUILTINS:
        return builtin(spec)
    with open(spec, encoding="utf-8") as fh:
        return from_json(fh.read())


def inputs_majority(inputs: Sequence[str]) -> str | None:
    """Strictly most frequent input symbol, or None on a tie."""
    counts: dict[str, int] = {}
    for x in inputs:
        counts[x] = counts.get(x, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    return ranked[0][0]
