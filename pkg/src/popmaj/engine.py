"""Run execution: the step loop, absorption and frozen detection, the blank
and contest observers, and the aggregated clique simulator.

Two interchangeable loops execute vertex-level runs. :func:`run_reference`
is plain Python and supports observers, replay and arc recording;
:func:`run` dispatches to a compiled kernel when none of those are needed.
Both consume the scheduler's generator identically.

Absorption means the output can no longer change: the closure of the present
states under delta has a single, non-conventional output (so the ambassador
protocol absorbs at colour consensus even though ambassadors keep moving),
or no arc can change the configuration and the outputs agree. A run with no
changing arc and no consensus is frozen.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .graph import InteractionGraph
from .protocols import (
    Configuration,
    InvalidStateError,
    Protocol,
    ambassador_counts,
)
from .scheduler import ReplayScheduler, ScheduleExhausted, UniformScheduler

ABSORBED = "absorbed"
FROZEN = "frozen"
STEP_CAP = "step-cap-reached"
REPLAY_END = "replay-exhausted"
_OUTCOMES = {_kernels.ABSORBED: ABSORBED, _kernels.FROZEN: FROZEN, _kernels.STEP_CAP: STEP_CAP}

BLANK_UP = ("g->r", "r->g")
BLANK_DOWN = ("g->b", "r->b")

_NO_LIMIT = np.iinfo(np.int64).max


class PlacementError(ValueError):
    pass


class ContestUnderflow(RuntimeError):
    """A blank-decreasing transition arrived with nothing to pair it with."""


def default_max_steps(n: int) -> int:
    return 500 * n**3


@dataclass
class RunResult:
    outcome: str
    value: str | None
    steps_total: int
    steps_effective: int
    final_config: Configuration
    series: dict | None = None
    arcs: list | None = None

    @property
    def uniform_state(self) -> str | None:
        s = np.unique(self.final_config.states)
        return self.final_config.protocol.states[s[0]] if s.size == 1 else None

    def label(self) -> str:
        """Outcome label used for tallies: the absorbing value, else the outcome."""
        return self.value if self.outcome == ABSORBED else self.outcome


# ---------------------------------------------------------------- placement

def _preset_assignment(g: InteractionGraph, name: str) -> list[str]:
    desc = g.descriptor
    fam = desc.get("family")
    n = g.n
    if name == "lollipop-paper":
        if fam != "lollipop":
            raise PlacementError("preset lollipop-paper needs a lollipop graph")
        v = desc["n1"] - 1
        return ["g" if i < v else "r" for i in range(n)]
    if name == "line-leftmost-g":
        if fam != "line":
            raise PlacementError("preset line-leftmost-g needs a line graph")
        return ["g"] + ["r"] * (n - 1)
    if name == "two-cliques-split":
        if fam != "two_cliques_bridged":
            raise PlacementError("preset two-cliques-split needs two_cliques_bridged")
        return ["g" if i < desc["n1"] else "r" for i in range(n)]
    if name == "feeder-red":
        if fam != "clique_with_feeder":
            raise PlacementError("preset feeder-red needs clique_with_feeder")
        return ["g"] * (n - 1) + ["r"]
    raise PlacementError(f"unknown placement preset {name!r}")


PRESETS = ("lollipop-paper", "line-leftmost-g", "two-cliques-split", "feeder-red")


def initial_config(g: InteractionGraph, p: Protocol, placement, rng: np.random.Generator | None = None
                   ) -> Configuration:
    """Input assignment mapped through the protocol's input map.

    ``placement`` is one of

    * a sequence of input symbols, one per vertex, or ``{"explicit": seq}``;
    * ``{"counts": {"r": k, "g": l}}``: vertices ``0..k-1`` red, the rest green;
    * ``{"random": {"r": k, "g": l}}``: a uniform random k-subset is red;
    * ``{"preset": name}``: a named layout from :data:`PRESETS`.
    """
    if isinstance(placement, dict):
        if "explicit" in placement:
            inputs = list(placement["explicit"])
        elif "preset" in placement:
            inputs = _preset_assignment(g, placement["preset"])
        elif "counts" in placement or "random" in placement:
            mode = "counts" if "counts" in placement else "random"
            c = placement[mode]
            r, gr = int(c.get("r", 0)), int(c.get("g", 0))
            if r < 0 or gr < 0 or r + gr != g.n:
                raise PlacementError(f"counts r={r}, g={gr} do not sum to n={g.n}")
            inputs = ["r"] * r + ["g"] * gr
            if mode == "random":
                if rng is None:
                    raise PlacementError("random placement needs a generator")
                red = rng.permutation(g.n)[:r]
                inputs = ["g"] * g.n
                for v in red:
                    inputs[v] = "r"
        else:
            raise PlacementError(f"unrecognised placement {placement!r}")
    else:
        inputs = list(placement)
    if len(inputs) != g.n:
        raise PlacementError(f"placement has {len(inputs)} entries for {g.n} vertices")
    try:
        return Configuration.from_inputs(p, inputs)
    except InvalidStateError as exc:
        raise PlacementError(str(exc)) from None


# ---------------------------------------------------------------- steps

class StepOutcome(NamedTuple):
    config: Configuration
    kind: str


def step(c: Configuration, arc: tuple[int, int], p: Protocol) -> StepOutcome:
    a, b = arc
    states = c.states.copy()
    sa, sb = states[a], states[b]
    states[a], states[b] = p.delta_table[sa, sb]
    return StepOutcome(Configuration(p, states), p.kind_labels[p.kind_table[sa, sb]])


def frozen_detect(c: Configuration, p: Protocol) -> bool:
    """Ambassador protocol: no ambassadors left but both colours present."""
    counts = ambassador_counts(c)
    if counts.red_amb or counts.green_amb:
        return False
    return len({p.output_map[p.states[i]] for i in np.unique(c.states)}) > 1


# ---------------------------------------------------------------- observers

def observe_blank(w: int, kind: str) -> int:
    if kind in BLANK_UP:
        return w + 1
    if kind in BLANK_DOWN:
        return w - 1
    return w


@dataclass
class ContestState:
    value: int
    tau: int = 0
    pending: deque = field(default_factory=deque)


def observe_contest(cs: ContestState, kind: str) -> ContestState:
    """Pair blank-increasing transitions FIFO with later blank-decreasing ones.

    ``(r->g, r->b)`` raises the contest value, ``(g->r, g->b)`` lowers it,
    mixed pairs leave it alone. Other kinds are ignored.
    """
    if kind in BLANK_UP:
        cs.pending.append(kind)
    elif kind in BLANK_DOWN:
        if not cs.pending:
            raise ContestUnderflow(f"{kind} with no pending blank-increasing transition")
        first = cs.pending.popleft()
        if first == "r->g" and kind == "r->b":
            cs.value += 1
        elif first == "g->r" and kind == "g->b":
            cs.value -= 1
        cs.tau += 1
    return cs


class BlankObserver:
    """Number of blank vertices, updated from transition kinds.

    ``arcs`` restricts attention to a subset of arcs. ``record`` keeps the
    value after every ``stride``-th observed effective step.
    """

    def __init__(self, initial: int = 0, arcs: Iterable | None = None, record: bool = False,
                 stride: int = 1):
        self.value = initial
        self.arcs = None if arcs is None else set(map(tuple, arcs))
        self.record = record
        self.stride = stride
        self.series = [initial] if record else None
        self._seen = 0

    def __call__(self, kind, arc, config):
        if self.arcs is not None and tuple(arc) not in self.arcs:
            return
        self.value = observe_blank(self.value, kind)
        self._seen += 1
        if self.record and self._seen % self.stride == 0:
            self.series.append(self.value)


class ContestObserver:
    """Contest process over pair time; ``series`` holds C(0), C(1), ..."""

    def __init__(self, initial_red: int, arcs: Iterable | None = None, record: bool = False,
                 stride: int = 1):
        self.state = ContestState(initial_red)
        self.arcs = None if arcs is None else set(map(tuple, arcs))
        self.record = record
        self.stride = stride
        self.series = [initial_red] if record else None

    @property
    def value(self) -> int:
        return self.state.value

    @property
    def tau(self) -> int:
        return self.state.tau

    def __call__(self, kind, arc, config):
        if self.arcs is not None and tuple(arc) not in self.arcs:
            return
        tau = self.state.tau
        observe_contest(self.state, kind)
        if self.record and self.state.tau != tau and self.state.tau % self.stride == 0:
            self.series.append(self.state.value)


# ---------------------------------------------------------------- run loops

class _ActiveArcs:
    """Arcs whose delta application would change the configuration.

    Insertion and removal (swap with last) follow the kernel exactly, so the
    index order, and therefore the skip-ahead draws, agree with it.
    """

    def __init__(self, g: InteractionGraph, p: Protocol, states: np.ndarray):
        self.tails = g.tails.tolist()
        self.heads = g.heads.tolist()
        self.changes = p.change_table.tolist()
        ptr, idx = g.incidence
        self.incident = [idx[ptr[v]:ptr[v + 1]].tolist() for v in range(g.n)]
        self.active: list[int] = []
        self.pos = [-1] * g.num_arcs
        for k in range(g.num_arcs):
            if self.changes[states[self.tails[k]]][states[self.heads[k]]]:
                self._set(k, True)

    def _set(self, k: int, on: bool):
        pos = self.pos
        if on:
            if pos[k] < 0:
                pos[k] = len(self.active)
                self.active.append(k)
        elif pos[k] >= 0:
            last = self.active.pop()
            if last != k:
                self.active[pos[k]] = last
                pos[last] = pos[k]
            pos[k] = -1

    def refresh(self, states, vertices):
        for v in vertices:
            for k in self.incident[v]:
                self._set(k, self.changes[states[self.tails[k]]][states[self.heads[k]]])

    def __len__(self):
        return len(self.active)


def run_reference(g: InteractionGraph, p: Protocol, c0: Configuration, scheduler,
                  max_steps: int | None = None, observers: Sequence[Callable] = (),
                  max_effective: int | None = None, record_arcs: bool = False,
                  skip_null: bool = True) -> RunResult:
    """Pure-Python run loop.

    ``observers`` are called as ``obs(kind, arc, config_states)`` after every
    configuration-changing step. With ``skip_null`` the uniform scheduler
    jumps over null draws in one geometric draw; ``steps_total`` still counts
    them. Replay schedulers always step draw by draw.
    """
    if len(c0) != g.n:
        raise PlacementError(f"configuration has {len(c0)} entries for {g.n} vertices")
    if max_steps is None:
        max_steps = default_max_steps(g.n)
    if max_effective is None:
        max_effective = _NO_LIMIT
    replay = getattr(scheduler, "replay", False)
    if replay:
        scheduler.validate(g)
        arc_index = {a: k for k, a in enumerate(g.arcs)}
    states = c0.states.copy()
    sl = states.tolist()
    delta = p.delta_table.tolist()
    kinds = p.kind_table.tolist()
    labels = p.kind_labels
    stable = p.stable_output_table.tolist()
    consensus = p.consensus_table.tolist()
    counts = np.bincount(states, minlength=len(p.states)).tolist()
    mask = sum(1 << q for q, c in enumerate(counts) if c)
    act = _ActiveArcs(g, p, sl)
    tails, heads = act.tails, act.heads
    n_arcs = g.num_arcs
    recorded = [] if record_arcs else None

    steps = effective = 0
    outcome = value = None
    while True:
        if stable[mask] >= 0:
            outcome, value = ABSORBED, p.outputs[stable[mask]]
            break
        if not act.active:
            if consensus[mask] >= 0:
                outcome, value = ABSORBED, p.outputs[consensus[mask]]
            else:
                outcome = FROZEN
            break
        if steps >= max_steps or effective >= max_effective:
            outcome = STEP_CAP
            break
        if replay:
            try:
                k = arc_index[scheduler.next_interaction(g)]
            except ScheduleExhausted:
                outcome = REPLAY_END
                break
            steps += 1
            if act.pos[k] < 0:
                continue
        elif skip_null:
            draws, j = scheduler.next_effective(len(act), n_arcs)
            if steps + draws > max_steps:
                steps = max_steps
                outcome = STEP_CAP
                break
            steps += draws
            k = act.active[j]
        else:
            k = scheduler.next_index(n_arcs)
            steps += 1
            if act.pos[k] < 0:
                continue
        a, b = tails[k], heads[k]
        sa, sb = sl[a], sl[b]
        na, nb = delta[sa][sb]
        sl[a], sl[b] = na, nb
        for old, new in ((sa, na), (sb, nb)):
            if old != new:
                counts[old] -= 1
                if counts[old] == 0:
                    mask &= ~(1 << old)
                if counts[new] == 0:
                    mask |= 1 << new
                counts[new] += 1
        effective += 1
        act.refresh(sl, (a, b))
        if recorded is not None:
            recorded.append((a, b))
        if observers:
            kind = labels[kinds[sa][sb]]
            for obs in observers:
                obs(kind, (a, b), sl)

    series = {}
    for obs in observers:
        name = {BlankObserver: "W", ContestObserver: "C"}.get(type(obs))
        if name and obs.series is not None:
            series[name] = list(obs.series)
    return RunResult(outcome, value, steps, effective, Configuration(p, sl),
                     series or None, recorded)


def run(g: InteractionGraph, p: Protocol, c0: Configuration, scheduler,
        max_steps: int | None = None, observers: Sequence[Callable] = (),
        max_effective: int | None = None, record_arcs: bool = False,
        skip_null: bool = True) -> RunResult:
    """Execute one run; uses the compiled kernel when possible."""
    if observers or record_arcs or not isinstance(scheduler, UniformScheduler):
        return run_reference(g, p, c0, scheduler, max_steps, observers, max_effective,
                             record_arcs, skip_null)
    if len(c0) != g.n:
        raise PlacementError(f"configuration has {len(c0)} entries for {g.n} vertices")
    if max_steps is None:
        max_steps = default_max_steps(g.n)
    states = c0.states.copy()
    ptr, idx = g.incidence
    code, val, steps, effective = _kernels.run_vertex(
        states, g.tails, g.heads, ptr, idx, p.delta_table, p.change_table,
        p.stable_output_table, p.consensus_table, scheduler.rng,
        int(max_steps), _NO_LIMIT if max_effective is None else int(max_effective),
        bool(skip_null),
    )
    value = p.outputs[val] if val >= 0 else None
    return RunResult(_OUTCOMES[code], value, int(steps), int(effective), Configuration(p, states))


# ---------------------------------------------------------------- clique fast path

class ClassProbabilities(NamedTuple):
    g_r: float
    r_g: float
    r_b: float
    g_b: float
    null: float


def transition_class_probabilities(n: int, red: int, green: int) -> ClassProbabilities:
    """Per-step probability of each transition kind on K_n for given counts."""
    blank = n - red - green
    arcs = n * (n - 1)
    rg = red * green / arcs
    rb = red * blank / arcs
    gb = green * blank / arcs
    return ClassProbabilities(rg, rg, rb, gb, 1.0 - 2 * rg - rb - gb)


def run_clique_aggregated(n: int, r0: int, g0: int, scheduler: UniformScheduler,
                          max_steps: int | None = None, max_effective: int | None = None,
                          skip_null: bool = True, protocol: Protocol | None = None) -> RunResult:
    """3-state protocol on K_n simulated on the count pair (|R|, |G|).

    The returned configuration is canonical: red vertices first, then green,
    then blank, since vertex identities are not tracked.
    """
    from .protocols import three_state_protocol

    if r0 < 0 or g0 < 0 or r0 + g0 > n:
        raise PlacementError(f"counts r={r0}, g={g0} exceed n={n}")
    p = protocol or three_state_protocol()
    if max_steps is None:
        max_steps = default_max_steps(n)
    code, val, steps, effective, red, green = _kernels.run_clique_aggregated(
        n, r0, g0, scheduler.rng, int(max_steps),
        _NO_LIMIT if max_effective is None else int(max_effective), bool(skip_null),
    )
    labels = ["r"] * int(red) + ["g"] * int(green) + ["b"] * (n - int(red) - int(green))
    value = ("g", "r")[val] if val >= 0 else None
    return RunResult(_OUTCOMES[code], value, int(steps), int(effective),
                     Configuration.from_labels(p, labels))


# ---------------------------------------------------------------- batches

class Batch(NamedTuple):
    """Outcomes of consecutive runs on one stream; ``labels`` as in
    :meth:`RunResult.label`."""

    labels: np.ndarray
    steps_total: np.ndarray
    steps_effective: np.ndarray

    def counts(self) -> dict[str, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {str(v): int(c) for v, c in zip(values, counts)}


def _batch(p_outputs, outcome, value, steps, effective) -> Batch:
    names = {_kernels.FROZEN: FROZEN, _kernels.STEP_CAP: STEP_CAP}
    labels = np.array([p_outputs[v] if o == _kernels.ABSORBED else names[o]
                       for o, v in zip(outcome.tolist(), value.tolist())], dtype=object)
    return Batch(labels, steps, effective)


def run_many(g: InteractionGraph, p: Protocol, c0: Configuration, scheduler: UniformScheduler,
             trials: int, max_steps: int | None = None, max_effective: int | None = None,
             skip_null: bool = True) -> Batch:
    """``trials`` runs from ``c0``, one after another on the scheduler's
    stream. Equal to calling :func:`run` that many times with the same
    scheduler."""
    if max_steps is None:
        max_steps = default_max_steps(g.n)
    ptr, idx = g.incidence
    out = _kernels.run_vertex_many(
        c0.states.copy(), int(trials), g.tails, g.heads, ptr, idx, p.delta_table, p.change_table,
        p.stable_output_table, p.consensus_table, scheduler.rng, int(max_steps),
        _NO_LIMIT if max_effective is None else int(max_effective), bool(skip_null),
    )
    return _batch(p.outputs, *out)


def run_clique_aggregated_many(n: int, r0: int, g0: int, scheduler: UniformScheduler, trials: int,
                               max_steps: int | None = None, max_effective: int | None = None,
                               skip_null: bool = True) -> Batch:
    if r0 < 0 or g0 < 0 or r0 + g0 > n:
        raise PlacementError(f"counts r={r0}, g={g0} exceed n={n}")
    if max_steps is None:
        max_steps = default_max_steps(n)
    out = _kernels.run_clique_aggregated_many(
        n, r0, g0, int(trials), scheduler.rng, int(max_steps),
        _NO_LIMIT if max_effective is None else int(max_effective), bool(skip_null),
    )
    return _batch(("g", "r"), *out)
