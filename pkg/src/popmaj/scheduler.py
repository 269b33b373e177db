"""Interaction schedulers.

The probabilistic scheduler draws one arc uniformly from the arc list per
step: the tail is the initiator, the head the responder. Randomness comes
from numpy's PCG64 bit generator. Per-trial streams are derived from a
master seed with ``SeedSequence(master, spawn_key=(trial,))``, which is what
``SeedSequence(master).spawn(...)`` produces, so any trial can be replayed on
its own.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import InteractionGraph

PRNG_ID = "numpy-PCG64/SeedSequence(master, spawn_key=(trial,))"


class ScheduleExhausted(RuntimeError):
    """A replay scheduler ran out of recorded arcs."""


def trial_seed_sequence(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),))


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trial_seed_sequence(master_seed, trial)))


class UniformScheduler:
    """Uniform random arc per step."""

    replay = False

    def __init__(self, seed=None, *, rng: np.random.Generator | None = None):
        if rng is None:
            bits = np.random.PCG64(seed if isinstance(seed, np.random.SeedSequence)
                                   else np.random.SeedSequence(seed))
            rng = np.random.Generator(bits)
        self.rng = rng

    @classmethod
    def for_trial(cls, master_seed: int, trial: int) -> "UniformScheduler":
        return cls(rng=trial_rng(master_seed, trial))

    def next_index(self, num_arcs: int) -> int:
        return int(self.rng.integers(0, num_arcs))

    def next_interaction(self, g: InteractionGraph) -> tuple[int, int]:
        return g.arcs[self.next_index(g.num_arcs)]

    def next_effective(self, num_active: int, num_arcs: int) -> tuple[int, int]:
        """Skip ahead to the next draw that hits one of ``num_active`` arcs.

        Returns ``(draws, j)``: the number of scheduler draws consumed
        (null draws plus the hit) and the index of the hit among the active
        arcs, uniform. Equal in law to repeated :meth:`next_index` calls.
        """
        if num_active == num_arcs:
            draws = 1
        else:
            draws = int(self.rng.geometric(num_active / num_arcs))
        return draws, int(self.rng.integers(0, num_active))


class ReplayScheduler:
    """Replays a recorded arc sequence, then raises :class:`ScheduleExhausted`."""

    replay = True

    def __init__(self, arcs: Sequence[tuple[int, int]]):
        self.arcs = [tuple(map(int, a)) for a in arcs]
        self.position = 0

    def validate(self, g: InteractionGraph):
        bad = [a for a in self.arcs if a not in g.arc_set]
        if bad:
            raise ValueError(f"replay arcs not in graph: {bad[:5]}")

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.arcs)

    def next_interaction(self, g: InteractionGraph | None = None) -> tuple[int, int]:
        if self.exhausted:
            raise ScheduleExhausted(f"replay exhausted after {len(self.arcs)} arcs")
        arc = self.arcs[self.position]
        self.position += 1
        return arc
