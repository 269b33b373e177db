"""Compiled inner loops.

These mirror the pure-Python loops in :mod:`popmaj.engine` and
:mod:`popmaj.analysis` draw for draw: same random calls in the same order on
the same numpy ``Generator``, so a kernel run and a reference run from equal
seeds end in identical states with identical step counts.
"""

import numpy as np
from numba import njit

ABSORBED = 0
FROZEN = 1
STEP_CAP = 2


@njit(cache=True)
def _set_active(k, on, active, pos, size):
    if on:
        if pos[k] < 0:
            pos[k] = size
            active[size] = k
            size += 1
    elif pos[k] >= 0:
        last = active[size - 1]
        slot = pos[k]
        active[slot] = last
        pos[last] = slot
        pos[k] = -1
        size -= 1
    return size


@njit(cache=True)
def run_vertex(states, tails, heads, inc_ptr, inc_idx, delta, changes,
               stable, consensus, rng, max_steps, max_effective, jump):
    """Vertex-level run of a table protocol under the uniform arc scheduler.

    ``states`` is updated in place. Returns
    ``(outcome, value, steps_total, steps_effective)``.
    """
    n_arcs = tails.shape[0]
    n_states = changes.shape[0]
    counts = np.zeros(n_states, np.int64)
    for v in range(states.shape[0]):
        counts[states[v]] += 1
    mask = 0
    for q in range(n_states):
        if counts[q] > 0:
            mask |= 1 << q
    active = np.empty(n_arcs, np.int64)
    pos = np.full(n_arcs, -1, np.int64)
    size = 0
    for k in range(n_arcs):
        if changes[states[tails[k]], states[heads[k]]]:
            size = _set_active(k, True, active, pos, size)

    steps = 0
    effective = 0
    while True:
        if stable[mask] >= 0:
            return ABSORBED, stable[mask], steps, effective
        if size == 0:
            if consensus[mask] >= 0:
                return ABSORBED, consensus[mask], steps, effective
            return FROZEN, -1, steps, effective
        if steps >= max_steps or effective >= max_effective:
            return STEP_CAP, -1, steps, effective
        if jump:
            if size == n_arcs:
                draws = 1
            else:
                draws = rng.geometric(size / n_arcs)
            j = rng.integers(0, size)
            if steps + draws > max_steps:
                return STEP_CAP, -1, max_steps, effective
            steps += draws
            k = active[j]
        else:
            k = rng.integers(0, n_arcs)
            steps += 1
            if pos[k] < 0:
                continue
        a = tails[k]
        b = heads[k]
        sa = states[a]
        sb = states[b]
        na = delta[sa, sb, 0]
        nb = delta[sa, sb, 1]
        states[a] = na
        states[b] = nb
        for old, new in ((sa, na), (sb, nb)):
            if old != new:
                counts[old] -= 1
                if counts[old] == 0:
                    mask &= ~(1 << old)
                if counts[new] == 0:
                    mask |= 1 << new
                counts[new] += 1
        effective += 1
        for v in (a, b):
            for t in range(inc_ptr[v], inc_ptr[v + 1]):
                kk = inc_idx[t]
                on = changes[states[tails[kk]], states[heads[kk]]]
                size = _set_active(kk, on, active, pos, size)


@njit(cache=True)
def run_clique_aggregated(n, red, green, rng, max_steps, max_effective, jump):
    """3-state protocol on K_n tracked as (|R|, |G|).

    Returns ``(outcome, value, steps_total, steps_effective, red, green)``
    with value 0 for green, 1 for red.
    """
    n_arcs = n * (n - 1)
    steps = 0
    effective = 0
    while True:
        blank = n - red - green
        if red == n:
            return ABSORBED, 1, steps, effective, red, green
        if green == n or (red == 0 and green == 0):
            return ABSORBED, 0, steps, effective, red, green
        if steps >= max_steps or effective >= max_effective:
            return STEP_CAP, -1, steps, effective, red, green
        rg = red * green
        rb = red * blank
        gb = green * blank
        size = 2 * rg + rb + gb
        if jump:
            if size == n_arcs:
                draws = 1
            else:
                draws = rng.geometric(size / n_arcs)
            u = rng.integers(0, size)
            if steps + draws > max_steps:
                return STEP_CAP, -1, max_steps, effective, red, green
            steps += draws
        else:
            u = rng.integers(0, n_arcs)
            steps += 1
            if u >= size:
                continue
        # class order: g->r, r->g, r->b, g->b
        if u < rg:
            red -= 1
        elif u < 2 * rg:
            green -= 1
        elif u < 2 * rg + rb:
            red += 1
        else:
            green += 1
        effective += 1


@njit(cache=True)
def bd_absorption_trials(m, p, q, start, trials, rng, max_steps):
    """Count trials of the absorbing chain that hit ``m`` before ``0``.

    Returns ``(hits_m, hits_0, undecided, total_steps)``.
    """
    hits_m = 0
    hits_0 = 0
    undecided = 0
    total = 0
    for _ in range(trials):
        i = start
        steps = 0
        while 0 < i < m and steps < max_steps:
            u = rng.random()
            if u < p:
                i += 1
            elif u < p + q:
                i -= 1
            steps += 1
        total += steps
        if i == m:
            hits_m += 1
        elif i == 0:
            hits_0 += 1
        else:
            undecided += 1
    return hits_m, hits_0, undecided, total


@njit(cache=True)
def bd_reflecting_times(m, p, q, start, trials, rng, max_steps):
    """Hitting times of ``m`` with a reflecting barrier at ``0``.

    Entries equal to ``max_steps`` did not reach ``m``.
    """
    out = np.empty(trials, np.int64)
    for t in range(trials):
        i = start
        steps = 0
        while i < m and steps < max_steps:
            if i == 0:
                i = 1
            else:
                u = rng.random()
                if u < p:
                    i += 1
                elif u < p + q:
                    i -= 1
            steps += 1
        out[t] = steps
    return out


@njit(cache=True)
def run_vertex_many(states0, trials, tails, heads, inc_ptr, inc_idx, delta, changes,
                    stable, consensus, rng, max_steps, max_effective, jump):
    """``trials`` consecutive runs from ``states0`` on one stream.

    Returns arrays ``(outcome, value, steps_total, steps_effective)``.
    """
    outcome = np.empty(trials, np.int64)
    value = np.empty(trials, np.int64)
    steps = np.empty(trials, np.int64)
    effective = np.empty(trials, np.int64)
    for t in range(trials):
        states = states0.copy()
        o, v, s, e = run_vertex(states, tails, heads, inc_ptr, inc_idx, delta, changes,
                                stable, consensus, rng, max_steps, max_effective, jump)
        outcome[t] = o
        value[t] = v
        steps[t] = s
        effective[t] = e
    return outcome, value, steps, effective


@njit(cache=True)
def run_clique_aggregated_many(n, red, green, trials, rng, max_steps, max_effective, jump):
    outcome = np.empty(trials, np.int64)
    value = np.empty(trials, np.int64)
    steps = np.empty(trials, np.int64)
    effective = np.empty(trials, np.int64)
    for t in range(trials):
        o, v, s, e, _, _ = run_clique_aggregated(n, red, green, rng, max_steps, max_effective, jump)
        outcome[t] = o
        value[t] = v
        steps[t] = s
        effective[t] = e
    return outcome, value, steps, effective
