import numpy as np
import pytest
from scipy import stats

from popmaj import graph as G
from popmaj.scheduler import ReplayScheduler, ScheduleExhausted, UniformScheduler, trial_rng


def _freqs(g, draws=100_000, seed=1):
    s = UniformScheduler(seed)
    idx = np.array([s.next_index(g.num_arcs) for _ in range(draws)])
    return np.bincount(idx, minlength=g.num_arcs)


def test_clique2_half_half():
    f = _freqs(G.clique(2)) / 100_000
    assert np.all(np.abs(f - 0.5) < 0.01)


def test_directed_lollipop_arc_frequency():
    g = G.lollipop(3, 2, "directed-u-to-v")
    f = _freqs(g) / 100_000
    assert abs(f[g.arcs.index((3, 2))] - 1 / 9) < 0.01


@pytest.mark.parametrize("g", [G.clique(5), G.line(6), G.lollipop(4, 3), G.two_cliques_bridged(3, 4),
                               G.clique_with_feeder(4), G.cycle_with_chords(7)])
def test_uniform_goodness_of_fit(g):
    counts = _freqs(g, 50_000, seed=g.num_arcs)
    assert stats.chisquare(counts).pvalue > 0.01


def test_determinism():
    g = G.clique(6)
    a = [UniformScheduler(42).next_interaction(g) for _ in range(1)]
    s1, s2 = UniformScheduler(42), UniformScheduler(42)
    assert [s1.next_interaction(g) for _ in range(500)] == [s2.next_interaction(g) for _ in range(500)]
    assert a[0] == UniformScheduler(42).next_interaction(g)
    # the splitter gives distinct, reproducible per-trial streams
    assert trial_rng(7, 3).integers(0, 2**62) == trial_rng(7, 3).integers(0, 2**62)
    assert trial_rng(7, 3).integers(0, 2**62) != trial_rng(7, 4).integers(0, 2**62)


def test_next_effective_law():
    # skip-ahead: draws ~ geometric(K/E), hit uniform over the K active arcs
    s = UniformScheduler(3)
    out = np.array([s.next_effective(3, 12) for _ in range(60_000)])
    assert abs(out[:, 0].mean() - 4.0) < 0.05
    assert stats.chisquare(np.bincount(out[:, 1], minlength=3)).pvalue > 0.01
    assert s.next_effective(5, 5)[0] == 1


def test_replay():
    r = ReplayScheduler([(0, 1), (1, 0)])
    assert [r.next_interaction(), r.next_interaction()] == [(0, 1), (1, 0)]
    assert r.exhausted
    with pytest.raises(ScheduleExhausted):
        r.next_interaction()
    with pytest.raises(ValueError):
        ReplayScheduler([(0, 2)]).validate(G.line(3))
