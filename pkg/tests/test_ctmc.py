import itertools
import math
from collections import deque
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from fmtree.analysis import bounded_reach
from fmtree.ctmc import (Ctmc, DelaySpec, compose, delay_module, delay_module_ext, erlang_cdf,
                         reachable, restrict_reachable)


def mp_erlang_cdf(t, k, lam):
    mpmath.mp.dps = 50
    return float(mpmath.gammainc(k, 0, lam * t, regularized=True))


def chain(n, trans, labels=None, actions=()):
    return Ctmc.from_transitions(n, 0, trans, labels or {}, actions=actions)


def test_erlang_examples():
    assert erlang_cdf(0, 4, 2.0) == 0.0
    assert erlang_cdf(1, 1, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    T = 20 * 365
    v = erlang_cdf(T, 200, 200 / T)
    assert v == pytest.approx(mp_erlang_cdf(T, 200, 200 / T), abs=1e-12)
    assert 0.50 < v < 0.52


@pytest.mark.parametrize("k", [1, 2, 5, 30, 200])
@pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 2.0, 10.0])
def test_erlang_against_arbitrary_precision(k, x):
    T = 365.0
    assert erlang_cdf(x * T, k, k / T) == pytest.approx(mp_erlang_cdf(x * T, k, k / T), abs=1e-12)


def test_erlang_concentrates_with_more_stages():
    # variance T^2/k: mass within 10% of T grows with k
    T = 1000.0
    width = [erlang_cdf(1.1 * T, k, k / T) - erlang_cdf(0.9 * T, k, k / T) for k in (3, 30, 300)]
    assert width[0] < width[1] < width[2]


def test_delay_shapes():
    c = delay_module(DelaySpec(10.0, 1))
    assert c.n_states == 3
    assert set(c.rate[c.actions.index("move") == c.act]) == {0.1}
    c = delay_module(DelaySpec(7.0, 3))
    moves = c.rate[c.act == c.actions.index("move")]
    assert np.allclose(moves, 3 / 7) and len(moves) == 4
    for spec in (DelaySpec(1, 1), DelaySpec(7, 3), DelaySpec(5, 9)):
        assert delay_module(spec).labels["elapsed"].sum() == 1


def test_delay_ext_resets():
    c = delay_module_ext(DelaySpec(10, 2), ["perform_clean", "perform_replace"])
    resets = {(s, a) for s, a, d, r in c.transitions() if a.startswith("perform")}
    assert resets == {(2, "perform_clean"), (2, "perform_replace"),
                      (3, "perform_clean"), (3, "perform_replace")}
    assert all(d == 1 for s, a, d, r in c.transitions() if a.startswith("perform"))
    c = delay_module_ext(DelaySpec(10, 1), ["r"])
    assert {s for s, a, d, r in c.transitions() if a == "r"} == {2}


@pytest.mark.parametrize("T, N", [(7, 3), (182, 3), (7300, 3), (365, 30), (3, 1)])
def test_delay_first_passage(T, N):
    c = replace(delay_module(DelaySpec(T, N)), initial=1)
    for t in (0.3 * T, T, 2 * T):
        assert bounded_reach(c, "elapsed", t) == pytest.approx(erlang_cdf(t, N, N / T), abs=1e-8)


def test_compose_interleaving():
    a = chain(2, [(0, "x", 1, 1.0), (1, "x", 0, 2.0)])
    b = chain(2, [(0, "y", 1, 3.0), (1, "y", 0, 4.0)])
    p = compose(a, b)
    assert p.n_states == 4
    for s, act, d, r in p.transitions():
        (s1, s2), (d1, d2) = p.name(s), p.name(d)
        assert (s1 == d1) != (s2 == d2)


def test_compose_rate_product():
    a = chain(2, [(0, "a", 1, 3.0)])
    b = chain(2, [(0, "a", 1, 1.0)])
    p = compose(a, b, {"a"})
    assert list(p.transitions()) == [(0, "a", 1, 3.0)]


def test_compose_identity():
    a = chain(3, [(0, "x", 1, 1.0), (1, "y", 2, 2.0), (2, "x", 0, 0.5)], {"l": [2]})
    unit = chain(1, [])
    p = compose(a, unit)
    assert p.n_states == a.n_states
    assert sorted((p.name(s)[0], x, p.name(d)[0], r) for s, x, d, r in p.transitions()) == \
        sorted(a.transitions())
    assert list(np.flatnonzero(p.labels["l"])) == [2]


def test_compose_rejects_unshared_sync():
    with pytest.raises(ValueError):
        compose(chain(1, [], actions=["a"]), chain(1, []), {"a"})


def test_restrict_reachable():
    c = chain(3, [(0, "x", 1, 1.0), (2, "x", 0, 1.0)], {"orphan": [2]})
    r = restrict_reachable(c)
    assert r.n_states == 2 and not r.labels["orphan"].any()
    full = chain(2, [(0, "x", 1, 1.0), (1, "x", 0, 1.0)])
    assert restrict_reachable(full) is full


def bfs_count(c1, c2, sync):
    """Reference reachability over the full product, written independently."""
    succ = {}
    for (s1, s2) in itertools.product(range(c1.n_states), range(c2.n_states)):
        out = []
        for a, d, _ in c1.outgoing()[s1]:
            if a in sync:
                out += [(d, d2) for a2, d2, _ in c2.outgoing()[s2] if a2 == a]
            else:
                out.append((d, s2))
        out += [(s1, d2) for a2, d2, _ in c2.outgoing()[s2] if a2 not in sync]
        succ[(s1, s2)] = out
    seen = {(0, 0)}
    q = deque([(0, 0)])
    while q:
        for n in succ[q.popleft()]:
            if n not in seen:
                seen.add(n)
                q.append(n)
    return len(seen)


@pytest.mark.parametrize("seed", range(10))
def test_lockstep_product_matches_bfs(seed):
    rng = np.random.default_rng(seed)
    def rand4():
        trans = [(int(s), str(rng.choice(["a", "b", "t"])), int(rng.integers(4)),
                  float(rng.uniform(0.5, 2))) for s in range(4) for _ in range(2)]
        return chain(4, trans, actions=["a", "b", "t"])
    c1, c2 = rand4(), rand4()
    p = compose(c1, c2, {"a", "b"})
    assert p.n_states == bfs_count(c1, c2, {"a", "b"}) <= 16
    assert reachable(p).all()


def test_dump_golden():
    c = delay_module(DelaySpec(4.0, 2))
    assert c.dump() == (
        "# states 4 initial d0\n"
        "d0 trigger 1000000 d1\n"
        "d1 move 0.5 d2\n"
        "d2 move 0.5 d3\n"
        "d3 move 0.5 d1\n"
        "# labels\n"
        "d3 elapsed\n")


def test_nonabsorbing_exit_rates_positive():
    c = delay_module(DelaySpec(7, 3))
    assert (c.exit_rates() > 0).all() and np.isfinite(c.exit_rates()).all()
