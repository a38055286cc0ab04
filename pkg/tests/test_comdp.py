import numpy as np
import pytest

from coshield.comdp import ComdpGraph, as_reach_levels, min_init_cons, pos_reach_levels, safe_levels
from coshield.model import INF
from coshield.oracle import OracleTooLarge, min_init_cons_oracle, product_oracle
from coshield.random_models import random_comdp
from coshield.shield import synthesize

from conftest import chain_model


def graph(succ, cons, reloads=(), goals=(), cap=5):
    return ComdpGraph.from_successors(succ, cons, reloads, goals, cap)


def test_mic_one_step_to_reload():
    g = graph([[[0]]], [[2]], reloads=[0])
    assert min_init_cons(g)[0] == 2


def test_mic_without_reload_is_inf():
    g = graph([[[0]], [[1]]], [[1], [1]], goals=[])
    assert (min_init_cons(g) == INF).all()


def test_safe_levels_examples():
    # 0: non-reload -> reload 1 with cons 2; 2: goal
    g = graph([[[1]], [[1]], [[2]]], [[2], [1], [0]], reloads=[1], goals=[2])
    safe, rel = safe_levels(g)
    assert safe.tolist() == [2, 0, 0]
    assert rel.tolist() == [False, True, False]


def test_reload_demoted_when_unsafe():
    # the reload needs 6 units to come back but capacity is 5
    g = graph([[[0]]], [[6]], reloads=[0], cap=5)
    safe, rel = safe_levels(g)
    assert safe[0] == INF and not rel[0]


def test_pos_reach_single_step():
    g = ComdpGraph.from_model(chain_model((1,), capacity=3))
    safe, rel = safe_levels(g)
    assert pos_reach_levels(g, safe, rel).tolist() == [1, 0]


def test_as_reach_chain():
    g = ComdpGraph.from_model(chain_model((2,), capacity=5))
    assert as_reach_levels(g).tolist() == [2, 0]


def test_trap_token_needs_support_wide_demotion(trap):
    # Read as a plain CoMDP the token graph lets a policy see the guess and
    # steer p->a, q->b into the good reload; only demoting whole supports
    # exposes the trap.
    res = synthesize(trap)
    tok = res.token
    root = tok.token_index[(1, 0)]
    assert as_reach_levels(tok.graph)[root] == 2
    assert res.pruned.tlevpr[root] == INF


def test_oracle_goal_configs():
    g = graph([[[1]], [[1]]], [[1], [0]], goals=[1], cap=3)
    o = product_oracle(g)
    for lev in range(4):
        assert (1, lev) in o.safe and (1, lev) in o.pos_reach and (1, lev) in o.as_reach


def test_oracle_exhausted_config_unsafe():
    g = graph([[[1]], [[1]]], [[3], [0]], goals=[1], cap=3)
    o = product_oracle(g)
    assert (0, 2) not in o.safe and (0, 3) in o.safe


def test_oracle_budget():
    g = graph([[[0]]], [[1]], reloads=[0], cap=2_000_000)
    with pytest.raises(OracleTooLarge):
        product_oracle(g)


def random_graphs(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield ComdpGraph.from_model(random_comdp(rng))


def check_against_oracle(g: ComdpGraph) -> list[str]:
    bad = []
    o = product_oracle(g)
    mic = min_init_cons(g)
    mic_o = min_init_cons_oracle(g)
    if not np.array_equal(mic, mic_o):
        bad.append("min_init_cons")
    safe, rel = safe_levels(g)
    if not np.array_equal(safe, o.safe_levels):
        bad.append("safe_levels")
    if not np.array_equal(pos_reach_levels(g, safe, rel), o.pos_reach_levels):
        bad.append("pos_reach_levels")
    if not np.array_equal(as_reach_levels(g), o.as_reach_levels):
        bad.append("as_reach_levels")
    return bad


def test_oracle_equivalence_sample():
    for i, g in enumerate(random_graphs(60, seed=11)):
        assert check_against_oracle(g) == [], i


def test_ordering_and_cap():
    for g in random_graphs(200, seed=5):
        safe, rel = safe_levels(g)
        pr = pos_reach_levels(g, safe, rel)
        asr = as_reach_levels(g)
        assert (asr >= pr).all() and (pr >= safe).all()
        for v in (safe, pr, asr):
            finite = v[v < INF]
            assert (finite <= g.capacity).all()
            assert (v[g.goals] == 0).all()
