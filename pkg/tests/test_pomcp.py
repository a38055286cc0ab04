import numpy as np
import pytest

from coshield.benchmarks import TigerParams, build_tiger
from coshield.env import Simulator, compile_model, seed_kernels
from coshield.model import BOT, CoPomdp, mask_of, members, resup
from coshield.pomcp import (
    TIGER_CONFIG,
    EpisodeResult,
    Planner,
    PlannerConfig,
    _filter,
    _initial_particles,
    _init_arrays,
    _new_tree,
    _add_node,
    _search,
    _select,
    rollout,
    run_episode,
)
from coshield.random_models import random_copomdp
from coshield.shield import synthesize

from conftest import chain_model, exact_filter


@pytest.fixture(scope="module")
def tiger_env(tiger, tiger_synth):
    return compile_model(tiger, tiger_synth.shield)


@pytest.fixture(scope="module")
def uuv8_env(uuv8, uuv8_synth):
    return compile_model(uuv8, uuv8_synth.shield)


def fork_model() -> CoPomdp:
    """From the start, "safe" reaches the goal and "bad" strands the agent."""
    return CoPomdp.build(
        states=["start", "goal", "stuck"], actions=["safe", "bad"], observations=["o0", "og", "os"],
        transitions=[[[(1, 1.0)], [(2, 1.0)]], [[(1, 1.0)], [(1, 1.0)]], [[(2, 1.0)], [(2, 1.0)]]],
        obs_fn=[[(0, 1.0)], [(1, 1.0)], [(2, 1.0)]],
        cons=[[1, 1], [0, 0], [1, 1]], reloads=[], goals=[1], capacity=3,
        cost=[[100.0, 1.0], [0.0, 0.0], [1.0, 1.0]],
    )


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(simulations=0)
    with pytest.raises(ValueError):
        PlannerConfig(rollout="greedy")
    with pytest.raises(ValueError):
        PlannerConfig.from_dict({"sims": 3})
    cfg = PlannerConfig(exploration=2.0)
    assert PlannerConfig.from_dict(cfg.to_dict()) == cfg


def test_horizon_zero(tiger_env):
    res = run_episode(tiger_env, PlannerConfig(horizon=0), seed=1)
    assert res.survived and not res.goal_hit and res.total_cost == 0 and res.steps == 0


def test_seed_determinism(tiger_env):
    cfg = PlannerConfig(simulations=50, horizon=60)
    a = run_episode(tiger_env, cfg, seed=42)
    b = run_episode(tiger_env, cfg, seed=42)
    assert a.record() == b.record()
    c = run_episode(tiger_env, cfg, seed=43)
    assert isinstance(c, EpisodeResult)


def test_single_allowed_action_is_played():
    m = fork_model()
    env = compile_model(m, synthesize(m).shield)
    assert env.allowed(env.initial()[0], 3) == [0]
    # "bad" is cheaper, but the shield leaves only "safe"
    res = run_episode(env, PlannerConfig(simulations=30, horizon=10), seed=0, keep_trace=True)
    assert res.actions == [0] and res.goal_hit and res.total_cost == 100.0


def test_unshielded_fork_takes_cheap_action():
    m = fork_model()
    env = compile_model(m)
    res = run_episode(env, PlannerConfig(simulations=100, horizon=3), seed=0)
    assert not res.goal_hit


def _root_only_tree(env, q, visits):
    T = _new_tree(4, env.model.n_actions)
    T.bounds[:] = (np.inf, -np.inf)
    root = _add_node(T, env.initial()[0], env.model.capacity)
    T.q[root] = q
    T.action_visits[root] = visits
    T.visits[root] = sum(visits)
    return T, root


def test_argmin_at_root():
    m = fork_model()
    env = compile_model(m)
    from numba.typed import Dict
    from numba import types

    T, root = _root_only_tree(env, [5.0, 7.0], [3, 3])
    children = Dict.empty(key_type=types.int64, value_type=types.int64)
    a = _search(env.arrays, T, children, root, np.zeros(1, dtype=np.int64), 1, 0, 1.0, False, 0.5, -1, False, -1)
    assert a == 0
    T.q[root] = [7.0, 5.0]
    a = _search(env.arrays, T, children, root, np.zeros(1, dtype=np.int64), 1, 0, 1.0, False, 0.5, -1, False, -1)
    assert a == 1


def test_unvisited_action_selected_first():
    m = fork_model()
    env = compile_model(m)
    T, root = _root_only_tree(env, [1.0, 0.0], [5, 0])
    T.bounds[:] = (0.0, 1.0)
    buf = np.array([0, 1], dtype=np.int64)
    assert _select(env.arrays, T, root, buf, 2, 1.0) == 1
    T.action_visits[root] = [0, 5]
    assert _select(env.arrays, T, root, buf, 2, 1.0) == 0


def test_zero_cost_goal_successors_back_up_zero():
    m = CoPomdp.build(
        states=["s", "g"], actions=["a", "b"], observations=["o", "g"],
        transitions=[[[(1, 1.0)], [(1, 1.0)]], [[(1, 1.0)], [(1, 1.0)]]],
        obs_fn=[[(0, 1.0)], [(1, 1.0)]], cons=[[1, 1], [0, 0]], reloads=[], goals=[1],
        capacity=2, cost=[[0.0, 0.0], [0.0, 0.0]],
    )
    env = compile_model(m, synthesize(m).shield)
    planner = Planner(env, PlannerConfig(simulations=20, horizon=5))
    planner.reset(env.initial()[0], 2, np.zeros(10, dtype=np.int64))
    seed_kernels(3)
    planner.plan(5)
    node = planner.node()
    assert node.visits == 20
    assert (node.q == 0).all()


def test_rollout_at_goal_is_zero(tiger, tiger_env):
    g = tiger.state_names.index("treasure")
    seed_kernels(0)
    assert rollout(tiger_env, g, tiger_env.support_id(mask_of([g])), 5, 50, TIGER_CONFIG) == 0.0


def test_rollout_single_action_corridor():
    m = chain_model((1, 1, 1), capacity=5)
    env = compile_model(m, synthesize(m).shield)
    seed_kernels(0)
    b = env.initial()[0]
    assert rollout(env, 0, b, 5, 100, PlannerConfig()) == 3.0


def _rollout_sample(env, cfg, n, seed):
    seed_kernels(seed)
    b = env.initial()[0]
    return np.array([rollout(env, 0, b, env.model.capacity, 30, cfg) for _ in range(n)])


def test_heavy_with_no_repeat_matches_uniform(tiger_env):
    uni = _rollout_sample(tiger_env, PlannerConfig(rollout="uniform"), 10_000, 1)
    hvy = _rollout_sample(tiger_env, PlannerConfig(rollout="heavy", p_repeat=0.0), 10_000, 2)
    edges = np.unique(np.quantile(np.concatenate([uni, hvy]), np.linspace(0, 1, 11)))
    cu = np.histogram(uni, bins=edges)[0]
    ch = np.histogram(hvy, bins=edges)[0]
    expected = (cu + ch) / 2
    keep = expected > 0
    chi2 = (((cu - expected) ** 2 + (ch - expected) ** 2)[keep] / expected[keep]).sum()
    # chi-square critical value, 9 degrees of freedom, p = 0.001
    assert chi2 < 27.88
    assert abs(uni.mean() - hvy.mean()) < 4 * np.sqrt((uni.var() + hvy.var()) / 10_000)


def test_heavy_repeats_more(tiger_env):
    uni = _rollout_sample(tiger_env, PlannerConfig(rollout="uniform"), 2_000, 1)
    hvy = _rollout_sample(tiger_env, PlannerConfig(rollout="heavy", p_repeat=1.0), 2_000, 2)
    assert not np.array_equal(np.sort(uni), np.sort(hvy))


# -- belief ----------------------------------------------------------------


def _trajectory(model: CoPomdp, rng, steps: int):
    sim = Simulator(model)
    s, o, level = sim.initial(rng)
    acts, obs = [], [o]
    for _ in range(steps):
        a = int(rng.integers(model.n_actions))
        s, o, level, _ = sim.step(s, a, level, rng)
        acts.append(a)
        obs.append(o)
    return acts, obs


@pytest.mark.parametrize("seed", range(5))
def test_particle_filter_matches_exact(seed):
    rng = np.random.default_rng(100 + seed)
    m = random_copomdp(rng, n_states=3, n_actions=2, capacity=8)
    env = compile_model(m)
    acts, obs = _trajectory(m, rng, 4)
    M = env.arrays
    seed_kernels(seed)
    init_states, init_cum = _init_arrays(m)
    b = env.initial()[obs[0]]
    parts = _initial_particles(M, init_states, init_cum, obs[0], b, 10_000, 16)
    for k, (a, o) in enumerate(zip(acts, obs[1:])):
        b = env.next_support(b, a, o)
        parts, deprived = _filter(M, parts, a, o, b, 10_000, 16)
        assert not deprived
        exact = exact_filter(m, acts[: k + 1], obs[: k + 2])
        approx = np.bincount(parts, minlength=m.n_states) / len(parts)
        assert 0.5 * np.abs(exact - approx).sum() <= 0.05
        assert set(np.unique(parts)) <= set(members(env.supports[b]))


def test_deterministic_model_particles_collapse():
    m = chain_model((1, 1), capacity=5)
    env = compile_model(m)
    seed_kernels(0)
    parts = np.zeros(100, dtype=np.int64)
    b = env.initial()[0]
    for a, o in ((0, 1), (0, 2)):
        b = env.next_support(b, a, o)
        parts, _ = _filter(env.arrays, parts, a, o, b, 100, 16)
        assert (parts == o).all()


def test_deprivation_falls_back_to_support(tiger, tiger_env):
    # pretend every particle is behind the left door, then hear "eaten" after opening right:
    # that observation needs the tiger on the right, so no particle survives
    tl = tiger.state_names.index("tiger-L")
    tr = tiger.state_names.index("tiger-R")
    opr = tiger.action_names.index("open-R")
    eaten = tiger.obs_names.index("eaten")
    b = tiger_env.support_id(mask_of([tl, tr]))
    nb = tiger_env.next_support(b, opr, eaten)
    seed_kernels(0)
    parts, deprived = _filter(tiger_env.arrays, np.full(50, tl, dtype=np.int64), opr, eaten, nb, 50, 16)
    assert deprived
    assert set(np.unique(parts)) <= set(members(tiger_env.supports[nb]))


# -- whole episodes --------------------------------------------------------


def _tried_violations(planner: Planner) -> int:
    T, M = planner.tree, planner.env.arrays
    n = int(T.count[0])
    bad = 0
    for i in range(n):
        for a in np.flatnonzero(T.tried[i]):
            if T.level[i] < 0 or T.level[i] < M.tau[T.support[i], a]:
                bad += 1
    return bad


@pytest.mark.parametrize("env_name", ["tiger_env", "uuv8_env"])
def test_tried_actions_conform(request, env_name):
    """No node's tried set ever contains a disallowed action (10^5 simulations)."""
    env = request.getfixturevalue(env_name)
    cfg = PlannerConfig(simulations=25_000, horizon=4, rollout_depth=20)
    planner = Planner(env, cfg)
    m = env.model
    rng = np.random.default_rng(0)
    sim = Simulator(m)
    total = 0
    seed_kernels(1)
    s, o, level = sim.initial(rng)
    init_states, init_cum = _init_arrays(m)
    b = env.initial()[o]
    planner.reset(b, level, _initial_particles(env.arrays, init_states, init_cum, o, b, 1000, 16))
    for step in range(4):
        a = planner.plan(cfg.horizon - step)
        total += cfg.simulations
        assert _tried_violations(planner) == 0
        assert a in planner.allowed()
        s, o, level, _ = sim.step(s, a, level, rng)
        if s in m.goals:
            break
        planner.advance(a, o, level)
        node = planner.node()
        assert node.level == level
        assert set(np.unique(planner.belief.particles)) <= set(members(env.supports[node.support]))
    assert total >= 100_000


@pytest.mark.parametrize("seed", range(3))
def test_resource_ledger(tiger, tiger_env, seed):
    res = run_episode(tiger_env, PlannerConfig(simulations=30, horizon=40), seed=seed, keep_trace=True)
    lev = tiger.init_level
    for i, a in enumerate(res.actions):
        lev = resup(lev, res.states[i], a, tiger)
        assert lev == res.levels[i + 1]
    assert res.survived and BOT not in res.levels


def test_unshielded_episode_breakdown():
    m = fork_model()
    env = compile_model(m)
    res = run_episode(env, PlannerConfig(simulations=50, horizon=10), seed=0, keep_trace=True)
    assert not res.survived and not res.goal_hit
    assert res.levels[-1] == BOT


def test_cost_scaling_keeps_actions():
    base = TigerParams()
    scaled = TigerParams(listen_cost=2 * base.listen_cost, tiger_cost=2 * base.tiger_cost,
                         treasure_cost=2 * base.treasure_cost)
    cfg = PlannerConfig(simulations=60, horizon=50)
    for seed in range(3):
        outs = []
        for p in (base, scaled):
            m = build_tiger(p)
            outs.append(run_episode(compile_model(m, synthesize(m).shield), cfg, seed=seed))
        assert outs[0].actions == outs[1].actions
        assert outs[1].total_cost == pytest.approx(2 * outs[0].total_cost)
