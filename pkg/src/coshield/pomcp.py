"""Shielded POMCP over an undiscounted finite horizon.

Search-tree nodes carry the exact belief support and resource level of their
history. Children are keyed by (action, observation, level). The tree lives in
flat arrays so that whole simulations run inside numba.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .env import (
    CompiledModel,
    _allowed,
    _next_support,
    _uniform_member,
    env_step,
    next_level,
    rollout_kernel,
    sample_obs,
    seed_kernels,
)
from .model import BOT, CoPomdp


ROLLOUT_POLICIES = ("uniform", "heavy")


@dataclass(frozen=True)
class PlannerConfig:
    exploration: float = 1.0
    horizon: int = 500
    simulations: int = 100
    particles: int = 1000
    rollout: str = "uniform"
    p_repeat: float = 0.5
    rollout_depth: int | None = None  # None: remaining horizon
    resample_factor: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.exploration < 0 or self.horizon < 0 or self.simulations < 1 or self.particles < 1:
            raise ValueError("planner parameters must be positive")
        if self.rollout not in ROLLOUT_POLICIES:
            raise ValueError(f"rollout must be one of {ROLLOUT_POLICIES}")
        if not 0 <= self.p_repeat <= 1:
            raise ValueError("p_repeat must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown planner settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


TIGER_CONFIG = PlannerConfig(exploration=1.0, horizon=500, simulations=100)
UUV_CONFIGS = {
    n: PlannerConfig(exploration=c, horizon=100, simulations=1000, rollout="heavy")
    for n, c in ((8, 25.0), (12, 50.0), (16, 200.0), (20, 200.0))
}


@dataclass
class EpisodeResult:
    survived: bool
    goal_hit: bool
    total_cost: float
    steps: int
    decision_times: list[float] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    observations: list[int] = field(default_factory=list)
    levels: list[int] = field(default_factory=list)
    states: list[int] = field(default_factory=list)

    def record(self) -> dict:
        """Timing-free summary, stable across reruns with the same seed."""
        return {
            "survived": self.survived,
            "goal_hit": self.goal_hit,
            "total_cost": self.total_cost,
            "steps": self.steps,
            "actions": self.actions,
        }


# -- tree ------------------------------------------------------------------


class TreeArrays(NamedTuple):
    support: np.ndarray
    level: np.ndarray
    visits: np.ndarray
    action_visits: np.ndarray
    q: np.ndarray
    tried: np.ndarray
    # count[0]: nodes in use; bounds[0], bounds[1]: min / max backed-up return
    count: np.ndarray
    bounds: np.ndarray


@dataclass
class TreeNode:
    """Read-only view of a search-tree node."""

    index: int
    support: int
    level: int
    visits: int
    action_visits: np.ndarray
    q: np.ndarray


def _new_tree(n_nodes: int, n_actions: int) -> TreeArrays:
    return TreeArrays(
        support=np.zeros(n_nodes, dtype=np.int64),
        level=np.zeros(n_nodes, dtype=np.int64),
        visits=np.zeros(n_nodes, dtype=np.int64),
        action_visits=np.zeros((n_nodes, n_actions), dtype=np.int64),
        q=np.zeros((n_nodes, n_actions), dtype=np.float64),
        tried=np.zeros((n_nodes, n_actions), dtype=np.bool_),
        count=np.zeros(1, dtype=np.int64),
        bounds=np.array([np.inf, -np.inf]),
    )


@njit(cache=True)
def _add_node(T, b, level):
    i = T.count[0]
    if i >= T.support.shape[0]:
        raise RuntimeError("search tree is full")
    T.count[0] = i + 1
    T.support[i] = b
    T.level[i] = level
    return i


@njit(cache=True)
def _child_key(M, node, a, o, level):
    return ((node * M.n_actions + a) * M.n_obs + o) * (M.capacity + 2) + level + 1


@njit(cache=True)
def _child(M, T, children, node, a, o, level):
    """Child id and whether it was just created."""
    key = _child_key(M, node, a, o, level)
    if key in children:
        return children[key], False
    b = _next_support(M, T.support[node], a, o)
    if b < 0:
        raise RuntimeError("observation outside the support automaton")
    c = _add_node(T, b, level)
    children[key] = c
    return c, True


@njit(cache=True)
def _select(M, T, node, buf, k, c):
    """UCT over allowed actions with min-max normalised costs; unvisited actions first."""
    for i in range(k):
        if T.action_visits[node, buf[i]] == 0:
            return buf[i]
    lo, hi = T.bounds[0], T.bounds[1]
    span = hi - lo
    log_n = np.log(T.visits[node])
    best, best_score = buf[0], -np.inf
    for i in range(k):
        a = buf[i]
        qn = (T.q[node, a] - lo) / span if span > 0 else 0.0
        score = -qn + c * np.sqrt(log_n / T.action_visits[node, a])
        if score > best_score:
            best, best_score = a, score
    return best


@njit(cache=True)
def _simulate(M, T, children, root, s, depth_left, c, heavy, p_repeat, rollout_depth, shielded, prev):
    buf = np.empty(M.n_actions, dtype=np.int64)
    path_node = np.empty(depth_left + 1, dtype=np.int64)
    path_action = np.empty(depth_left + 1, dtype=np.int64)
    path_cost = np.empty(depth_left + 1, dtype=np.float64)
    n = 0
    node = root
    tail = 0.0
    d = 0
    while d < depth_left and not M.goal[s]:
        b, level = T.support[node], T.level[node]
        k = _allowed(M, b, level, buf, shielded)
        if k == 0:
            raise RuntimeError("simulation reached a node with no allowed action")
        a = _select(M, T, node, buf, k, c)
        if shielded and level < M.tau[b, a]:
            raise RuntimeError("disallowed action selected")
        T.tried[node, a] = True
        nl = next_level(M, s, a, level)
        path_node[n] = node
        path_action[n] = a
        if nl < 0:
            if shielded:
                raise RuntimeError("shielded simulation exhausted the resource")
            path_cost[n] = M.breakdown_cost * (depth_left - d)
            n += 1
            break
        t, o, cost = env_step(M, s, a)
        path_cost[n] = cost
        n += 1
        d += 1
        child, fresh = _child(M, T, children, node, a, o, nl)
        s = t
        prev = a
        if fresh:
            depth = depth_left - d
            if rollout_depth >= 0 and rollout_depth < depth:
                depth = rollout_depth
            tail = rollout_kernel(M, s, T.support[child], nl, depth, prev, heavy, p_repeat, shielded)
            break
        node = child
    g = tail
    for i in range(n - 1, -1, -1):
        g += path_cost[i]
        v, a = path_node[i], path_action[i]
        T.visits[v] += 1
        T.action_visits[v, a] += 1
        T.q[v, a] += (g - T.q[v, a]) / T.action_visits[v, a]
        if g < T.bounds[0]:
            T.bounds[0] = g
        if g > T.bounds[1]:
            T.bounds[1] = g
    return g


@njit(cache=True)
def _search(M, T, children, root, particles, depth_left, sims, c, heavy, p_repeat, rollout_depth, shielded, prev):
    for _ in range(sims):
        s = particles[np.random.randint(particles.shape[0])]
        _simulate(M, T, children, root, s, depth_left, c, heavy, p_repeat, rollout_depth, shielded, prev)
    buf = np.empty(M.n_actions, dtype=np.int64)
    k = _allowed(M, T.support[root], T.level[root], buf, shielded)
    if k == 0:
        return -1
    best, best_q = -1, np.inf
    for i in range(k):
        a = buf[i]
        if T.action_visits[root, a] > 0 and T.q[root, a] < best_q:
            best, best_q = a, T.q[root, a]
    return buf[0] if best < 0 else best


@njit(cache=True)
def _filter(M, particles, a, o, b_new, k, retries):
    """Rejection-filter particles through (a, o); support-uniform fallback on deprivation."""
    out = np.empty(k, dtype=np.int64)
    kept = 0
    attempts = 0
    while kept < k and attempts < k * retries:
        s = particles[np.random.randint(particles.shape[0])]
        t, o2, _ = env_step(M, s, a)
        attempts += 1
        if o2 == o:
            out[kept] = t
            kept += 1
    if kept == 0:
        for i in range(k):
            out[i] = _uniform_member(M, b_new)
        return out, True
    for i in range(kept, k):
        out[i] = out[np.random.randint(kept)]
    return out, False


@njit(cache=True)
def _initial_particles(M, init_states, init_cum, o0, b0, k, retries):
    out = np.empty(k, dtype=np.int64)
    kept = 0
    attempts = 0
    while kept < k and attempts < k * retries:
        u = np.random.random()
        s = init_states[-1]
        for j in range(init_cum.shape[0]):
            if u < init_cum[j]:
                s = init_states[j]
                break
        attempts += 1
        if sample_obs(M, s) == o0:
            out[kept] = s
            kept += 1
    if kept == 0:
        for i in range(k):
            out[i] = _uniform_member(M, b0)
        return out
    for i in range(kept, k):
        out[i] = out[np.random.randint(kept)]
    return out


@njit(cache=True)
def _sample_initial(init_states, init_cum):
    u = np.random.random()
    for j in range(init_cum.shape[0]):
        if u < init_cum[j]:
            return init_states[j]
    return init_states[-1]


@dataclass
class ParticleBelief:
    particles: np.ndarray
    deprived: int = 0

    def histogram(self, n_states: int) -> np.ndarray:
        return np.bincount(self.particles, minlength=n_states) / len(self.particles)


class Planner:
    """One search tree plus particle belief, re-rooted after every real step."""

    def __init__(self, env: CompiledModel, config: PlannerConfig, max_steps: int | None = None):
        self.env = env
        self.config = config
        steps = config.horizon if max_steps is None else max_steps
        self.tree = _new_tree(1 + (steps + 1) * (config.simulations + 1), env.model.n_actions)
        self.children = Dict.empty(key_type=types.int64, value_type=types.int64)
        self.root = -1
        self.belief: ParticleBelief | None = None
        self.prev_action = -1

    def reset(self, support: int, level: int, particles: np.ndarray) -> None:
        self.tree.count[0] = 0
        self.tree.bounds[:] = (np.inf, -np.inf)
        self.children.clear()
        self.root = _add_node(self.tree, support, level)
        self.belief = ParticleBelief(particles)
        self.prev_action = -1

    def node(self, i: int | None = None) -> TreeNode:
        i = self.root if i is None else i
        T = self.tree
        return TreeNode(i, int(T.support[i]), int(T.level[i]), int(T.visits[i]),
                        T.action_visits[i].copy(), T.q[i].copy())

    def allowed(self) -> list[int]:
        return self.env.allowed(int(self.tree.support[self.root]), int(self.tree.level[self.root]))

    def plan(self, depth_left: int) -> int:
        cfg = self.config
        a = _search(
            self.env.arrays, self.tree, self.children, self.root, self.belief.particles, depth_left,
            cfg.simulations, cfg.exploration, cfg.rollout == "heavy", cfg.p_repeat,
            -1 if cfg.rollout_depth is None else cfg.rollout_depth, self.env.shielded, self.prev_action,
        )
        if a < 0:
            raise RuntimeError("no allowed action at the root; the shield is infeasible here")
        return int(a)

    def advance(self, a: int, o: int, level: int) -> None:
        M = self.env.arrays
        child, _ = _child(M, self.tree, self.children, self.root, a, o, level)
        cfg = self.config
        parts, deprived = _filter(M, self.belief.particles, a, o, self.tree.support[child],
                                  cfg.particles, cfg.resample_factor)
        self.belief = ParticleBelief(parts, self.belief.deprived + int(deprived))
        self.root = int(child)
        self.prev_action = a


def rollout(env: CompiledModel, state: int, support: int, level: int, depth: int, config: PlannerConfig,
            prev: int = -1) -> float:
    return float(rollout_kernel(env.arrays, state, support, level, depth, prev,
                                config.rollout == "heavy", config.p_repeat, env.shielded))


def _init_arrays(model: CoPomdp):
    states = np.array([s for s, _ in model.init_distr], dtype=np.int64)
    cum = np.cumsum([p for _, p in model.init_distr])
    cum[-1] = 1.0
    return states, cum


def run_episode(env: CompiledModel, config: PlannerConfig, seed: int, keep_trace: bool = False) -> EpisodeResult:
    """Play one episode against the simulator until a goal, the horizon, or exhaustion."""
    model = env.model
    M = env.arrays
    seed_kernels(np.uint32(seed & 0xFFFFFFFF))
    init_states, init_cum = _init_arrays(model)
    s = int(_sample_initial(init_states, init_cum))
    o0 = int(sample_obs(M, s))
    b = env.initial()[o0]
    level = model.init_level
    result = EpisodeResult(survived=True, goal_hit=s in model.goals, total_cost=0.0, steps=0)
    if keep_trace:
        result.states.append(s)
        result.observations.append(o0)
        result.levels.append(level)
    if config.horizon == 0 or result.goal_hit:
        return result
    planner = Planner(env, config)
    parts = _initial_particles(M, init_states, init_cum, o0, b, config.particles, config.resample_factor)
    planner.reset(b, level, parts)
    for step in range(config.horizon):
        t0 = time.perf_counter()
        a = planner.plan(config.horizon - step)
        result.decision_times.append(time.perf_counter() - t0)
        if env.shielded and a not in planner.allowed():
            raise AssertionError("planner played a disallowed action")
        result.actions.append(a)
        nl = int(next_level(M, s, a, level))
        if nl < 0:
            if env.shielded:
                raise AssertionError("shielded episode exhausted the resource")
            result.survived = False
            result.total_cost += M.breakdown_cost * (config.horizon - step)
            result.steps = step + 1
            if keep_trace:
                result.levels.append(BOT)
            return result
        t, o, cost = env_step(M, s, a)
        result.total_cost += float(cost)
        s, level = int(t), nl
        result.steps = step + 1
        if keep_trace:
            result.states.append(s)
            result.observations.append(int(o))
            result.levels.append(level)
        if s in model.goals:
            result.goal_hit = True
            return result
        planner.advance(a, int(o), level)
    return result
