"""Array-encoded generative simulator with exact belief-support tracking.

The model is flattened into CSR arrays so that sampling, shield lookups and
support updates run inside numba kernels. Random draws inside kernels use
numba's own generator, seeded per episode through :func:`seed_kernels`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .belief import ImpossibleObservation, successor_supports
from .model import BOT, INF, CoPomdp, members
from .shield import Shield, initial_supports


class ModelArrays(NamedTuple):
    n_actions: int
    n_obs: int
    capacity: int
    breakdown_cost: float
    trans_ptr: np.ndarray
    trans_next: np.ndarray
    trans_cum: np.ndarray
    obs_ptr: np.ndarray
    obs_id: np.ndarray
    obs_cum: np.ndarray
    cons: np.ndarray
    reload: np.ndarray
    goal: np.ndarray
    cost: np.ndarray
    entry_cost: np.ndarray
    # support automaton: segment b * n_actions + a lists (observation, next support)
    sup_ptr: np.ndarray
    sup_obs: np.ndarray
    sup_next: np.ndarray
    mem_ptr: np.ndarray
    mem: np.ndarray
    tau: np.ndarray


def _csr(rows: list[list[tuple[int, float]]]):
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    ids, cum = [], []
    for k, row in enumerate(rows):
        acc = 0.0
        for i, (x, p) in enumerate(row):
            acc += p
            ids.append(x)
            cum.append(1.0 if i == len(row) - 1 else acc)
        ptr[k + 1] = len(ids)
    return ptr, np.asarray(ids, dtype=np.int64), np.asarray(cum, dtype=np.float64)


def support_closure(model: CoPomdp, roots) -> tuple[list[int], list[list[dict[int, int]]]]:
    """Supports reachable from ``roots`` and the table ``next[b][a][o] -> b'`` (ids)."""
    index: dict[int, int] = {}
    supports: list[int] = []
    queue: deque[int] = deque()
    for r in roots:
        if r not in index:
            index[r] = len(supports)
            supports.append(r)
            queue.append(r)
    table: dict[int, list[dict[int, int]]] = {}
    while queue:
        mask = queue.popleft()
        rows = []
        for a in range(model.n_actions):
            row = {}
            for o, nxt in successor_supports(model, mask, a).items():
                if nxt not in index:
                    index[nxt] = len(supports)
                    supports.append(nxt)
                    queue.append(nxt)
                row[o] = index[nxt]
            rows.append(row)
        table[index[mask]] = rows
    return supports, [table[b] for b in range(len(supports))]


def default_breakdown_cost(model: CoPomdp) -> float:
    """Smallest positive per-step cost outside the goals (1.0 if there is none)."""
    vals = [c for s in range(model.n_states) if s not in model.goals for c in model.cost[s] if c > 0]
    return float(min(vals)) if vals else 1.0


@dataclass
class CompiledModel:
    """A model plus its reachable support automaton and (optionally) shield thresholds."""

    model: CoPomdp
    supports: list[int]
    support_index: dict[int, int]
    arrays: ModelArrays
    shielded: bool

    @property
    def n_supports(self) -> int:
        return len(self.supports)

    def support_id(self, mask: int) -> int:
        return self.support_index[mask]

    def initial(self) -> dict[int, int]:
        """Initial observation -> support id."""
        return {o: self.support_index[m] for o, m in initial_supports(self.model).items()}

    def next_support(self, b: int, a: int, o: int) -> int:
        nb = _next_support(self.arrays, b, a, o)
        if nb < 0:
            raise ImpossibleObservation(
                f"observation {self.model.obs_names[o]} impossible after {self.model.action_names[a]}"
            )
        return int(nb)

    def allowed(self, b: int, level: int) -> list[int]:
        buf = np.empty(self.model.n_actions, dtype=np.int64)
        k = _allowed(self.arrays, b, level, buf, self.shielded)
        return buf[:k].tolist()


def compile_model(model: CoPomdp, shield: Shield | None = None, breakdown_cost: float | None = None) -> CompiledModel:
    """Flatten ``model``; with ``shield`` the kernels only ever play enabled actions."""
    roots = sorted(set(initial_supports(model).values()))
    supports, table = support_closure(model, roots)
    na = model.n_actions
    t_ptr, t_next, t_cum = _csr([list(model.transitions[s][a]) for s in range(model.n_states) for a in range(na)])
    o_ptr, o_id, o_cum = _csr([list(d) for d in model.obs_fn])
    s_ptr = np.zeros(len(supports) * na + 1, dtype=np.int64)
    s_obs, s_next = [], []
    for b in range(len(supports)):
        for a in range(na):
            for o in sorted(table[b][a]):
                s_obs.append(o)
                s_next.append(table[b][a][o])
            s_ptr[b * na + a + 1] = len(s_obs)
    m_ptr = np.zeros(len(supports) + 1, dtype=np.int64)
    mem: list[int] = []
    for b, mask in enumerate(supports):
        mem.extend(members(mask))
        m_ptr[b + 1] = len(mem)
    tau = np.zeros((len(supports), na), dtype=np.int64)
    if shield is not None:
        for b, mask in enumerate(supports):
            tau[b] = np.minimum(shield.row(mask), INF)
    arrays = ModelArrays(
        n_actions=na,
        n_obs=model.n_obs,
        capacity=model.capacity,
        breakdown_cost=float(default_breakdown_cost(model) if breakdown_cost is None else breakdown_cost),
        trans_ptr=t_ptr,
        trans_next=t_next,
        trans_cum=t_cum,
        obs_ptr=o_ptr,
        obs_id=o_id,
        obs_cum=o_cum,
        cons=np.asarray(model.cons, dtype=np.int64).reshape(model.n_states, na),
        reload=np.array([s in model.reloads for s in range(model.n_states)]),
        goal=np.array([s in model.goals for s in range(model.n_states)]),
        cost=np.asarray(model.cost, dtype=np.float64).reshape(model.n_states, na),
        entry_cost=np.asarray(model.entry_cost or [0.0] * model.n_states, dtype=np.float64),
        sup_ptr=s_ptr,
        sup_obs=np.asarray(s_obs, dtype=np.int64),
        sup_next=np.asarray(s_next, dtype=np.int64),
        mem_ptr=m_ptr,
        mem=np.asarray(mem, dtype=np.int64),
        tau=tau,
    )
    return CompiledModel(model, supports, {m: i for i, m in enumerate(supports)}, arrays, shield is not None)


# -- kernels ---------------------------------------------------------------


@njit(cache=True)
def seed_kernels(seed):
    np.random.seed(seed)


@njit(cache=True)
def _draw(ptr, ids, cum, k, u):
    lo, hi = ptr[k], ptr[k + 1]
    for j in range(lo, hi):
        if u < cum[j]:
            return ids[j]
    return ids[hi - 1]


@njit(cache=True)
def env_step(M, s, a):
    """Sample (next state, observation, cost) for playing ``a`` in ``s``."""
    t = _draw(M.trans_ptr, M.trans_next, M.trans_cum, s * M.n_actions + a, np.random.random())
    o = _draw(M.obs_ptr, M.obs_id, M.obs_cum, t, np.random.random())
    c = M.cost[s, a]
    if M.goal[t] and not M.goal[s]:
        c += M.entry_cost[t]
    return t, o, c


@njit(cache=True)
def sample_obs(M, s):
    return _draw(M.obs_ptr, M.obs_id, M.obs_cum, s, np.random.random())


@njit(cache=True)
def next_level(M, s, a, level):
    if level < 0:
        return -1
    base = M.capacity if M.reload[s] else level
    nxt = base - M.cons[s, a]
    return nxt if nxt >= 0 else -1


@njit(cache=True)
def _next_support(M, b, a, o):
    k = b * M.n_actions + a
    for j in range(M.sup_ptr[k], M.sup_ptr[k + 1]):
        if M.sup_obs[j] == o:
            return M.sup_next[j]
    return -1


@njit(cache=True)
def _allowed(M, b, level, buf, shielded):
    """Write allowed actions into ``buf``; returns their count."""
    k = 0
    if level < 0:
        return 0
    for a in range(M.n_actions):
        if not shielded or level >= M.tau[b, a]:
            buf[k] = a
            k += 1
    return k


@njit(cache=True)
def _uniform_member(M, b):
    lo, hi = M.mem_ptr[b], M.mem_ptr[b + 1]
    return M.mem[lo + np.random.randint(hi - lo)]


@njit(cache=True)
def _choose(buf, k, prev, heavy, p_repeat):
    if heavy and prev >= 0 and np.random.random() < p_repeat:
        for i in range(k):
            if buf[i] == prev:
                return prev
    return buf[np.random.randint(k)]


@njit(cache=True)
def rollout_kernel(M, s, b, level, depth, prev, heavy, p_repeat, shielded):
    """Undiscounted cost of a random allowed-action rollout of at most ``depth`` steps."""
    buf = np.empty(M.n_actions, dtype=np.int64)
    total = 0.0
    for d in range(depth):
        if M.goal[s]:
            break
        k = _allowed(M, b, level, buf, shielded)
        if k == 0:
            raise RuntimeError("rollout reached a support with no allowed action")
        a = _choose(buf, k, prev, heavy, p_repeat)
        nl = next_level(M, s, a, level)
        if nl < 0:
            if shielded:
                raise RuntimeError("shielded rollout exhausted the resource")
            total += M.breakdown_cost * (depth - d)
            break
        t, o, c = env_step(M, s, a)
        total += c
        b = _next_support(M, b, a, o)
        s, level, prev = t, nl, a
    return total


@njit(cache=True)
def random_conforming_kernel(M, s0, b0, level0, max_steps, n_episodes, shielded):
    """Uniform-over-allowed play; per episode returns (goal step or -1, exhausted flag, dead-end flag)."""
    out = np.zeros((n_episodes, 3), dtype=np.int64)
    buf = np.empty(M.n_actions, dtype=np.int64)
    for e in range(n_episodes):
        s, b, level = s0[e], b0[e], level0
        out[e, 0] = -1
        for step in range(max_steps):
            if M.goal[s]:
                out[e, 0] = step
                break
            k = _allowed(M, b, level, buf, shielded)
            if k == 0:
                out[e, 2] = 1
                break
            a = buf[np.random.randint(k)]
            nl = next_level(M, s, a, level)
            if nl < 0:
                out[e, 1] = 1
                break
            t, o, c = env_step(M, s, a)
            b = _next_support(M, b, a, o)
            s, level = t, nl
        else:
            if M.goal[s]:
                out[e, 0] = max_steps
    return out


class Simulator:
    """Generative interface over a model: ``step(state, action, rng) -> (state, obs, level, cost)``.

    ``level`` bookkeeping follows the resource semantics; ``BOT`` marks exhaustion.
    """

    def __init__(self, model: CoPomdp):
        self.model = model

    def initial(self, rng: np.random.Generator) -> tuple[int, int, int]:
        states, probs = zip(*self.model.init_distr)
        s = int(rng.choice(states, p=np.asarray(probs) / sum(probs)))
        return s, self.observe(s, rng), self.model.init_level

    def observe(self, s: int, rng: np.random.Generator) -> int:
        obs, probs = zip(*self.model.obs_fn[s])
        return int(rng.choice(obs, p=np.asarray(probs) / sum(probs)))

    def step(self, s: int, a: int, level: int, rng: np.random.Generator) -> tuple[int, int, int, float]:
        m = self.model
        succ, probs = zip(*m.transitions[s][a])
        t = int(rng.choice(succ, p=np.asarray(probs) / sum(probs)))
        if level == BOT:
            nl = BOT
        else:
            nl = (m.capacity if s in m.reloads else level) - m.cons[s][a]
            nl = nl if nl >= 0 else BOT
        return t, self.observe(t, rng), nl, m.step_cost(s, a, t)


@dataclass
class ConformingRun:
    goal_step: np.ndarray
    exhausted: np.ndarray
    dead_end: np.ndarray

    @property
    def goal_rate(self) -> float:
        return float(np.mean(self.goal_step >= 0))


def random_conforming(env: CompiledModel, episodes: int, max_steps: int, seed: int = 0) -> ConformingRun:
    """Play uniformly among allowed actions (all actions when unshielded)."""
    rng = np.random.default_rng(seed)
    model = env.model
    states, probs = zip(*model.init_distr)
    s0 = rng.choice(states, size=episodes, p=np.asarray(probs) / sum(probs)).astype(np.int64)
    init = env.initial()
    b0 = np.empty(episodes, dtype=np.int64)
    for i, s in enumerate(s0):
        obs, p = zip(*model.obs_fn[s])
        o = int(rng.choice(obs, p=np.asarray(p) / sum(p)))
        b0[i] = init[o]
    seed_kernels(np.uint32(rng.integers(2**32)))
    out = random_conforming_kernel(env.arrays, s0, b0, model.init_level, max_steps, episodes, env.shielded)
    return ConformingRun(out[:, 0], out[:, 1].astype(bool), out[:, 2].astype(bool))
