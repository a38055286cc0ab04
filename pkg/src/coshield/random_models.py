"""Random small models satisfying the standing assumptions (for tests and scripts)."""
from __future__ import annotations

import numpy as np

from .model import CoMdp, CoPomdp


def _random_dist(rng: np.random.Generator, candidates: list[int], max_size: int) -> list[tuple[int, float]]:
    k = int(rng.integers(1, min(max_size, len(candidates)) + 1))
    picked = sorted(rng.choice(candidates, size=k, replace=False).tolist())
    w = rng.random(k) + 0.1
    w = w / w.sum()
    return list(zip(picked, w.tolist()))


def random_comdp(
    rng: np.random.Generator,
    n_states: int | None = None,
    n_actions: int | None = None,
    capacity: int | None = None,
    max_cons: int = 3,
    max_branch: int = 3,
) -> CoMdp:
    """Random CoMDP; zero consumption only on edges to higher-index states or goals (no zero cycles)."""
    n = int(n_states or rng.integers(2, 7))
    na = int(n_actions or rng.integers(1, 4))
    cap = int(capacity or rng.integers(1, 9))
    n_goals = int(rng.integers(0, min(2, n - 1) + 1))
    goals = set(rng.choice(n, size=n_goals, replace=False).tolist())
    others = [s for s in range(n) if s not in goals]
    reloads = {s for s in others if rng.random() < 0.35}
    trans, cons = [], []
    for s in range(n):
        t_row, c_row = [], []
        for a in range(na):
            if s in goals:
                t_row.append([(s, 1.0)])
                c_row.append(0)
                continue
            d = _random_dist(rng, list(range(n)), max_branch)
            c = int(rng.integers(0, max_cons + 1))
            if c == 0 and not all(t in goals or t > s for t, _ in d):
                c = 1
            t_row.append(d)
            c_row.append(c)
        trans.append(t_row)
        cons.append(c_row)
    cost = [[0.0 if s in goals else float(rng.integers(1, 5)) for _ in range(na)] for s in range(n)]
    start = others[0] if others else 0
    m = CoMdp(
        state_names=tuple(f"s{i}" for i in range(n)),
        action_names=tuple(f"a{i}" for i in range(na)),
        transitions=tuple(tuple(tuple(d) for d in row) for row in trans),
        cons=tuple(tuple(r) for r in cons),
        reloads=frozenset(reloads),
        goals=frozenset(goals),
        capacity=cap,
        cost=tuple(tuple(r) for r in cost),
        init_distr=((start, 1.0),),
        init_level=cap,
    )
    return m


def random_copomdp(
    rng: np.random.Generator,
    n_states: int | None = None,
    n_actions: int | None = None,
    capacity: int | None = None,
    consistent: bool = True,
    max_cons: int = 3,
    max_branch: int = 3,
) -> CoPomdp:
    """Random CoPOMDP whose reload and goal states are observable.

    Observations are drawn from per-class pools (goal / reload / other) so no
    reload or goal state is a lookalike of a state outside its class. Non-goal
    consumption is >= 1, which rules out zero cycles. With ``consistent`` the
    consumption is constant on each lookalike component.
    """
    n = int(n_states or rng.integers(2, 6))
    na = int(n_actions or rng.integers(1, 3))
    cap = int(capacity or rng.integers(2, 9))
    n_goals = int(rng.integers(1, min(2, n - 1) + 1))
    goals = set(rng.choice(n, size=n_goals, replace=False).tolist())
    others = [s for s in range(n) if s not in goals]
    reloads = {s for s in others if rng.random() < 0.35}

    pools = {"goal": [], "reload": [], "other": []}
    n_obs = 0
    for cls, count in (("goal", 2), ("reload", 2), ("other", 3)):
        pools[cls] = list(range(n_obs, n_obs + count))
        n_obs += count
    obs_fn = []
    for s in range(n):
        cls = "goal" if s in goals else "reload" if s in reloads else "other"
        obs_fn.append(_random_dist(rng, pools[cls], 2))

    trans, cons = [], []
    for s in range(n):
        t_row, c_row = [], []
        for a in range(na):
            if s in goals:
                t_row.append([(s, 1.0)])
                c_row.append(0)
            else:
                t_row.append(_random_dist(rng, list(range(n)), max_branch))
                c_row.append(int(rng.integers(1, max_cons + 1)))
        trans.append(t_row)
        cons.append(c_row)

    if consistent:
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        owners: dict[int, int] = {}
        for s in range(n):
            for o, _ in obs_fn[s]:
                if o in owners:
                    parent[find(s)] = find(owners[o])
                else:
                    owners[o] = s
        for s in range(n):
            r = find(s)
            if s not in goals:
                cons[s] = list(cons[r])

    cost = [[0.0 if s in goals else float(rng.integers(1, 5)) for _ in range(na)] for s in range(n)]
    init = _random_dist(rng, others, 2)
    return CoPomdp.build(
        states=[f"s{i}" for i in range(n)],
        actions=[f"a{i}" for i in range(na)],
        observations=[f"o{i}" for i in range(n_obs)],
        transitions=trans,
        obs_fn=obs_fn,
        cons=cons,
        reloads=reloads,
        goals=goals,
        capacity=cap,
        cost=cost,
        init_distr=init,
        init_level=cap,
    )
