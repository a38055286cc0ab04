"""Make lookalike states consume equally by splitting actions through fresh states."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .model import CoPomdp, members


class Origin(NamedTuple):
    """Where a state of a transformed model came from.

    ``action`` is None for original states and set for the inserted state
    ``t_{state,action}``.
    """

    state: int
    action: int | None = None


@dataclass(frozen=True)
class ConsistentModel:
    model: CoPomdp
    origin: tuple[Origin, ...]

    @property
    def n_inserted(self) -> int:
        return sum(o.action is not None for o in self.origin)

    @property
    def transformed(self) -> bool:
        return self.n_inserted > 0


def _inconsistent_actions(model: CoPomdp) -> set[int]:
    bad = set()
    for emit in model.emitters:
        group = members(emit)
        for a in range(model.n_actions):
            if len({model.cons[s][a] for s in group}) > 1:
                bad.add(a)
    return bad


def is_consistent(model: CoPomdp) -> bool:
    return not _inconsistent_actions(model)


def make_consistent(model: CoPomdp, minimal: bool = False, force: bool = False) -> ConsistentModel:
    """Insert a state ``t_{s,a}`` into action ``a`` at ``s`` that emits cons(s, a).

    The full construction splits every (state, action) pair except goal
    self-loops; ``minimal=True`` splits only actions on which some lookalikes
    disagree. Consistent inputs are returned unchanged unless ``force``. The
    cost of (s, a) is charged on the step into ``t_{s,a}``; the resolving step
    is free.
    """
    n, na = model.n_states, model.n_actions
    identity = tuple(Origin(s) for s in range(n))
    bad = _inconsistent_actions(model)
    if not bad and not force:
        return ConsistentModel(model, identity)
    split = bad if minimal else set(range(na))

    inserted: dict[tuple[int, int], int] = {}
    origin = list(identity)
    for s in range(n):
        if s in model.goals:
            continue
        for a in sorted(split):
            inserted[(s, a)] = len(origin)
            origin.append(Origin(s, a))

    cons_values = sorted({model.cons[s][a] for (s, a) in inserted})
    obs_of_cons = {c: model.n_obs + i for i, c in enumerate(cons_values)}
    obs_names = list(model.obs_names) + [f"cons={c}" for c in cons_values]

    total = len(origin)
    trans, obs_fn, cons, cost = [], [], [], []
    names = list(model.state_names)
    for s in range(n):
        t_row, c_row, k_row = [], [], []
        for a in range(na):
            if (s, a) in inserted:
                t_row.append([(inserted[(s, a)], 1.0)])
                c_row.append(0)
            else:
                t_row.append(list(model.transitions[s][a]))
                c_row.append(model.cons[s][a])
            k_row.append(model.cost[s][a])
        trans.append(t_row)
        cons.append(c_row)
        cost.append(k_row)
        obs_fn.append(list(model.obs_fn[s]))
    for (s, a), idx in inserted.items():
        names.append(f"t[{model.state_names[s]},{model.action_names[a]}]")
        trans.append([list(model.transitions[s][a]) for _ in range(na)])
        cons.append([model.cons[s][a]] * na)
        cost.append([0.0] * na)
        obs_fn.append([(obs_of_cons[model.cons[s][a]], 1.0)])
    entry = list(model.entry_cost) + [0.0] * (total - n) if model.entry_cost else None

    out = CoPomdp.build(
        states=names,
        actions=model.action_names,
        observations=obs_names,
        transitions=trans,
        obs_fn=obs_fn,
        cons=cons,
        reloads=model.reloads,
        goals=model.goals,
        capacity=model.capacity,
        cost=cost,
        init_distr=model.init_distr,
        init_level=model.init_level,
        entry_cost=entry,
    )
    return ConsistentModel(out, tuple(origin))
