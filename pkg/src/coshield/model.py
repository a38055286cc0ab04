"""Consumption POMDP models, resource arithmetic and model validation.

States, actions and observations are dense integer indices. Distributions are
sparse tuples of ``(index, probability)`` pairs sorted by index.

Resource levels are plain ints: ``BOT`` (exhausted) is smaller than every
level and ``INF`` is larger than any capacity.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx

BOT = -1
INF = 1 << 60
PROB_TOL = 1e-9

Dist = tuple[tuple[int, float], ...]


def fmt_level(level: int) -> str:
    if level == BOT:
        return "⊥"
    if level >= INF:
        return "∞"
    return str(level)


def _dist(pairs) -> Dist:
    merged: dict[int, float] = {}
    for i, p in pairs:
        merged[int(i)] = merged.get(int(i), 0.0) + float(p)
    return tuple(sorted((i, p) for i, p in merged.items() if p != 0.0))


def mask_of(states: Iterable[int]) -> int:
    m = 0
    for s in states:
        m |= 1 << s
    return m


def members(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


@dataclass(frozen=True, eq=True)
class CoPomdp:
    """A consumption POMDP with goal states and a cost function.

    ``entry_cost`` is an optional one-shot cost charged when a transition
    enters a goal state from outside the goal set (zero elsewhere).
    """

    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    obs_names: tuple[str, ...]
    transitions: tuple[tuple[Dist, ...], ...]
    obs_fn: tuple[Dist, ...]
    cons: tuple[tuple[int, ...], ...]
    reloads: frozenset[int]
    goals: frozenset[int]
    capacity: int
    cost: tuple[tuple[float, ...], ...]
    init_distr: Dist
    init_level: int
    entry_cost: tuple[float, ...] = field(default=())

    @classmethod
    def build(
        cls,
        states: Sequence[str],
        actions: Sequence[str],
        observations: Sequence[str],
        transitions,
        obs_fn,
        cons,
        reloads: Iterable[int],
        goals: Iterable[int],
        capacity: int,
        cost=None,
        init_distr=None,
        init_level: int | None = None,
        entry_cost=None,
    ) -> "CoPomdp":
        """Normalise loosely typed inputs (lists, dicts) into a model.

        ``transitions[s][a]`` and ``obs_fn[s]`` may be dicts or pair lists.
        """
        n, na = len(states), len(actions)

        def as_pairs(d):
            return d.items() if isinstance(d, dict) else d

        trans = tuple(tuple(_dist(as_pairs(transitions[s][a])) for a in range(na)) for s in range(n))
        obs = tuple(_dist(as_pairs(obs_fn[s])) for s in range(n))
        cons_t = tuple(tuple(int(c) for c in row) for row in cons)
        if cost is None:
            cost = [[0.0] * na for _ in range(n)]
        cost_t = tuple(tuple(float(c) for c in row) for row in cost)
        if init_distr is None:
            init_distr = [(0, 1.0)]
        if entry_cost is None:
            entry_cost = [0.0] * n
        return cls(
            state_names=tuple(states),
            action_names=tuple(actions),
            obs_names=tuple(observations),
            transitions=trans,
            obs_fn=obs,
            cons=cons_t,
            reloads=frozenset(int(r) for r in reloads),
            goals=frozenset(int(g) for g in goals),
            capacity=int(capacity),
            cost=cost_t,
            init_distr=_dist(as_pairs(init_distr)),
            init_level=int(capacity if init_level is None else init_level),
            entry_cost=tuple(float(c) for c in entry_cost),
        )

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    @property
    def n_obs(self) -> int:
        return len(self.obs_names)

    def succ(self, s: int, a: int) -> list[int]:
        return [t for t, _ in self.transitions[s][a]]

    def step_cost(self, s: int, a: int, t: int) -> float:
        c = self.cost[s][a]
        if self.entry_cost and t in self.goals and s not in self.goals:
            c += self.entry_cost[t]
        return c

    # -- cached structure used by belief tracking -------------------------

    @cached_property
    def succ_masks(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(mask_of(t for t, _ in self.transitions[s][a]) for a in range(self.n_actions))
            for s in range(self.n_states)
        )

    @cached_property
    def obs_support(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(o for o, _ in d) for d in self.obs_fn)

    @cached_property
    def emitters(self) -> tuple[int, ...]:
        """Per observation, the mask of states that can emit it."""
        out = [0] * self.n_obs
        for s, d in enumerate(self.obs_fn):
            for o, _ in d:
                out[o] |= 1 << s
        return tuple(out)

    @cached_property
    def partitions(self) -> tuple[tuple[dict[int, int], ...], ...]:
        """``partitions[s][a][o]`` = mask of successors of (s, a) that can emit o."""
        emit = self.emitters
        out = []
        for s in range(self.n_states):
            row = []
            for a in range(self.n_actions):
                part: dict[int, int] = {}
                succ_mask = self.succ_masks[s][a]
                for t, _ in self.transitions[s][a]:
                    for o, _ in self.obs_fn[t]:
                        if o not in part:
                            part[o] = succ_mask & emit[o]
                row.append(part)
            out.append(tuple(row))
        return tuple(out)

    @cached_property
    def reload_mask(self) -> int:
        return mask_of(self.reloads)

    @cached_property
    def goal_mask(self) -> int:
        return mask_of(self.goals)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "states": list(self.state_names),
            "actions": list(self.action_names),
            "observations": list(self.obs_names),
            "transitions": [
                {"state": s, "action": a, "dist": [[t, p] for t, p in self.transitions[s][a]]}
                for s in range(self.n_states)
                for a in range(self.n_actions)
            ],
            "obs_fn": [[[o, p] for o, p in d] for d in self.obs_fn],
            "cons": [list(r) for r in self.cons],
            "reloads": sorted(self.reloads),
            "goals": sorted(self.goals),
            "capacity": self.capacity,
            "cost": [list(r) for r in self.cost],
            "init_distr": [[s, p] for s, p in self.init_distr],
            "init_level": self.init_level,
        }
        if any(self.entry_cost):
            d["entry_cost"] = list(self.entry_cost)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass(frozen=True)
class CoMdp:
    """Fully observable consumption MDP (identity observations implied)."""

    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    transitions: tuple[tuple[Dist, ...], ...]
    cons: tuple[tuple[int, ...], ...]
    reloads: frozenset[int]
    goals: frozenset[int]
    capacity: int
    cost: tuple[tuple[float, ...], ...] | None = None
    init_distr: Dist = ((0, 1.0),)
    init_level: int | None = None

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def as_copomdp(self) -> CoPomdp:
        n = self.n_states
        return CoPomdp.build(
            states=self.state_names,
            actions=self.action_names,
            observations=self.state_names,
            transitions=self.transitions,
            obs_fn=[[(s, 1.0)] for s in range(n)],
            cons=self.cons,
            reloads=self.reloads,
            goals=self.goals,
            capacity=self.capacity,
            cost=self.cost,
            init_distr=self.init_distr,
            init_level=self.init_level,
        )


# -- resource arithmetic ---------------------------------------------------


def resup(level: int, s: int, a: int, model: CoPomdp) -> int:
    """Resource level after playing ``a`` in ``s`` starting from ``level``."""
    if level == BOT:
        return BOT
    base = model.capacity if s in model.reloads else level
    nxt = base - model.cons[s][a]
    return nxt if nxt >= 0 else BOT


def resupinv(target: int, s: int, a: int, model: CoPomdp) -> int:
    """Least level needed in ``s`` so that playing ``a`` leaves at least ``target``."""
    if target == BOT:
        return BOT
    if target >= INF:
        return INF
    c = model.cons[s][a]
    if target > model.capacity - c:
        return INF
    return 0 if s in model.reloads else target + c


def lookalike(s: int, t: int, model: CoPomdp) -> bool:
    return not model.obs_support[s].isdisjoint(model.obs_support[t])


# -- validation ------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    states: tuple[int, ...] = ()
    actions: tuple[int, ...] = ()


def _check_dist(d: Dist, size: int, what: str) -> str | None:
    if not d:
        return f"{what}: empty distribution"
    if any(i < 0 or i >= size for i, _ in d):
        return f"{what}: index out of range"
    if any(p < 0 for _, p in d):
        return f"{what}: negative probability"
    total = sum(p for _, p in d)
    if abs(total - 1.0) > PROB_TOL:
        return f"{what}: probabilities sum to {total!r}"
    return None


def validate(model: CoPomdp) -> list[Violation]:
    """Check the standing assumptions on a model; returns all violations found."""
    out: list[Violation] = []
    n, na, no = model.n_states, model.n_actions, model.n_obs

    if len(model.transitions) != n or any(len(row) != na for row in model.transitions):
        out.append(Violation("shape", "transitions must have one entry per state and action"))
        return out
    if len(model.obs_fn) != n:
        out.append(Violation("shape", "obs_fn must have one entry per state"))
        return out
    if len(model.cons) != n or any(len(r) != na for r in model.cons):
        out.append(Violation("shape", "cons must be |S| x |A|"))
        return out
    if len(model.cost) != n or any(len(r) != na for r in model.cost):
        out.append(Violation("shape", "cost must be |S| x |A|"))
        return out
    if model.entry_cost and len(model.entry_cost) != n:
        out.append(Violation("shape", "entry_cost must have one entry per state"))
        return out

    for s in range(n):
        for a in range(na):
            err = _check_dist(model.transitions[s][a], n, f"transition ({s},{a})")
            if err:
                out.append(Violation("distribution", err, (s,), (a,)))
        err = _check_dist(model.obs_fn[s], no, f"observation of {s}")
        if err:
            out.append(Violation("distribution", err, (s,)))
    err = _check_dist(model.init_distr, n, "initial distribution")
    if err:
        out.append(Violation("distribution", err))
    if out:
        return out

    if model.capacity < 1:
        out.append(Violation("capacity", f"capacity {model.capacity} < 1"))
    if not 0 <= model.init_level <= model.capacity:
        out.append(Violation("init_level", f"initial level {model.init_level} outside [0, cap]"))
    for s in range(n):
        for a in range(na):
            if model.cons[s][a] < 0:
                out.append(Violation("consumption", f"negative consumption at ({s},{a})", (s,), (a,)))
    for x in model.reloads | model.goals:
        if not 0 <= x < n:
            out.append(Violation("shape", f"reload/goal index {x} out of range", (x,)))
    if out:
        return out

    for g in sorted(model.goals):
        for a in range(na):
            if model.transitions[g][a] != ((g, 1.0),):
                out.append(Violation("goal", f"goal {g} is not absorbing under action {a}", (g,), (a,)))
            if model.cons[g][a] != 0:
                out.append(Violation("goal", f"goal {g} self-loop consumes under action {a}", (g,), (a,)))
            if model.cost[g][a] != 0:
                out.append(Violation("goal", f"goal {g} self-loop has non-zero cost", (g,), (a,)))

    for o, emit in enumerate(model.emitters):
        group = members(emit)
        rel = [s for s in group if s in model.reloads]
        if rel and len(rel) != len(group):
            other = [s for s in group if s not in model.reloads]
            out.append(Violation("lookalike", f"reload states {rel} share observation {o} with non-reloads {other}", tuple(group)))
        gl = [s for s in group if s in model.goals]
        if gl and len(gl) != len(group):
            other = [s for s in group if s not in model.goals]
            out.append(Violation("lookalike", f"goal states {gl} share observation {o} with non-goals {other}", tuple(group)))

    zero = nx.DiGraph()
    zero.add_nodes_from(s for s in range(n) if s not in model.goals)
    for s in range(n):
        if s in model.goals:
            continue
        for a in range(na):
            if model.cons[s][a] == 0:
                zero.add_edges_from((s, t) for t, _ in model.transitions[s][a] if t not in model.goals)
    for comp in nx.strongly_connected_components(zero):
        if len(comp) > 1 or any(zero.has_edge(s, s) for s in comp):
            states = tuple(sorted(comp))
            out.append(Violation("zero-cycle", f"zero-consumption cycle among states {list(states)}", states))

    # a negative cost may be collected at most once per run: its pair must not lie on a cycle
    full = nx.DiGraph()
    full.add_nodes_from(range(n))
    for s in range(n):
        if s in model.goals:
            continue
        for a in range(na):
            full.add_edges_from((s, t) for t, _ in model.transitions[s][a])
    scc_id = {}
    for i, comp in enumerate(nx.strongly_connected_components(full)):
        for s in comp:
            scc_id[s] = i
    for s in range(n):
        for a in range(na):
            if model.cost[s][a] < 0 and s not in model.goals:
                if any(scc_id[t] == scc_id[s] for t, _ in model.transitions[s][a]):
                    out.append(Violation("negative-cost", f"negative cost at ({s},{a}) can repeat along a cycle", (s,), (a,)))
    if model.entry_cost:
        for s, c in enumerate(model.entry_cost):
            if c != 0 and s not in model.goals:
                out.append(Violation("entry-cost", f"entry cost on non-goal state {s}", (s,)))
    return out


class ModelError(ValueError):
    """Raised by the loader for malformed or invalid model files."""

    def __init__(self, message: str, violations: Sequence[Violation] = ()):
        super().__init__(message)
        self.violations = list(violations)


_REQUIRED_KEYS = {
    "states", "actions", "observations", "transitions", "obs_fn", "cons",
    "reloads", "goals", "capacity", "cost", "init_distr", "init_level",
}
_OPTIONAL_KEYS = {"entry_cost"}


def model_from_dict(d: dict, check: bool = True) -> CoPomdp:
    if not isinstance(d, dict):
        raise ModelError("model document must be a JSON object")
    unknown = set(d) - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ModelError(f"unknown keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(d)
    if missing:
        raise ModelError(f"missing keys: {sorted(missing)}")
    n, na = len(d["states"]), len(d["actions"])
    trans: list[list[list]] = [[[] for _ in range(na)] for _ in range(n)]
    seen = set()
    try:
        for entry in d["transitions"]:
            s, a = int(entry["state"]), int(entry["action"])
            if (s, a) in seen:
                raise ModelError(f"duplicate transition entry ({s},{a})")
            seen.add((s, a))
            trans[s][a] = [(int(t), float(p)) for t, p in entry["dist"]]
        m = CoPomdp.build(
            states=d["states"],
            actions=d["actions"],
            observations=d["observations"],
            transitions=trans,
            obs_fn=[[(int(o), float(p)) for o, p in row] for row in d["obs_fn"]],
            cons=d["cons"],
            reloads=d["reloads"],
            goals=d["goals"],
            capacity=d["capacity"],
            cost=d["cost"],
            init_distr=[(int(s), float(p)) for s, p in d["init_distr"]],
            init_level=d["init_level"],
            entry_cost=d.get("entry_cost"),
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ModelError(f"malformed model document: {e}") from e
    if check:
        problems = validate(m)
        if problems:
            raise ModelError("model failed validation: " + "; ".join(v.message for v in problems), problems)
    return m


def load_model(path, check: bool = True) -> CoPomdp:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: not valid JSON ({e})") from e
    return model_from_dict(d, check=check)


def save_model(model: CoPomdp, path) -> None:
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=1)
        f.write("\n")
