"""Threshold levels for fully observable consumption MDPs.

All functionals are synchronous (Jacobi) sweeps over integer vectors with
``INF`` as a saturating top element; iteration stops on exact stability.
Only successor *sets* matter here, never probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import INF, CoMdp, CoPomdp


@dataclass(frozen=True)
class ComdpGraph:
    """Qualitative CoMDP in CSR form; pair ``k = s * n_actions + a``.

    ``succ[succ_ptr[k]:succ_ptr[k + 1]]`` are the successors of pair ``k``.
    Every pair has at least one successor.
    """

    n_states: int
    n_actions: int
    succ_ptr: np.ndarray
    succ: np.ndarray
    cons: np.ndarray
    reloads: np.ndarray
    goals: np.ndarray
    capacity: int

    @classmethod
    def from_successors(cls, successors, cons, reloads, goals, capacity: int) -> "ComdpGraph":
        """``successors[s][a]`` is an iterable of successor states."""
        n = len(successors)
        na = len(successors[0]) if n else 0
        ptr = [0]
        flat: list[int] = []
        for s in range(n):
            for a in range(na):
                row = sorted(set(successors[s][a]))
                flat.extend(row)
                ptr.append(len(flat))
        rel = np.zeros(n, dtype=bool)
        rel[list(reloads)] = True
        gl = np.zeros(n, dtype=bool)
        gl[list(goals)] = True
        return cls(
            n_states=n,
            n_actions=na,
            succ_ptr=np.asarray(ptr, dtype=np.int64),
            succ=np.asarray(flat, dtype=np.int64),
            cons=np.asarray(cons, dtype=np.int64).reshape(n, na),
            reloads=rel,
            goals=gl,
            capacity=int(capacity),
        )

    @classmethod
    def from_model(cls, model: CoMdp | CoPomdp) -> "ComdpGraph":
        succ = [[[t for t, _ in model.transitions[s][a]] for a in range(model.n_actions)] for s in range(model.n_states)]
        return cls.from_successors(succ, model.cons, model.reloads, model.goals, model.capacity)

    def successors(self, s: int, a: int) -> np.ndarray:
        k = s * self.n_actions + a
        return self.succ[self.succ_ptr[k]:self.succ_ptr[k + 1]]

    def with_reloads(self, reloads: np.ndarray) -> "ComdpGraph":
        return ComdpGraph(self.n_states, self.n_actions, self.succ_ptr, self.succ, self.cons,
                          np.asarray(reloads, dtype=bool), self.goals, self.capacity)

    @property
    def _starts(self) -> np.ndarray:
        return self.succ_ptr[:-1]

    def seg_max(self, values: np.ndarray) -> np.ndarray:
        """Per pair, max of ``values`` over its successors."""
        return np.maximum.reduceat(values[self.succ], self._starts)

    def seg_min(self, values: np.ndarray) -> np.ndarray:
        return np.minimum.reduceat(values[self.succ], self._starts)

    def trivially_safe(self) -> np.ndarray:
        """States whose every action is a zero-consumption self-loop."""
        ptr = self.succ_ptr
        lens = ptr[1:] - ptr[:-1]
        first = self.succ[ptr[:-1]]
        own = np.repeat(np.arange(self.n_states), self.n_actions)
        loop = (lens == 1) & (first == own) & (self.cons.ravel() == 0)
        return loop.reshape(self.n_states, self.n_actions).all(axis=1)


def _min_over_actions(g: ComdpGraph, per_pair: np.ndarray) -> np.ndarray:
    return per_pair.reshape(g.n_states, g.n_actions).min(axis=1)


def _reload_reach(g: ComdpGraph, sinks: np.ndarray, truncate: bool) -> np.ndarray:
    """Least resource to surely reach a sink in one or more steps.

    Iterates downward from all-INF. With ``truncate`` values above the
    capacity collapse to INF, which is all callers on the safety path need.
    """
    cons = g.cons.ravel()
    x = np.full(g.n_states, INF, dtype=np.int64)
    while True:
        xs = np.where(sinks, 0, x)
        need = np.minimum(cons + g.seg_max(xs), INF)
        new = _min_over_actions(g, need)
        if truncate:
            new[new > g.capacity] = INF
        assert (new <= x).all(), "reload-reachability iteration must be non-increasing"
        if np.array_equal(new, x):
            return x
        x = new


def min_init_cons(g: ComdpGraph) -> np.ndarray:
    """Least initial level from which a reload is surely reached.

    Goals are ordinary states here; finite values above capacity are kept.
    """
    return _reload_reach(g, g.reloads, truncate=False)


def safe_levels(g: ComdpGraph, reloads: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Minimal safe levels and the reloads that survive demotion.

    Goals and states whose actions are all zero-consumption self-loops can
    never exhaust the resource and act as safe sinks.
    """
    rel = (g.reloads if reloads is None else np.asarray(reloads, dtype=bool)).copy()
    absorbing = g.goals | g.trivially_safe()
    while True:
        mic = _reload_reach(g, rel | absorbing, truncate=True)
        dead = rel & (mic > g.capacity)
        if not dead.any():
            break
        rel &= ~dead
    safe = np.where(mic <= g.capacity, mic, INF)
    safe[rel | absorbing] = 0
    return safe, rel


def _resupinv_pairs(g: ComdpGraph, need: np.ndarray, reloads: np.ndarray) -> np.ndarray:
    cons = g.cons.ravel()
    rel = np.repeat(reloads, g.n_actions)
    out = np.where(rel, 0, need + cons)
    out[(need >= INF) | (need > g.capacity - cons)] = INF
    return out


def pos_reach_levels(g: ComdpGraph, safe: np.ndarray, reloads: np.ndarray | None = None) -> np.ndarray:
    """Minimal level admitting a safe policy that reaches a goal with positive probability.

    ``safe`` and ``reloads`` must come from :func:`safe_levels` on the same graph.
    """
    rel = g.reloads if reloads is None else np.asarray(reloads, dtype=bool)
    safe_max = g.seg_max(safe)
    x = np.where(g.goals, 0, INF).astype(np.int64)
    while True:
        need = np.maximum(g.seg_min(x), safe_max)
        new = _min_over_actions(g, _resupinv_pairs(g, need, rel))
        new[g.goals] = 0
        assert (new <= x).all(), "positive-reach iteration must be non-increasing"
        if np.array_equal(new, x):
            return x
        x = new


def as_reach_levels(g: ComdpGraph) -> np.ndarray:
    """Minimal level admitting a safe policy that reaches a goal almost surely."""
    rel = g.reloads.copy()
    while True:
        safe, surviving = safe_levels(g, rel)
        pr = pos_reach_levels(g, safe, surviving)
        keep = rel & (pr < INF)
        if np.array_equal(keep, rel):
            return pr
        rel = keep
