"""Explicit (state, level) configuration-graph oracle for CoMDP threshold levels.

Deliberately naive: builds every configuration and runs textbook fixed points
over Python sets. Used only to cross-check :mod:`coshield.comdp`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comdp import ComdpGraph
from .model import INF

MAX_CONFIGS = 1_000_000


class OracleTooLarge(ValueError):
    pass


@dataclass
class OracleResult:
    safe: set[tuple[int, int]]
    pos_reach: set[tuple[int, int]]
    as_reach: set[tuple[int, int]]
    capacity: int
    n_states: int

    def _levels(self, configs: set[tuple[int, int]]) -> np.ndarray:
        out = np.full(self.n_states, INF, dtype=np.int64)
        for s, lev in configs:
            out[s] = min(out[s], lev)
        return out

    @property
    def safe_levels(self) -> np.ndarray:
        return self._levels(self.safe)

    @property
    def pos_reach_levels(self) -> np.ndarray:
        return self._levels(self.pos_reach)

    @property
    def as_reach_levels(self) -> np.ndarray:
        return self._levels(self.as_reach)


def _step(g: ComdpGraph, s: int, a: int, lev: int) -> int | None:
    base = g.capacity if g.reloads[s] else lev
    nxt = base - int(g.cons[s, a])
    return nxt if nxt >= 0 else None


def _actions(g: ComdpGraph):
    return [[[int(t) for t in g.successors(s, a)] for a in range(g.n_actions)] for s in range(g.n_states)]


def product_oracle(g: ComdpGraph) -> OracleResult:
    n, cap = g.n_states, g.capacity
    if n * (cap + 1) > MAX_CONFIGS:
        raise OracleTooLarge(f"{n * (cap + 1)} configurations exceed the oracle budget of {MAX_CONFIGS}")
    succ = _actions(g)
    configs = {(s, lev) for s in range(n) for lev in range(cap + 1)}

    safe = set(configs)
    while True:
        keep = set()
        for s, lev in safe:
            if g.goals[s]:
                keep.add((s, lev))
                continue
            for a in range(g.n_actions):
                nl = _step(g, s, a, lev)
                if nl is not None and all((t, nl) in safe for t in succ[s][a]):
                    keep.add((s, lev))
                    break
        if keep == safe:
            break
        safe = keep

    def positive(within: set[tuple[int, int]]) -> set[tuple[int, int]]:
        reach = {c for c in within if g.goals[c[0]]}
        changed = True
        while changed:
            changed = False
            for s, lev in within:
                if (s, lev) in reach:
                    continue
                for a in range(g.n_actions):
                    nl = _step(g, s, a, lev)
                    if nl is None:
                        continue
                    nxt = [(t, nl) for t in succ[s][a]]
                    if all(c in within for c in nxt) and any(c in reach for c in nxt):
                        reach.add((s, lev))
                        changed = True
                        break
        return reach

    pos = positive(safe)
    win = set(safe)
    while True:
        nxt = positive(win)
        if nxt == win:
            break
        win = nxt
    return OracleResult(safe=safe, pos_reach=pos, as_reach=win, capacity=cap, n_states=n)


def min_init_cons_oracle(g: ComdpGraph, level_bound: int | None = None) -> np.ndarray:
    """Least level from which a reload is surely reached in >= 1 step (attractor game).

    Levels are explored up to ``level_bound``; states needing more report INF.
    """
    n = g.n_states
    if level_bound is None:
        level_bound = n * int(g.cons.max(initial=0)) + 1
    if n * (level_bound + 1) > MAX_CONFIGS:
        raise OracleTooLarge("level bound too large for the oracle")
    succ = _actions(g)
    win: set[tuple[int, int]] = set()
    changed = True
    while changed:
        changed = False
        for s in range(n):
            for lev in range(level_bound + 1):
                if (s, lev) in win:
                    continue
                for a in range(g.n_actions):
                    c = int(g.cons[s, a])
                    if c > lev:
                        continue
                    if all(g.reloads[t] or (t, lev - c) in win for t in succ[s][a]):
                        win.add((s, lev))
                        changed = True
                        break
    out = np.full(n, INF, dtype=np.int64)
    for s, lev in win:
        out[s] = min(out[s], lev)
    return out
