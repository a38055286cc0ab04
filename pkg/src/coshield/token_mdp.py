"""Token CoMDP over (belief support, guessed state) pairs.

A token state is ``(B, alpha)`` where ``alpha`` is a member of ``B`` or
``EPS`` (the invalidated guess). Only the fragment reachable from the given
root supports is built.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .belief import successor_supports
from .comdp import ComdpGraph
from .consistency import is_consistent
from .model import CoPomdp, members

EPS = -1
DEFAULT_MAX_STATES = 2_000_000


class TokenState(NamedTuple):
    support: int
    token: int

    def label(self, model: CoPomdp) -> str:
        names = [("^" if s == self.token else "") + model.state_names[s] for s in members(self.support)]
        suffix = ",ε" if self.token == EPS else ""
        return "{" + ",".join(names) + "}" + suffix


class TokenLimitExceeded(RuntimeError):
    pass


def _successors(model: CoPomdp, next_supports, token: int, a: int) -> set[tuple[int, int]]:
    """Token successors given the possible next supports of the current support."""
    out = set()
    if token == EPS:
        return {(b, EPS) for b in next_supports}
    reach = model.succ_masks[token][a]
    for b in next_supports:
        inter = reach & b
        if inter:
            out.update((b, t) for t in members(inter))
        else:
            out.add((b, EPS))
    return out


def token_successors(ts: TokenState, a: int, model: CoPomdp) -> set[TokenState]:
    nxt = set(successor_supports(model, ts.support, a).values())
    return {TokenState(b, t) for b, t in _successors(model, nxt, ts.token, a)}


def nonempty_token_successor_check(ts: TokenState, a: int, model: CoPomdp) -> bool:
    """Some successor of a token state with a real guess keeps a real guess."""
    assert ts.token != EPS
    return any(t.token != EPS for t in token_successors(ts, a, model))


@dataclass
class TokenComdp:
    model: CoPomdp
    supports: list[int]
    support_index: dict[int, int]
    tokens: list[TokenState]
    token_index: dict[tuple[int, int], int]
    support_of: np.ndarray
    is_eps: np.ndarray
    graph: ComdpGraph
    # next_support[b][a] maps an observation to the id of the next support
    next_support: list[list[dict[int, int]]]

    @property
    def n_states(self) -> int:
        return len(self.tokens)

    def bsucc(self, b: int, a: int, s: int) -> set[int]:
        """Ids of the s-successors of support ``b`` under ``a``."""
        table = self.next_support[b][a]
        return {table[o] for o in self.model.partitions[s][a]}

    def to_copomdp(self) -> CoPomdp:
        """Debug view as a model with identity observations and uniform branching."""
        g = self.graph
        names = [t.label(self.model) for t in self.tokens]
        trans = []
        for i in range(g.n_states):
            row = []
            for a in range(g.n_actions):
                succ = g.successors(i, a).tolist()
                row.append([(t, 1.0 / len(succ)) for t in succ])
            trans.append(row)
        return CoPomdp.build(
            states=names,
            actions=self.model.action_names,
            observations=names,
            transitions=trans,
            obs_fn=[[(i, 1.0)] for i in range(g.n_states)],
            cons=g.cons.tolist(),
            reloads=np.flatnonzero(g.reloads).tolist(),
            goals=np.flatnonzero(g.goals).tolist(),
            capacity=g.capacity,
            init_distr=[(0, 1.0)],
        )


def build_token_comdp(model: CoPomdp, roots, max_states: int = DEFAULT_MAX_STATES) -> TokenComdp:
    """Breadth-first closure of the token CoMDP from ``{(B, alpha) : B in roots}``."""
    if not is_consistent(model):
        raise ValueError("token CoMDP requires a consistent model; run make_consistent first")
    na = model.n_actions
    supports: list[int] = []
    support_index: dict[int, int] = {}
    next_support: list[list[dict[int, int]] | None] = []
    tokens: list[TokenState] = []
    token_index: dict[tuple[int, int], int] = {}
    rows: list[list[list[int]] | None] = []
    queue: deque[int] = deque()

    def support_id(mask: int) -> int:
        b = support_index.get(mask)
        if b is None:
            rel = mask & model.reload_mask
            assert rel == 0 or rel == mask, f"support {members(mask)} mixes reload and non-reload states"
            gl = mask & model.goal_mask
            assert gl == 0 or gl == mask, f"support {members(mask)} mixes goal and non-goal states"
            b = len(supports)
            support_index[mask] = b
            supports.append(mask)
            next_support.append(None)
        return b

    def token_id(mask: int, token: int) -> int:
        key = (mask, token)
        i = token_index.get(key)
        if i is None:
            i = len(tokens)
            if i >= max_states:
                raise TokenLimitExceeded(
                    f"token CoMDP exceeds {max_states} states ({len(supports)} supports so far)"
                )
            token_index[key] = i
            tokens.append(TokenState(mask, token))
            rows.append(None)
            queue.append(i)
        return i

    for root in roots:
        support_id(root)
        for t in members(root) + [EPS]:
            token_id(root, t)

    while queue:
        i = queue.popleft()
        mask, token = tokens[i]
        b = support_index[mask]
        if next_support[b] is None:
            per_action = []
            for a in range(na):
                per_action.append({o: support_id(m) for o, m in successor_supports(model, mask, a).items()})
            next_support[b] = per_action
        row = []
        for a in range(na):
            nxt = {supports[x] for x in next_support[b][a].values()}
            row.append(sorted(token_id(m, t) for m, t in _successors(model, nxt, token, a)))
        rows[i] = row

    n = len(tokens)
    cons = [model.cons[members(t.support)[0]] for t in tokens]
    reloads = [i for i, t in enumerate(tokens) if t.support & model.reload_mask]
    goals = [i for i, t in enumerate(tokens) if t.token != EPS and t.token in model.goals]
    graph = ComdpGraph.from_successors(rows, cons, reloads, goals, model.capacity)
    return TokenComdp(
        model=model,
        supports=supports,
        support_index=support_index,
        tokens=tokens,
        token_index=token_index,
        support_of=np.array([support_index[t.support] for t in tokens], dtype=np.int64),
        is_eps=np.array([t.token == EPS for t in tokens], dtype=bool),
        graph=graph,
        next_support=next_support,  # type: ignore[arg-type]
    )
