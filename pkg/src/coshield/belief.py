"""Belief supports with observable resource levels.

Supports are int bitmasks over state indices (bit ``s`` set iff ``s`` is a
member); see :func:`coshield.model.members` and :func:`coshield.model.mask_of`.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import BOT, CoPomdp, mask_of, members, resup


class ImpossibleObservation(ValueError):
    """An observation/level pair that no member of the support can produce."""


@dataclass(frozen=True)
class BeliefNode:
    support: int
    level: int

    def states(self) -> list[int]:
        return members(self.support)


def initial_support(model: CoPomdp, o0: int) -> int:
    init = mask_of(s for s, _ in model.init_distr)
    support = init & model.emitters[o0]
    if not support:
        raise ImpossibleObservation(f"observation {o0} cannot be emitted by any initial state")
    return support


def conforms(s: int, prev_level: int, a: int, next_level: int, model: CoPomdp) -> bool:
    """Whether ``s`` explains moving from ``prev_level`` to ``next_level`` under ``a``."""
    if prev_level == BOT:
        return True
    base = model.capacity if s in model.reloads else prev_level
    c = model.cons[s][a]
    if next_level == BOT:
        return c > base
    return next_level == base - c


def update(node: BeliefNode, a: int, o: int, next_level: int, model: CoPomdp) -> BeliefNode:
    parts = model.partitions
    out = 0
    for s in members(node.support):
        if conforms(s, node.level, a, next_level, model):
            out |= parts[s][a].get(o, 0)
    if not out:
        raise ImpossibleObservation(
            f"no state of {members(node.support)} explains action {a}, observation {o}, level {next_level}"
        )
    assert node.level == BOT or any(
        resup(node.level, s, a, model) == next_level for s in members(node.support)
    )
    return BeliefNode(out, next_level)


def successor_supports(model: CoPomdp, support: int, a: int) -> dict[int, int]:
    """Map each possible next observation to the next support.

    Assumes a consistent model and a non-exhausted level, so every member of
    ``support`` conforms and levels play no role.
    """
    parts = model.partitions
    combined: dict[int, int] = {}
    for s in members(support):
        for o, m in parts[s][a].items():
            combined[o] = combined.get(o, 0) | m
    return combined


def bsucc(support: int, a: int, s: int, model: CoPomdp) -> set[int]:
    """Supports reachable from ``support`` under ``a`` when the true state is ``s``."""
    combined = successor_supports(model, support, a)
    return {combined[o] for o in model.partitions[s][a]}


def bsucc_all(support: int, a: int, model: CoPomdp) -> set[int]:
    return set(successor_supports(model, support, a).values())
