"""Exact succinct shields: prune the token CoMDP, extract per-support thresholds."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .belief import initial_support
from .comdp import pos_reach_levels, safe_levels
from .consistency import is_consistent
from .model import BOT, INF, CoPomdp, fmt_level, mask_of, members, resupinv
from .token_mdp import DEFAULT_MAX_STATES, TokenComdp, build_token_comdp


class UnknownSupport(KeyError):
    """Queried a belief support outside the shielded fragment."""


class ShieldFormatError(ValueError):
    pass


class FingerprintMismatch(ValueError):
    pass


@dataclass
class PrunedTokenComdp:
    token: TokenComdp
    reloads: np.ndarray
    tlevpr: np.ndarray
    passes: int

    def support_level(self, b: int) -> int:
        """Common positive-reach level of the support's real-guess tokens."""
        mask = self.token.supports[b]
        return int(self.tlevpr[self.token.token_index[(mask, members(mask)[0])]])


def prune(token: TokenComdp) -> PrunedTokenComdp:
    """Demote reloads whose support admits no safe positive-goal policy, to a fixed point.

    Only real-guess tokens trigger demotion: an invalidated guess never counts
    as reaching a goal, so its positive-reach level is always infinite.
    """
    g = token.graph
    rel = g.reloads.copy()
    passes = 0
    while True:
        passes += 1
        safe, surviving = safe_levels(g, rel)
        pr = pos_reach_levels(g, safe, surviving)
        trigger = rel & ~token.is_eps & (pr >= INF)
        if not trigger.any():
            return PrunedTokenComdp(token, rel, pr, passes)
        rel &= ~np.isin(token.support_of, np.unique(token.support_of[trigger]))


@dataclass
class Shield:
    """Per-support, per-action threshold table; an action is enabled iff level >= tau."""

    supports: list[int]
    tau: np.ndarray
    capacity: int
    fingerprint: str = ""
    index: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {m: i for i, m in enumerate(self.supports)}

    @property
    def n_actions(self) -> int:
        return self.tau.shape[1]

    def row(self, support: int) -> np.ndarray:
        try:
            return self.tau[self.index[support]]
        except KeyError:
            raise UnknownSupport(f"support {members(support)} is outside the shielded fragment") from None

    def threshold(self, support: int, a: int) -> int:
        return int(self.row(support)[a])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Shield):
            return NotImplemented
        return (
            self.capacity == other.capacity
            and self.fingerprint == other.fingerprint
            and self.index.keys() == other.index.keys()
            and all(np.array_equal(self.row(m), other.row(m)) for m in self.supports)
        )


def extract(pruned: PrunedTokenComdp, model: CoPomdp, fingerprint: str = "") -> Shield:
    token = pruned.token
    nb, na = len(token.supports), model.n_actions
    level = np.array([pruned.support_level(b) for b in range(nb)], dtype=np.int64)
    tau = np.zeros((nb, na), dtype=np.int64)
    for b, mask in enumerate(token.supports):
        states = members(mask)
        for a in range(na):
            table = token.next_support[b][a]
            worst = 0
            for s in states:
                smax = max(level[table[o]] for o in model.partitions[s][a])
                worst = max(worst, resupinv(int(smax), s, a, model))
            tau[b, a] = worst
    return Shield(list(token.supports), tau, model.capacity, fingerprint, dict(token.support_index))


def enabled(shield: Shield, support: int, level: int, a: int) -> bool:
    tau = shield.threshold(support, a)
    return level != BOT and level >= tau


def allowed_actions(shield: Shield, support: int, level: int) -> list[int]:
    row = shield.row(support)
    if level == BOT:
        return []
    return [a for a in range(len(row)) if level >= row[a]]


def initial_supports(model: CoPomdp) -> dict[int, int]:
    """Initial observation -> initial support, over observations with positive probability."""
    obs = set()
    for s, _ in model.init_distr:
        obs.update(model.obs_support[s])
    return {o: initial_support(model, o) for o in sorted(obs)}


def feasibility(shield: Shield, model: CoPomdp) -> bool:
    return all(allowed_actions(shield, b, model.init_level) for b in initial_supports(model).values())


def infeasibility_report(shield: Shield, model: CoPomdp) -> str:
    lines = []
    for o, b in initial_supports(model).items():
        taus = ", ".join(f"{model.action_names[a]}={fmt_level(int(t))}" for a, t in enumerate(shield.row(b)))
        names = [model.state_names[s] for s in members(b)]
        lines.append(f"obs {model.obs_names[o]}: support {names} at level {model.init_level}: {taus}")
    return "\n".join(lines)


@dataclass
class SynthesisResult:
    shield: Shield
    pruned: PrunedTokenComdp
    seconds: float

    @property
    def token(self) -> TokenComdp:
        return self.pruned.token


def synthesize(model: CoPomdp, roots=None, max_states: int = DEFAULT_MAX_STATES) -> SynthesisResult:
    """Build the token CoMDP from the initial supports, prune it and extract the shield."""
    if not is_consistent(model):
        raise ValueError("shield synthesis requires a consistent model; run make_consistent first")
    start = time.perf_counter()
    if roots is None:
        roots = sorted(set(initial_supports(model).values()))
    token = build_token_comdp(model, roots, max_states=max_states)
    pruned = prune(token)
    shield = extract(pruned, model, model.fingerprint())
    return SynthesisResult(shield, pruned, time.perf_counter() - start)


# -- persistence -----------------------------------------------------------


def shield_to_dict(shield: Shield) -> dict:
    rows = []
    for mask in sorted(shield.supports, key=lambda m: members(m)):
        st = members(mask)
        for a, t in enumerate(shield.row(mask)):
            rows.append({"support": st, "action": a, "tau": "inf" if t >= INF else int(t)})
    return {"fingerprint": shield.fingerprint, "capacity": shield.capacity, "thresholds": rows}


def shield_from_dict(d: dict) -> Shield:
    try:
        cap = int(d["capacity"])
        fp = str(d["fingerprint"])
        entries = d["thresholds"]
        table: dict[int, dict[int, int]] = {}
        for e in entries:
            mask = mask_of(int(s) for s in e["support"])
            tau = e["tau"]
            if tau == "inf":
                tau = INF
            elif not isinstance(tau, int):
                raise ShieldFormatError(f"bad threshold {tau!r}")
            table.setdefault(mask, {})[int(e["action"])] = tau
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ShieldFormatError):
            raise
        raise ShieldFormatError(f"malformed shield document: {e}") from e
    if not table:
        raise ShieldFormatError("shield has no thresholds")
    na = 1 + max(a for row in table.values() for a in row)
    supports = list(table)
    tau = np.zeros((len(supports), na), dtype=np.int64)
    for i, m in enumerate(supports):
        if sorted(table[m]) != list(range(na)):
            raise ShieldFormatError(f"support {members(m)} lacks thresholds for some actions")
        for a, t in table[m].items():
            tau[i, a] = t
    return Shield(supports, tau, cap, fp)


def save_shield(shield: Shield, path) -> None:
    with open(path, "w") as f:
        json.dump(shield_to_dict(shield), f)
        f.write("\n")


def load_shield(path, model: CoPomdp | None = None) -> Shield:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ShieldFormatError(f"{path}: not valid JSON ({e})") from e
    shield = shield_from_dict(d)
    if model is not None and shield.fingerprint != model.fingerprint():
        raise FingerprintMismatch(f"{path} was synthesised for a different model")
    return shield
