"""Benchmark model generators: resource-constrained Tiger, UUV gridworld, and a small trap example."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib import resources

from .model import CoPomdp, load_model, validate, ModelError
from .consistency import is_consistent


@dataclass(frozen=True)
class TigerParams:
    p_correct: float = 0.85
    p_switch: float = 0.2
    capacity: int = 10
    listen_cost: float = 10.0
    tiger_cost: float = 5000.0
    treasure_cost: float = -500.0

    def __post_init__(self):
        if not (0 < self.p_correct <= 1 and 0 <= self.p_switch < 1):
            raise ValueError("probabilities out of range")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")


TIGER_SIMPLE = TigerParams()
TIGER_FUZZY = TigerParams(p_correct=0.6)

TIGER_STATES = ("init-L", "init-R", "tiger-L", "tiger-R", "reload-L", "reload-R", "treasure", "eaten")
TIGER_OBS = ("start", "hear-L", "hear-R", "recharged", "treasure", "eaten")
TIGER_ACTIONS = ("listen", "open-L", "open-R", "reload")


def build_tiger(params: TigerParams = TIGER_SIMPLE) -> CoPomdp:
    """Tiger with a battery.

    Each round cycles listen -> decide -> reload, with ``X`` the tiger's side:
    in ``init-X`` every action listens; in ``tiger-X`` the agent has heard a
    noisy hint and may listen again, open a door (free of consumption, ends
    in ``treasure`` or ``eaten``) or walk to the station ``reload-X``. Listening
    and walking cost one unit. Leaving the station starts a new round and the
    tiger swaps sides with ``p_switch``.
    """
    p = params
    INIT, TIG, REL, WIN, LOSE = (0, 1), (2, 3), (4, 5), 6, 7
    trans, cons, cost = [], [], []
    for s in range(8):
        t_row, c_row, k_row = [], [], []
        for a in range(4):
            if s in (WIN, LOSE):
                t_row.append([(s, 1.0)])
                c_row.append(0)
                k_row.append(0.0)
                continue
            side = s % 2  # 0: tiger behind the left door
            if s in REL:
                t_row.append([(INIT[side], 1 - p.p_switch), (INIT[1 - side], p.p_switch)])
                c_row.append(0)
                k_row.append(p.listen_cost)
            elif a == 0 or s in INIT:
                t_row.append([(TIG[side], 1.0)])
                c_row.append(1)
                k_row.append(p.listen_cost)
            elif a == 3:
                t_row.append([(REL[side], 1.0)])
                c_row.append(1)
                k_row.append(p.listen_cost)
            else:
                opened = a - 1  # 0: left door
                eaten = opened == side
                t_row.append([(LOSE if eaten else WIN, 1.0)])
                c_row.append(0)
                k_row.append(p.tiger_cost if eaten else p.treasure_cost)
        trans.append(t_row)
        cons.append(c_row)
        cost.append(k_row)
    obs = [
        [(0, 1.0)],
        [(0, 1.0)],
        [(1, p.p_correct), (2, 1 - p.p_correct)],
        [(2, p.p_correct), (1, 1 - p.p_correct)],
        [(3, 1.0)],
        [(3, 1.0)],
        [(4, 1.0)],
        [(5, 1.0)],
    ]
    model = CoPomdp.build(
        states=TIGER_STATES,
        actions=TIGER_ACTIONS,
        observations=TIGER_OBS,
        transitions=trans,
        obs_fn=[[(o, q) for o, q in d if q > 0] for d in obs],
        cons=cons,
        reloads=REL,
        goals=(WIN, LOSE),
        capacity=p.capacity,
        cost=cost,
        init_distr=[(0, 0.5), (1, 0.5)],
        init_level=p.capacity,
    )
    return _checked(model)


UUV_CAPACITY = {8: 12, 12: 16, 16: 16, 20: 20}

# (row, col) offsets; directions in the order N, E, S, W
_DIRS = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class UuvParams:
    size: int = 8
    capacity: int | None = None
    strong_cons: int = 2
    weak_cons: int = 1
    step_cost: float = 1.0
    goal_cost: float = -1000.0
    p_fwd: float = 0.5
    start: tuple[int, int] = (0, 0)
    reloads: tuple[tuple[int, int], ...] | None = None
    goals: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.size < 4:
            raise ValueError("grid size must be >= 4")
        if not 0 < self.p_fwd <= 1:
            raise ValueError("p_fwd must lie in (0, 1]")
        for cell in (self.start, *self.reload_cells, *self.goal_cells):
            if not all(0 <= x < self.size for x in cell):
                raise ValueError(f"cell {cell} outside the {self.size}x{self.size} grid")

    @property
    def cap(self) -> int:
        if self.capacity is not None:
            return self.capacity
        return UUV_CAPACITY.get(self.size, self.size)

    @property
    def reload_cells(self) -> tuple[tuple[int, int], ...]:
        if self.reloads is not None:
            return tuple(tuple(c) for c in self.reloads)
        q, h = self.size // 4, 3 * self.size // 4
        return ((q, q), (q, h), (h, q), (h, h))

    @property
    def goal_cells(self) -> tuple[tuple[int, int], ...]:
        if self.goals is not None:
            return tuple(tuple(c) for c in self.goals)
        return ((self.size - 1, self.size - 1),)


UUV_ACTIONS = tuple(f"{kind}-{d}" for kind in ("strong", "weak") for d in "NESW")


def build_uuv(params: UuvParams = UuvParams()) -> CoPomdp:
    """Gridworld UUV with strong (exact) and weak (drifting) moves and a noisy position sensor.

    State and observation ids are both ``row * size + col``. Reload and goal
    cells report their true position; any other cell reports a uniformly
    drawn cell of its von Neumann neighbourhood that is neither a reload nor a
    goal, which keeps the special cells observable.
    """
    n = params.size
    cell = lambda r, c: r * n + c  # noqa: E731
    inside = lambda r, c: 0 <= r < n and 0 <= c < n  # noqa: E731
    reloads = {cell(*c) for c in params.reload_cells}
    goals = {cell(*c) for c in params.goal_cells}
    special = reloads | goals

    def move(r, c, d):
        dr, dc = _DIRS[d]
        return (r + dr, c + dc) if inside(r + dr, c + dc) else (r, c)

    trans, cons, cost, obs = [], [], [], []
    for r in range(n):
        for c in range(n):
            s = cell(r, c)
            t_row, c_row = [], []
            for a in range(8):
                if s in goals:
                    t_row.append({s: 1.0})
                    c_row.append(0)
                    continue
                d = a % 4
                if a < 4:
                    t_row.append({cell(*move(r, c, d)): 1.0})
                    c_row.append(params.strong_cons)
                    continue
                outcomes = [(d, params.p_fwd), ((d + 1) % 4, (1 - params.p_fwd) / 2), ((d + 3) % 4, (1 - params.p_fwd) / 2)]
                dist: dict[int, float] = {}
                for dd, q in outcomes:
                    dr, dc = _DIRS[dd]
                    if q > 0 and inside(r + dr, c + dc):
                        t = cell(r + dr, c + dc)
                        dist[t] = dist.get(t, 0.0) + q
                total = sum(dist.values())
                if total == 0:
                    dist, total = {s: 1.0}, 1.0
                t_row.append({t: q / total for t, q in dist.items()})
                c_row.append(params.weak_cons)
            trans.append(t_row)
            cons.append(c_row)
            cost.append([0.0 if s in goals else params.step_cost] * 8)
            if s in special:
                obs.append({s: 1.0})
            else:
                hood = [(r, c)] + [(r + dr, c + dc) for dr, dc in _DIRS]
                seen = [cell(*x) for x in hood if inside(*x) and cell(*x) not in special]
                obs.append({o: 1.0 / len(seen) for o in seen})
    names = [f"({r},{c})" for r in range(n) for c in range(n)]
    start = cell(*params.start)
    entry = [params.goal_cost if s in goals else 0.0 for s in range(n * n)]
    model = CoPomdp.build(
        states=names,
        actions=UUV_ACTIONS,
        observations=names,
        transitions=trans,
        obs_fn=obs,
        cons=cons,
        reloads=reloads - goals,
        goals=goals,
        capacity=params.cap,
        cost=cost,
        init_distr=[(start, 1.0)],
        init_level=params.cap,
        entry_cost=entry,
    )
    return _checked(model)


def trap_model() -> CoPomdp:
    """Six-state example where every goal route passes an indistinguishable trap.

    From ``s`` the agent lands in ``p`` or ``q`` (same observation). One
    action leads from ``p`` to ``r`` and from ``q`` to ``t``, the other swaps
    them; ``r`` and ``t`` look alike, ``r`` may reach the goal ``g`` but ``t``
    loops forever. Both ``r`` and ``t`` are reloads.
    """
    return load_model(resources.files("coshield.data") / "trap.json")


def _checked(model: CoPomdp) -> CoPomdp:
    bad = validate(model)
    if bad:
        raise ModelError("generated model is invalid", bad)
    assert is_consistent(model), "benchmark generators must produce consistent models"
    return model


BENCHMARKS = ("tiger-simple", "tiger-fuzzy", "uuv", "trap")


def build_benchmark(name: str, size: int = 8, **overrides) -> CoPomdp:
    if name == "tiger-simple":
        return build_tiger(TigerParams(**overrides))
    if name == "tiger-fuzzy":
        return build_tiger(TigerParams(**{"p_correct": 0.6, **overrides}))
    if name == "uuv":
        return build_uuv(UuvParams(size=size, **overrides))
    if name == "trap":
        return trap_model()
    raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")


def params_dict(params) -> dict:
    return asdict(params)
