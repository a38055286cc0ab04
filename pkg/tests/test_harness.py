import csv
import json

import pytest

from coshield.cli import main
from coshield.harness import (
    ExperimentConfig,
    InfeasibleModel,
    SummaryRow,
    compare,
    episode_seed,
    format_compare,
    run_experiment,
)
from coshield.model import CoPomdp, save_model
from coshield.pomcp import PlannerConfig

from conftest import chain_model

FAST = PlannerConfig(simulations=20, horizon=40)


def _row(**kw):
    base = dict(benchmark="x", mode="shielded", states=2, observations=2, episodes=10, survival=100.0,
                hit=90.0, cost_mean=5.0, cost_std=1.0, time_mean=0.1, time_std=0.0, shield_time=0.1)
    base.update(kw)
    return SummaryRow(**base)


def test_episode_seeds_distinct():
    seeds = [episode_seed(7, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert episode_seed(7, 3) == episode_seed(7, 3)


def test_config_checks():
    with pytest.raises(ValueError):
        ExperimentConfig(episodes=0)
    with pytest.raises(ValueError):
        ExperimentConfig(mode="lucky")
    with pytest.raises(ValueError):
        ExperimentConfig(benchmark=None)
    assert ExperimentConfig(benchmark="uuv", size=12).planner.exploration == 50.0
    assert ExperimentConfig(benchmark="uuv", size=12).label == "uuv-12x12"


def test_compare_identical_rows():
    r = _row()
    assert compare(r, r) == {"survival": 0.0, "hit": 0.0, "cost": 0.0}
    assert "Δsurvival=+0.00" in format_compare(compare(r, r))


def test_compare_deltas():
    d = compare(_row(), _row(mode="unshielded", survival=8.0, hit=8.0, cost_mean=900.0))
    assert d == {"survival": 92.0, "hit": 82.0, "cost": -895.0}


def test_zero_cost_model(tmp_path):
    m = chain_model((1, 1), capacity=3)
    m = CoPomdp.build(
        states=m.state_names, actions=m.action_names, observations=m.obs_names,
        transitions=m.transitions, obs_fn=m.obs_fn, cons=m.cons, reloads=(), goals=m.goals,
        capacity=3, cost=[[0.0]] * 3,
    )
    path = tmp_path / "free.json"
    save_model(m, path)
    for mode in ("shielded", "unshielded"):
        res = run_experiment(ExperimentConfig(benchmark=None, model_path=str(path), planner=FAST,
                                              mode=mode, episodes=5))
        assert res.row.cost_mean == 0.0
        assert res.row.hit == 100.0


def test_infeasible_model_raises():
    with pytest.raises(InfeasibleModel, match="no action is enabled"):
        run_experiment(ExperimentConfig(benchmark="trap", planner=FAST, episodes=1))


def test_outputs_deterministic(tmp_path):
    texts = []
    for run in ("a", "b"):
        out = tmp_path / run
        run_experiment(ExperimentConfig(benchmark="tiger-simple", planner=FAST, episodes=6, seed=3,
                                        out_dir=str(out)))
        texts.append((out / "episodes.jsonl").read_bytes())
        assert (out / "shield.json").exists()
        with open(out / "summary.csv") as f:
            row = next(csv.DictReader(f))
        assert float(row["survival"]) == 100.0
    assert texts[0] == texts[1]
    lines = texts[0].decode().splitlines()
    assert [json.loads(x)["episode"] for x in lines] == list(range(6))


def test_workers_match_serial():
    cfg = dict(benchmark="tiger-simple", planner=FAST, episodes=6, seed=1)
    serial = run_experiment(ExperimentConfig(**cfg))
    parallel = run_experiment(ExperimentConfig(workers=2, **cfg))
    assert [e.record() for e in serial.episodes] == [e.record() for e in parallel.episodes]


def test_inconsistent_model_transformed(tmp_path):
    from test_consistency import inconsistent_pair

    path = tmp_path / "pair.json"
    save_model(inconsistent_pair(), path)
    res = run_experiment(ExperimentConfig(benchmark=None, model_path=str(path), planner=FAST, episodes=4))
    assert res.model.n_states > 3
    assert res.row.states == 3
    assert res.row.survival == 100.0 and res.row.hit == 100.0


# -- command line ----------------------------------------------------------


def test_cli_gen_shield_plan(tmp_path, capsys):
    model = tmp_path / "tiger.json"
    shield = tmp_path / "tiger.shield.json"
    cfg = tmp_path / "planner.json"
    cfg.write_text(json.dumps({"simulations": 20, "horizon": 30}))
    assert main(["gen", "--benchmark", "tiger", "--out", str(model)]) == 0
    assert "8 states, 6 observations" in capsys.readouterr().out
    assert main(["shield", "--model", str(model), "--out", str(shield)]) == 0
    assert "feasible=True" in capsys.readouterr().out
    assert main(["plan", "--model", str(model), "--shield", str(shield), "--episodes", "3",
                 "--config", str(cfg)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    assert json.loads(lines[-1])["summary"]["survival"] == 100.0


def test_cli_gen_uuv_params(tmp_path, capsys):
    out = tmp_path / "uuv.json"
    assert main(["gen", "--benchmark", "uuv", "--size", "12", "--params", '{"p_fwd": 0.7}', "--out", str(out)]) == 0
    assert "144 states" in capsys.readouterr().out


def test_cli_shield_infeasible(tmp_path, capsys):
    model = tmp_path / "trap.json"
    main(["gen", "--benchmark", "trap", "--out", str(model)])
    assert main(["shield", "--model", str(model), "--out", str(tmp_path / "s.json")]) == 2
    out = capsys.readouterr().out
    assert "feasible=False" in out and "inf" in out


def test_cli_fingerprint_error(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["gen", "--benchmark", "tiger", "--out", str(a)])
    main(["gen", "--benchmark", "tiger-fuzzy", "--out", str(b)])
    main(["shield", "--model", str(a), "--out", str(tmp_path / "a.shield.json")])
    capsys.readouterr()
    assert main(["plan", "--model", str(b), "--shield", str(tmp_path / "a.shield.json")]) == 1
    assert "different model" in capsys.readouterr().err


def test_cli_bench(tmp_path, capsys):
    assert main(["bench", "--benchmark", "tiger-simple", "--episodes", "3", "--simulations", "10",
                 "--horizon", "30", "--out", str(tmp_path / "run")]) == 0
    assert "tiger-simple" in capsys.readouterr().out
    assert (tmp_path / "run" / "episodes.jsonl").exists()
