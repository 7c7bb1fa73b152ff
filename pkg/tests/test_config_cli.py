import json
import os

import numpy as np
import pytest
import yaml

from pslmorl.checkpoint import load_checkpoint, read_meta, save_checkpoint
from pslmorl.cli import main, make_run_dir
from pslmorl.config import ConfigError, config_from_dict, load_config
from pslmorl.ddqn import DdqnAgent, DdqnConfig
from pslmorl.nn import flat_vector
from pslmorl.pareto import read_front_csv, write_front_csv
from pslmorl.td3 import Td3Agent, Td3Config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

TINY_FTN = {
    "run": {"algo": "psl-ddqn", "seed": 1, "workers": 2},
    "env": {"name": "ftn", "depth": 2},
    "ddqn": {"total_steps": 120, "eval_interval": 60, "hidden": [8], "hyper_hidden": [8], "batch_size": 4},
    "eval": {"grid": 8},
}
TINY_NAV = {
    "run": {"algo": "psl-td3", "seed": 0, "workers": 2},
    "env": {"name": "pointnav", "episode_limit": 10},
    "td3": {"total_steps": 60, "eval_interval": 30, "critic_hidden": [8], "actor_hidden": [8],
            "hyper_hidden": [8], "batch_size": 4},
}


def write_cfg(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


@pytest.mark.parametrize("name", ["ftn_d5.yaml", "pointnav.yaml", "ra.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(os.path.join(ROOT, "configs", name))
    assert cfg.algo in ("psl-ddqn", "psl-td3", "ra-baseline")


def test_run_settings_flow_into_sections():
    cfg = config_from_dict({"run": {"seed": 9, "workers": 3, "mode": "gen"}})
    assert cfg.ddqn.seed == 9 and cfg.td3.workers == 3 and cfg.ddqn.mode == "gen" and cfg.baseline.seed == 9


@pytest.mark.parametrize("raw,needle", [
    ({"ddqn": {"gama": 0.9}}, "ddqn.gama"),
    ({"run": {"sed": 1}}, "run.sed"),
    ({"optim": {}}, "optim"),
    ({"ddqn": {"gamma": 1.01}}, "gamma"),
    ({"env": {"reward_file": "/nonexistent/leaves.csv"}}, "reward_file"),
    ({"run": {"mode": "both"}}, "run.mode"),
])
def test_config_errors_name_the_problem(raw, needle):
    with pytest.raises(ConfigError, match=needle.replace(".", r"\.")):
        config_from_dict(raw)


def test_invalid_key_exit_code(tmp_path, capsys):
    path = write_cfg(tmp_path, {"ddqn": {"gama": 0.9}})
    assert main(["train", path, "--dry-run"]) == 2
    assert "ddqn.gama" in capsys.readouterr().err


def test_dry_run_prints_resolved_config(tmp_path, capsys):
    path = write_cfg(tmp_path, TINY_FTN)
    assert main(["train", path, "--dry-run", "--seed", "4"]) == 0
    out = yaml.safe_load(capsys.readouterr().out)
    assert out["seed"] == 4 and out["ddqn"]["seed"] == 4 and out["ddqn"]["total_steps"] == 120
    assert not (tmp_path / "runs").exists()


def _train(tmp_path, raw, capsys, *extra):
    path = write_cfg(tmp_path, raw)
    assert main(["train", path, "--out-dir", str(tmp_path / "runs"), *extra]) == 0
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_train_writes_run_artifacts(tmp_path, capsys):
    run = _train(tmp_path, TINY_FTN, capsys)
    for name in ("config.yaml", "log.jsonl", "final.npz", "front.csv", "metrics.json", "manifest.json"):
        assert os.path.isfile(os.path.join(run, name)), name
    assert sorted(os.listdir(os.path.join(run, "checkpoints"))) == [
        "step_000000000.npz", "step_000000060.npz", "step_000000120.npz"]
    man = json.load(open(os.path.join(run, "manifest.json")))
    assert man["status"] == "ok" and man["seed"] == 1 and man["config"]["ddqn"]["total_steps"] == 120
    assert {"started", "finished", "code_version", "metrics"} <= set(man)


def test_runs_never_overwrite(tmp_path, capsys):
    a = _train(tmp_path, TINY_FTN, capsys)
    b = _train(tmp_path, TINY_FTN, capsys)
    assert a != b and os.path.isdir(a) and os.path.isdir(b)


def test_output_root_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PSLMORL_OUTPUT_ROOT", str(tmp_path / "elsewhere"))
    path = write_cfg(tmp_path, TINY_FTN)
    assert main(["train", path]) == 0
    run = capsys.readouterr().out.strip().splitlines()[-1]
    assert run.startswith(str(tmp_path / "elsewhere"))


def test_make_run_dir_suffixes(tmp_path):
    dirs = {make_run_dir(str(tmp_path), 0) for _ in range(3)}
    assert len(dirs) == 3


def test_eval_grid_and_metrics_consistency(tmp_path, capsys):
    run = _train(tmp_path, TINY_NAV, capsys)
    out = tmp_path / "ev"
    assert main(["eval", os.path.join(run, "final.npz"), "--grid", "11", "--out", str(out)]) == 0
    capsys.readouterr()
    values, prefs = read_front_csv(str(out / "eval_front.csv"))
    assert len(values) == 11 and prefs.shape == (11, 2)
    ev = json.load(open(out / "eval_metrics.json"))
    assert ev["evaluated"] == 11
    assert main(["metrics", str(out / "eval_front.csv"), "--ref", "-100", "-100"]) == 0
    # metrics on the emitted CSV, with the same ref, match the eval JSON exactly
    assert main(["eval", os.path.join(run, "final.npz"), "--grid", "11", "--out", str(out),
                 "--ref", "-100", "-100"]) == 0
    capsys.readouterr()
    ev = json.load(open(out / "eval_metrics.json"))
    assert main(["metrics", str(out / "eval_front.csv"), "--ref", "-100", "-100"]) == 0
    got = json.loads(capsys.readouterr().out)
    assert got["hypervolume"] == ev["hypervolume"] and got["sparsity"] == ev["sparsity"]


def test_eval_preference_file(tmp_path, capsys):
    run = _train(tmp_path, TINY_FTN, capsys)
    prefs = tmp_path / "p.txt"
    prefs.write_text("# two preferences\n1 0 0 0 0 0\n0.5,0.5,0,0,0,0\n")
    assert main(["eval", os.path.join(run, "final.npz"), "--preferences", str(prefs),
                 "--out", str(tmp_path / "ev")]) == 0
    assert json.loads(capsys.readouterr().out)["evaluated"] == 2
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert main(["eval", os.path.join(run, "final.npz"), "--preferences", str(empty)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0.5 0.6 0 0 0 0\n")
    assert main(["eval", os.path.join(run, "final.npz"), "--preferences", str(bad)]) == 2


def test_metrics_examples(tmp_path, capsys):
    p = tmp_path / "f.csv"
    write_front_csv(str(p), np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert main(["metrics", str(p), "--ref", "0", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["hypervolume"] == 3.0
    write_front_csv(str(p), np.array([[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]))
    main(["metrics", str(p)])
    assert json.loads(capsys.readouterr().out)["sparsity"] == 2.0
    write_front_csv(str(p), np.array([[1.0, 3.0]]))
    main(["metrics", str(p)])
    assert json.loads(capsys.readouterr().out)["sparsity"] == "N/A"
    assert main(["metrics", str(p), "--ref", "0"]) == 2


def test_front_export_roundtrip(tmp_path, capsys):
    run = _train(tmp_path, TINY_FTN, capsys)
    out = tmp_path / "exported.csv"
    assert main(["front-export", os.path.join(run, "final.npz"), "--out", str(out)]) == 0
    a, pa = read_front_csv(str(out))
    b, pb = read_front_csv(os.path.join(run, "front.csv"))
    assert np.array_equal(a, b) and np.array_equal(pa, pb)


def test_checkpoint_roundtrip_both_algorithms(tmp_path):
    rng = np.random.default_rng(0)
    d = DdqnAgent(2, 2, 6, DdqnConfig(hidden=(4,), hyper_hidden=(4,)), rng)
    t = Td3Agent(5, 2, 2, Td3Config(critic_hidden=(4,), actor_hidden=(4,), hyper_hidden=(4,)), rng)
    for agent in (d, t):
        path = str(tmp_path / "c.npz")
        save_checkpoint(path, agent, 17)
        back, meta, archive = load_checkpoint(path)
        assert meta["step"] == 17 and read_meta(path)["algo"] == meta["algo"] and len(archive) == 0
        w = np.full(agent.m, 1 / agent.m)
        assert np.array_equal(back.policy_params(w), agent.policy_params(w))
        assert np.array_equal(flat_vector(back.theta1), flat_vector(agent.theta1))


def test_verify_rejects_bad_gamma(capsys):
    assert main(["verify", "--gamma", "1.01"]) == 2


def test_verify_small_run(capsys):
    assert main(["verify", "--mdps", "2", "--trials", "5", "--instances", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and rep["bellman"]["max_contraction_ratio"] <= 0.9 + 1e-9
    assert set(rep["gradients"]) == {"mlp", "hyper_chain", "ddqn_loss", "td3_critic", "td3_actor"}


def test_baseline_ra_command(tmp_path, capsys):
    raw = {"run": {"algo": "ra-baseline", "workers": 2}, "env": {"depth": 2},
           "baseline": {"n_weights": 1, "total_steps": 100, "hidden": [8]}}
    out = tmp_path / "ra.csv"
    assert main(["baseline-ra", write_cfg(tmp_path, raw), "--out", str(out)]) == 0
    values, _ = read_front_csv(str(out))
    assert values.shape == (1, 6)
