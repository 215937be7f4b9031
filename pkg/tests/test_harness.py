from __future__ import annotations

import json

import pytest

from ielab.cli import main
from ielab.errors import ConfigError
from ielab.harness import ExperimentConfig, load_config


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        ExperimentConfig({"kind": "det-theorem", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig({"kind": "not-a-kind"})


def test_config_seed_forms(monkeypatch):
    assert ExperimentConfig({"seeds": [3, 5]}).seeds() == [3, 5]
    assert ExperimentConfig({"seeds": {"range": [0, 3]}}).seeds() == [0, 1, 2, 3]
    assert ExperimentConfig({"seeds": 9}).seeds() == [9]
    monkeypatch.setenv("IE_SEED", "77")
    assert ExperimentConfig({}).seeds() == [77]


def test_load_config_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "det-theorem", "mechanism": {"n_phase": 8}}))
    cfg = load_config(str(path), ["mechanism.total_phases=3", "out=somewhere"])
    assert cfg.get("mechanism") == {"n_phase": 8, "total_phases": 3}
    assert cfg.get("out") == "somewhere"


def test_cli_run_det_artifacts_replay(tmp_path, capsys):
    out = tmp_path / "runs"
    args = [
        "run-det", "--seeds", "0..2", "--out", str(out),
        "--override", "mechanism.total_phases=3",
        "--override", "mechanism.n_phase=6",
    ]
    assert main(args) == 0
    first = (out / "run-1" / "game.jsonl").read_bytes()
    manifest = json.loads((out / "run-1" / "manifest.json").read_text())
    assert manifest["seed"] == 1
    # re-run: byte-identical artifact
    assert main(args) == 0
    assert (out / "run-1" / "game.jsonl").read_bytes() == first
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == ("seed,phases_to_coverage,reach_size,"
                          "new_triple_until_coverage,episodes_simulated,log_digest")
    assert len(summary) == 4
    capsys.readouterr()


def test_cli_params(capsys):
    assert main(["params"]) == 0
    text = capsys.readouterr().out
    assert "det.n_phase,7680" in text
    assert "prob.n_phase" in text


def test_cli_params_stoch(capsys):
    assert main(["params", "--override", 'prior={"micro":"stoch1"}',
                 "--override", "rho=0.25"]) == 0
    text = capsys.readouterr().out
    assert "prob.n_phase_theory,70218" in text


def test_cli_verify_hygiene(tmp_path, capsys):
    assert main(["verify", "--suite", "hygiene", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["ok"]
    names = {c["name"] for c in report["checks"]}
    assert "hygiene.counterexample.fabricated_rewards" in names
    capsys.readouterr()


def test_cli_verify_dist_equality(capsys):
    assert main(["verify", "--suite", "dist-equality"]) == 0
    out = capsys.readouterr().out
    assert "PASS dist_equality.phase2" in out
    assert "PASS dist_equality.mutated.phase2" in out


def test_cli_exit_codes(tmp_path, capsys):
    # infra: missing config file
    assert main(["run-det", "--config", str(tmp_path / "nope.json")]) == 1
    # infra: unknown config key
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"zzz": 1}))
    assert main(["run-det", "--config", str(bad)]) == 1
    # assumption violated: a prior with r_min = 0
    prior_doc = {
        "factored": {
            "S": 1, "A": 1, "H": 1,
            "transition_prior": [{"init": [1], "transitions": {}, "weight": 1}],
            "reward_marginals": {"1,1,1": {"support": [0], "probs": [1]}},
        }
    }
    ppath = tmp_path / "prior.json"
    ppath.write_text(json.dumps(prior_doc))
    code = main(["run-det", "--override", f'prior={{"path":"{ppath}"}}'])
    assert code == 2
    capsys.readouterr()


def test_cli_run_prob(tmp_path, capsys):
    out = tmp_path / "prob"
    code = main([
        "run-prob", "--seeds", "0..1", "--out", str(out),
        "--override", 'prior={"micro":"stoch1"}',
        "--override", "rho=0.25",
        "--override", "mechanism.n_lrn=2",
        "--override", "mechanism.total_phases=40",
    ])
    assert code == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == ("seed,phases_to_exploration,phase_cap,"
                                    "reach_size,log_digest")
    assert (out / "run-0" / "game.jsonl").exists()


def test_prior_json_roundtrip(tmp_path, det_prior):
    from ielab.serialize import prior_from_dict, prior_to_dict

    doc = prior_to_dict(det_prior)
    again = prior_from_dict(doc)
    assert again.weights == det_prior.weights
    assert again.atoms[13] == det_prior.atoms[13]


def test_cli_params_bandit_case(tmp_path, capsys):
    """Horizon-1 priors degenerate to the bandit schedule."""
    prior_doc = {
        "factored": {
            "S": 1, "A": 2, "H": 1,
            "transition_prior": [{"init": [1], "transitions": {}, "weight": 1}],
            "reward_marginals": {
                "1,1,1": {"support": [0, 0.8], "probs": [0.5, 0.5]},
                "1,2,1": {"support": [0, 0.8], "probs": [0.5, 0.5]},
            },
        }
    }
    ppath = tmp_path / "bandit.json"
    ppath.write_text(json.dumps(prior_doc))
    assert main(["params", "--override", f'prior={{"path":"{ppath}"}}']) == 0
    text = capsys.readouterr().out
    # r_min = 0.4, eps_pun = 0.2, C = 1/2, SAH = 2: n_phase = ceil(6/(0.4/4)) = 60
    assert "det.n_phase,60" in text


def test_cli_sweep(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--seeds", "0..1", "--out", str(out),
        "--override", "kind=det-theorem",
        "--override", "mechanism.total_phases=2",
        "--override", "mechanism.n_phase=5",
    ])
    assert code == 0
    assert (out / "run-0" / "game.jsonl").exists()
    assert (out / "run-1" / "game.jsonl").exists()
    capsys.readouterr()
