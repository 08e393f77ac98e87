import json

import numpy as np
import pytest

import pushpull as pp
from pushpull import cli, harness
from pushpull.harness import (
    ConfigError,
    bundled_config_path,
    canonical_json,
    config_hash,
    load_config,
)

QUICK_CONFIG = """
[graph]
generator = "random"
n = 4
m = 8
seed = 2

[objective]
type = "quadratic"
p = 1
seed = 5

[algorithm]
family = "pushpull"
variant = "standard"
stepsize = 0.1
budget = 400
tol = 1e-14

[output]
directory = "{out}"
"""


def write_quick_config(tmp_path, **overrides):
    text = QUICK_CONFIG.format(out=tmp_path / "out")
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    cfg = load_config(path)
    for dotted, value in overrides.items():
        section, key = dotted.split(".")
        cfg[section][key] = value
    return cfg


class TestConfig:
    def test_bundled_configs_parse_and_validate(self):
        for name in ("static_12x24", "timevarying_half", "leader_follower", "gossip_12x24"):
            cfg = load_config(name)
            assert cfg["graph"]["n"] == 12

    def test_round_trips_bit_identically(self):
        cfg = load_config("static_12x24")
        assert json.loads(canonical_json(cfg)) == cfg
        assert config_hash(cfg) == config_hash(json.loads(canonical_json(cfg)))

    def test_missing_section_names_key(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[graph]\nn = 4\nm = 8\nseed = 1\n")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert err.value.key == "objective"

    def test_bad_edge_count_names_key(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            '[graph]\nn = 4\nm = 2\nseed = 1\n[objective]\ntype = "huber"\np = 2\n'
            'seed = 1\n[algorithm]\nfamily = "pushpull"\nbudget = 10\n'
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert err.value.key == "graph.m"

    def test_unknown_family_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            '[graph]\nn = 4\nm = 8\nseed = 1\n[objective]\ntype = "huber"\np = 2\n'
            'seed = 1\n[algorithm]\nfamily = "sgd"\nbudget = 10\n'
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert err.value.key == "algorithm.family"

    def test_gossip_requires_gamma(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            '[graph]\nn = 4\nm = 8\nseed = 1\n[objective]\ntype = "huber"\np = 2\n'
            'seed = 1\n[algorithm]\nfamily = "gossip"\nvariant = "single"\nbudget = 10\n'
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert err.value.key == "algorithm.gamma"


class TestRunExperiment:
    def test_quick_run_artifacts(self, tmp_path):
        cfg = write_quick_config(tmp_path)
        out = tmp_path / "out"
        summary = harness.run_experiment(cfg, out)
        assert (out / "trace.csv").exists()
        assert (out / "summary.json").exists()
        assert (out / "validation.txt").exists()
        assert summary["status"] == "converged"
        assert summary["config_hash"] == config_hash(cfg)

    def test_auto_stepsize_picks_nondiverging(self, tmp_path):
        cfg = write_quick_config(tmp_path, **{"algorithm.stepsize": "auto"})
        summary = harness.run_experiment(cfg, tmp_path / "out")
        alpha = summary["stepsizes"][0]
        assert alpha > 0
        assert summary["final_residual"] <= 1e-12

    def test_certified_stepsize_policy(self, tmp_path):
        cfg = write_quick_config(
            tmp_path, **{"algorithm.stepsize": "certified", "algorithm.certify": True}
        )
        out = tmp_path / "out"
        summary = harness.run_experiment(cfg, out)
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["rho"] < 1.0
        assert summary["certificate_rho"] < 1.0
        assert cert["provenance"]["config_hash"] == summary["config_hash"]

    def test_gossip_run_artifacts(self, tmp_path):
        cfg = write_quick_config(
            tmp_path,
            **{
                "algorithm.family": "gossip",
                "algorithm.variant": "single",
                "algorithm.gamma": 0.4,
                "algorithm.stepsize": 0.2,
                "algorithm.budget": 600,
                "algorithm.seeds": [0, 1],
            },
        )
        out = tmp_path / "out"
        cfg["output"]["write_events"] = True
        summary = harness.run_experiment(cfg, out)
        assert (out / "trace_seed0.csv").exists()
        assert (out / "trace_seed1.csv").exists()
        assert (out / "mean_square.csv").exists()
        assert (out / "events_seed0.csv").exists()
        assert summary["mode"] == "single"

    def test_trace_bytes_reproducible(self, tmp_path):
        cfg = write_quick_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        harness.run_experiment(cfg, a)
        harness.run_experiment(cfg, b)
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        cfg = write_quick_config(tmp_path)
        target = tmp_path / "elsewhere"
        monkeypatch.setenv(harness.OUTPUT_DIR_ENV, str(target))
        harness.run_experiment(cfg)
        assert (target / "trace.csv").exists()


class TestCertifyExperiment:
    def test_pushpull_certificate_with_comparison(self, tmp_path):
        cfg = write_quick_config(tmp_path, **{"algorithm.stepsize": "certified"})
        out = tmp_path / "out"
        harness.run_experiment(cfg, out)
        payload = harness.certify_experiment(cfg, out)
        assert payload["rho"] < 1.0
        comp = payload["comparison"]
        assert comp["observed_le_predicted_plus_margin"]

    def test_gossip_gamma_too_large_raises(self, tmp_path):
        cfg = write_quick_config(
            tmp_path,
            **{
                "algorithm.family": "gossip",
                "algorithm.variant": "single",
                "algorithm.gamma": 0.6,
                "algorithm.stepsize": 0.1,
            },
        )
        with pytest.raises(pp.CertificationError):
            harness.certify_experiment(cfg, tmp_path / "out")


class TestCli:
    def test_gen_graph_round_trip(self, tmp_path, capsys):
        out = tmp_path / "g.txt"
        code = cli.main(["gen-graph", "--n", "8", "--m", "18", "--seed", "4", "--out", str(out)])
        assert code == 0
        g = pp.Digraph.from_edges(8, [])
        from pushpull.digraph import read_edge_list

        g = read_edge_list(out)
        assert pp.is_strongly_connected(g) and len(g.edges) == 18

    def test_validate_graph_file(self, tmp_path, capsys):
        from pushpull.digraph import write_edge_list

        ring = pp.Digraph.from_edges(3, [(1, 2), (2, 3), (3, 1)])
        path = tmp_path / "ring.txt"
        write_edge_list(ring, path)
        code = cli.main(["validate", "--graph", str(path)])
        captured = capsys.readouterr().out
        assert code == 0
        assert "[PASS]" in captured and "rho_R" in captured

    def test_validate_star_pair_prints_common_root(self, tmp_path, capsys):
        from pushpull.digraph import write_edge_list

        pull = pp.Digraph.from_edges(4, [(1, 2), (1, 3), (1, 4)])
        pull_path, push_path = tmp_path / "pull.txt", tmp_path / "push.txt"
        write_edge_list(pull, pull_path)
        write_edge_list(pull.reverse(), push_path)
        code = cli.main(
            ["validate", "--graph", str(pull_path), "--push-graph", str(push_path)]
        )
        captured = capsys.readouterr().out
        assert code == 0
        assert "common=[1]" in captured

    def test_validate_disconnected_graph_fails(self, tmp_path, capsys):
        from pushpull.digraph import write_edge_list

        g = pp.Digraph.from_edges(3, [(1, 2)])
        path = tmp_path / "g.txt"
        write_edge_list(g, path)
        code = cli.main(["validate", "--graph", str(path)])
        captured = capsys.readouterr().out
        assert code == 2
        assert "[FAIL] spanning-tree roots" in captured

    def test_malformed_config_exit_code_and_json(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text(
            '[graph]\nn = 4\nm = 99\nseed = 1\n[objective]\ntype = "huber"\np = 2\n'
            'seed = 1\n[algorithm]\nfamily = "pushpull"\nbudget = 10\n'
        )
        code = cli.main(["run", "--config", str(path)])
        captured = capsys.readouterr().out
        assert code == 2
        payload = json.loads(captured)
        assert payload["error"]["code"] == 2
        assert payload["error"]["key"] == "graph.m"

    def test_run_and_fit_rate(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(QUICK_CONFIG.format(out=tmp_path / "out"))
        code = cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["status"] == "converged"
        code = cli.main(
            ["fit-rate", "--trace", str(tmp_path / "out" / "trace.csv"), "--amplitude"]
        )
        assert code == 0
        fit = json.loads(capsys.readouterr().out)
        assert 0 < fit["rate"] < 1

    def test_certify_gossip_gamma_too_large_exit_3(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(
            QUICK_CONFIG.format(out=tmp_path / "out").replace(
                'family = "pushpull"', 'family = "gossip"\ngamma = 0.6'
            ).replace('variant = "standard"', 'variant = "single"')
        )
        code = cli.main(["certify", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 3
        payload = json.loads(capsys.readouterr().out)
        assert payload["error"]["code"] == 3


def test_validation_failure_blocks_run(tmp_path):
    # Zero stepsizes violate the positive-root-stepsize requirement.
    cfg = write_quick_config(tmp_path, **{"algorithm.stepsize": 0.0})
    with pytest.raises(ConfigError):
        harness.run_experiment(cfg, tmp_path / "out")


def test_bundled_static_config_meets_target(tmp_path):
    cfg = load_config("static_12x24")
    summary = harness.run_experiment(cfg, tmp_path / "out")
    assert summary["status"] == "converged"
    assert summary["final_residual"] <= 1e-8
    assert summary["iterations"] <= 10_000


def test_bundled_configs_validate_via_cli(capsys):
    for name in ("static_12x24", "timevarying_half", "leader_follower", "gossip_12x24"):
        assert cli.main(["validate", "--config", name]) == 0
        capsys.readouterr()
