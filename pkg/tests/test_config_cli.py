from __future__ import annotations

import json
import math

import numpy as np
import pytest

from msk_tap import __version__
from msk_tap.cli import main, run
from msk_tap.config import config_hash, load_config, parse_config
from msk_tap.errors import ConfigError

BASE = {"preset": "bipartite", "model": {"beta_over_beta0": 0.5, "h": 0.3, "n": 8}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(text):
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            rows.append(line.split(","))
    return meta, rows[0], rows[1:]


def test_presets_resolve():
    cfg = parse_config(BASE)
    np.testing.assert_array_equal(cfg.model.delta2, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(cfg.model.lambdas, [0.5, 0.5])
    assert cfg.model.beta == pytest.approx(0.25)
    two = parse_config({"preset": "two-copies", "model": {"beta": 0.1}})
    assert two.model.delta2[0, 1] == 0 and two.model.delta2[0, 0] > 0 and two.model.delta2[1, 1] > 0


@pytest.mark.parametrize(
    "raw, path",
    [
        ({"model": {"lambdas": [0.6, 0.6], "delta2": [[1, 0], [0, 1]], "beta": 0.1}}, "model.lambdas"),
        ({"model": {"lambdas": [0.5, 0.5], "delta2": [[1, 2], [0, 1]], "beta": 0.1}}, "model.delta2"),
        ({"model": {"lambdas": [0.5, 0.5], "delta2": [[1, 0], [0, 1]]}}, "model.beta"),
        ({"preset": "sk", "model": {"beta": -0.1}}, "model.beta"),
        ({"preset": "sk", "model": {"beta": 0.1, "h": -1}}, "model.h"),
        ({"preset": "sk", "model": {"beta": 0.1, "temperature": 3}}, "model.temperature"),
        ({"preset": "sk", "model": {"beta": 0.1}, "extra": 1}, "extra"),
        ({"preset": "sk", "model": {"beta": 0.1}, "params": {"n_list": [4, "x"]}}, "params.n_list[1]"),
        ({"preset": "sk", "model": {"beta": 0.1}, "params": {"chain": {"sweeps": 3}}}, "params.chain.sweeps"),
        ({"preset": "sk", "model": {"beta": 0.1}, "params": {"estimator": "magic"}}, "params.estimator"),
        ({"preset": "sk", "model": {"beta": 0.1}, "seed": -3}, "seed"),
        ({"preset": "nope", "model": {"beta": 0.1}}, "preset"),
        ({"model": {"delta2": [[1]], "beta": 0.1}}, "model.lambdas"),
    ],
)
def test_validation_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert info.value.path == path
    assert str(info.value).startswith(path + ":")


def test_lambda_sum_message():
    with pytest.raises(ConfigError, match="sum to 1"):
        parse_config({"model": {"lambdas": [0.6, 0.6], "delta2": [[1, 0], [0, 1]], "beta": 0.1}})


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_beta_c_row(tmp_path, capsys):
    assert main(["beta-c", "--config", str(write(tmp_path, BASE)), "--seed", "1"]) == 0
    meta, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["beta_c", "alpha", "beta_0", "rho"]
    assert float(rows[0][0]) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert rows[0][1] == "2" and float(rows[0][2]) == pytest.approx(0.5)
    assert meta["seed"] == "1"
    assert meta["config_hash"] == config_hash({**BASE, "seed": 1})
    assert __version__ in next(iter(meta))


def test_solve_q_at_zero_beta(tmp_path, capsys):
    cfg = {"preset": "convex", "model": {"beta": 0.0, "h": 0.3}}
    assert main(["solve-q", "--config", str(write(tmp_path, cfg)), "--seed", "0"]) == 0
    _, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["species", "q"]
    assert [float(r[1]) for r in rows] == [np.tanh(0.3) ** 2] * 2


def test_seed_from_entropy_is_recorded(tmp_path, capsys):
    assert main(["mcmc", "--config", str(write(tmp_path, {**BASE, "params": {"chain": {"n_sweeps": 40}}}))]) == 0
    meta, _, _ = read_csv(capsys.readouterr().out)
    assert 0 <= int(meta["seed"]) < 2**64


@pytest.mark.parametrize("command", ["oracle", "mcmc", "tap-check", "tap-iterate", "cavity-check", "concentration", "sensitivity"])
def test_report_round_trip(tmp_path, command):
    cfg = {**BASE, "params": {"n_disorder": 3, "n_eta": 20, "chain": {"n_sweeps": 100, "burn_in_sweeps": 20}}}
    first = run(command, parse_config(cfg), threads=2)
    second = run(command, parse_config(first.config), threads=1)
    assert first.table.rows == second.table.rows
    assert first.config["seed"] == second.config["seed"]
    assert first.seeds == second.seeds


def test_json_and_csv_outputs(tmp_path):
    out = tmp_path / "res.csv"
    cfg = write(tmp_path, {**BASE, "seed": 5})
    assert main(["tap-check", "--config", str(cfg), "--out", str(out), "--json", "--threads", "1"]) == 0
    report = json.loads((tmp_path / "res.csv.json").read_text())
    assert report["command"] == "tap-check" and report["version"] == __version__
    assert report["seeds"]["seed"] == 5 and report["wall_clock_s"] >= 0
    assert report["config"]["seed"] == 5
    meta, header, rows = read_csv(out.read_text())
    assert header == ["spin", "species", "magnetization", "residual"]
    assert len(rows) == 8


def test_scaling_dry_run(tmp_path, capsys):
    cfg = {**BASE, "params": {"n_list": [64, 128, 256, 512], "n_disorder": 2}}
    assert main(["scaling-study", "--config", str(write(tmp_path, cfg)), "--dry-run", "--seed", "3"]) == 0
    meta, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["n", "draw", "seed"] and len(rows) == 8
    assert meta["dry_run"] == "true"


def test_scaling_study_command(tmp_path, capsys):
    cfg = {"preset": "convex", "model": {"beta": 0.0, "h": 0.3}, "params": {"n_list": [4, 6, 8, 10], "n_disorder": 2, "estimator": "exact"}}
    assert main(["scaling-study", "--config", str(write(tmp_path, cfg)), "--seed", "1"]) == 0
    meta, header, rows = read_csv(capsys.readouterr().out)
    assert meta["slope"] == '"undefined"'
    assert len(rows) == 4


def test_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["beta-c", "--config", str(write(tmp_path, {"model": {"lambdas": [0.6, 0.6], "delta2": [[1, 0], [0, 1]], "beta": 0.1}}))]) != 0
    assert "model.lambdas" in capsys.readouterr().err
    cfg = {**BASE, "params": {"n_list": [16], "n_disorder": 2}}
    assert main(["concentration", "--config", str(write(tmp_path, cfg)), "--seed", "1"]) != 0
    degenerate = {"model": {"lambdas": [1.0], "delta2": [[0.0]], "beta": 0.1}}
    assert main(["beta-c", "--config", str(write(tmp_path, degenerate)), "--seed", "1"]) != 0
    with pytest.raises(SystemExit):
        main(["not-a-command", "--config", "x.json"])
