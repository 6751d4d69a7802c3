import csv
import json
import math

import numpy as np
import pytest

from sksfem import cli, experiments
from sksfem.config import ConfigError, RunConfig, format_config, load_config, parse_config_text

FAST = ["--N", "16", "--M", "16", "--T", "0.1"]


def test_empty_file_and_flags(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    cfg = load_config(f, {"N": "32", "M": "128", "nu": "0.5", "L": "2pi", "q": "0.3, 0.6"})
    assert (cfg.N, cfg.M, cfg.nu, cfg.L, cfg.q) == (32, 128, 0.5, 2 * math.pi, (0.3, 0.6))


def test_flags_override_file(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("[space]\nN = 32  # comment\n[scheme]\nM = 64\n")
    assert load_config(f, {"M": "32"}).M == 32
    assert load_config(f).N == 32


@pytest.mark.parametrize("text, key, line", [
    ("N = 16\nbogus = 1\n", "bogus", 2),
    ("N = 16\nN = 32\n", "N", 2),
    ("[space]\nM = 16\n", "M", 2),
    ("\n\nN = sixteen\n", "N", 3),
])
def test_parse_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key and info.value.line == line
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize("text", ["[nowhere]\n", "[space\n", "just words\n"])
def test_parse_rejects_malformed(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("over, key, fragment", [
    ({"M": "100"}, "M", "power of two"),
    ({"r": "3"}, "r", "r >= 4"),
    ({"kind": "convergence-time", "M_ref": "2048"}, "M_ref", "8x"),
    ({"kind": "convergence-space", "N_list": "8, 12, 16"}, "N_list", "nested"),
    ({"q": "0.5, 1.0"}, "q", "q"),
    ({"nu": "-1"}, "nu", "positive"),
    ({"model": "cubic"}, "model", "model"),
])
def test_validation_messages(over, key, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        load_config(None, over)
    assert info.value.key == key


def test_format_config_round_trip():
    cfg = RunConfig(N=48, q=(0.25,), kappa=0.01, L=3.5, dump_matrices=True)
    assert load_config(None, parse_config_text(format_config(cfg))) == cfg


def test_content_hash_changes_with_config():
    assert RunConfig().content_hash() == RunConfig().content_hash()
    assert RunConfig().content_hash() != RunConfig(seed=1).content_hash()


def test_simulate_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--seed", "5", "--out", str(tmp_path / name)] + FAST) == 0
    # manifests differ only in the output directory they record
    for f in ("trajectory.csv", "trajectory.json", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_manifest_reproduces_run(tmp_path):
    out = tmp_path / "first"
    assert cli.main(["simulate", "--seed", "8", "--out", str(out), "--model", "rational"] + FAST) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("version", "config", "config_hash", "seed", "rng_algorithm", "backend", "outputs"):
        assert key in manifest
    assert manifest["config"]["model"] == "rational" and manifest["seed"]["master"] == 8
    again = tmp_path / "again"
    assert cli.main(["simulate", "--config", str(out / "config.txt"), "--out", str(again)]) == 0
    assert (out / "trajectory.csv").read_bytes() == (again / "trajectory.csv").read_bytes()
    assert manifest["outputs"]["trajectory.csv"] == json.loads(
        (again / "manifest.json").read_text())["outputs"]["trajectory.csv"]


def test_simulate_debug_dumps(tmp_path):
    out = tmp_path / "dbg"
    assert cli.main(["simulate", "--out", str(out), "--dump-matrices", "--dump-increments"] + FAST) == 0
    head = (out / "increments.csv").read_text().splitlines()
    assert head[0] == "level,index,value" and len(head) == 1 + 31
    trip = np.loadtxt(out / "mass.txt")
    assert trip.shape == (16 * 7, 3)


def test_convergence_time_rate_table(tmp_path):
    out = tmp_path / "ct"
    args = ["convergence-time", "--out", str(out), "--mc", "2", "--M-list", "8,16,32",
            "--M-ref", "256"] + FAST
    assert cli.main(args) == 0
    with open(out / "rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["quantity", "resolution", "abscissa", "error", "std_error", "slope",
                             "intercept", "residual", "ci_halfwidth"]
    primary = [r for r in rows if r["quantity"] == "sup_l2_2q[q=0.5]"]
    assert len(primary) >= 3 and all(r["slope"] == primary[0]["slope"] for r in primary)
    with open(out / "raw_norms.csv") as fh:
        assert next(csv.reader(fh)) == ["path", "resolution", "sup_l2", "h2"]
    assert "slope" in json.loads((out / "summary.json").read_text())


def test_gronwall_check_summary(tmp_path):
    out = tmp_path / "gw"
    assert cli.main(["gronwall-check", "--out", str(out), "--instances", "1000"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["instances"] == 1000 and summary["violations"] == 0


@pytest.mark.parametrize("kind, extra", [
    ("convergence-space", ["--mc", "1", "--N-list", "8,16,32", "--N-ref", "128"]),
    ("localized", ["--mc", "2", "--N-list", "8,16,32", "--N-ref", "128", "--model", "linear"]),
    ("stability", ["--mc", "2"]),
    ("holder", ["--mc", "1", "--M-ref", "64"]),
    ("exp-moment", ["--mc", "2"]),
])
def test_other_experiments_write_outputs(tmp_path, kind, extra):
    out = tmp_path / kind
    assert cli.main([kind, "--out", str(out)] + FAST + extra) == 0
    assert (out / "manifest.json").exists() and (out / "summary.json").exists()
    assert not (out / "error.json").exists()


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "bad"
    assert cli.main(["simulate", "--M", "100", "--out", str(out)]) == cli.EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["key"] == "M" and "power of two" in err["message"]
    assert "power of two" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG


def test_divergence_exit_code(tmp_path):
    out = tmp_path / "div"
    args = ["simulate", "--out", str(out), "--newton-tol", "1e-300", "--newton-max-iter", "1"]
    assert cli.main(args + FAST) == cli.EXIT_DIVERGENCE
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "NewtonDivergence" and err["step_index"] == 0
    assert err["seed"] == [1234, 0, 0] and err["M"] == 16 and err["experiment"] == "simulate"


def test_invariant_exit_code(tmp_path, monkeypatch):
    def broken(path, resolutions):
        raise experiments.InvariantViolation("coupling broken")

    monkeypatch.setattr(experiments, "_check_coupling", broken)
    out = tmp_path / "inv"
    args = ["convergence-time", "--out", str(out), "--mc", "1", "--M-list", "8,16,32",
            "--M-ref", "256"]
    assert cli.main(args + FAST) == cli.EXIT_INVARIANT
    assert json.loads((out / "error.json").read_text())["error"] == "InvariantViolation"


def test_exp_moment_overflow_is_config_error(tmp_path):
    out = tmp_path / "ovf"
    assert cli.main(["exp-moment", "--out", str(out), "--kappa", "1e4", "--mc", "1"] + FAST) == 2
    assert json.loads((out / "error.json").read_text())["error"] == "ExpMomentOverflow"


def test_parser_lists_all_kinds():
    parser = cli.build_parser()
    for kind in experiments.EXPERIMENT_CODES:
        ns = parser.parse_args([kind, "--beta", "0.3", "--ce", "2", "--kappa", "0.01",
                                "--workers", "2", "--r", "5", "--L", "3"])
        over = cli._overrides(ns)
        assert over["kind"] == kind and over["beta"] == 0.3 and over["r"] == 5
