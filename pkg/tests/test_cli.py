import csv
import filecmp
import json
import os

import pytest

from fbcool import cli

COMMANDS = ["calibrate", "storage", "scan-attenuation", "scan-power", "thermometry", "toggle",
            "correlation"]


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _same_outputs(a, b, skip=("run_info.json",)):
    names = sorted(set(os.listdir(a)) | set(os.listdir(b)))
    assert sorted(os.listdir(a)) == sorted(os.listdir(b))
    for n in names:
        if n not in skip:
            assert filecmp.cmp(a / n, b / n, shallow=False), n


@pytest.mark.parametrize("command", COMMANDS)
def test_byte_identical_across_jobs(command, small_yaml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(command, "--config", small_yaml, "--seed", 42, "--out", a) == 0
    assert _run(command, "--config", small_yaml, "--seed", 42, "--out", b, "--jobs", 2) == 0
    _same_outputs(a, b)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["master_seed"] == 42 and manifest["subcommand"] == command
    info = json.loads((a / "run_info.json").read_text())
    assert {"timestamp", "output_dir", "config_path"} <= set(info)


@pytest.mark.parametrize("command", COMMANDS[1:])
def test_replay_reproduces(command, small_yaml, tmp_path):
    a, r = tmp_path / "a", tmp_path / "r"
    assert _run(command, "--config", small_yaml, "--out", a) == 0
    assert _run("replay", "--from", a, "--out", r) == 0
    for name in os.listdir(a):
        if name.endswith(".csv"):
            assert filecmp.cmp(a / name, r / name, shallow=False), name
    ma, mr = (json.loads((d / "manifest.json").read_text()) for d in (a, r))
    assert ma["summary"] == mr["summary"] and mr["replayed"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_storage_csv_schema(small_yaml, tmp_path):
    out = tmp_path / "s"
    assert _run("storage", "--config", small_yaml, "--out", out) == 0
    rows = _rows(out / "survival.csv")
    assert rows[0] == ["t_ms", "fraction", "stderr"]
    assert len(rows) == 1 + 61  # 60 ms in 1 ms bins, both ends included
    assert _rows(out / "fit.csv")[0] == ["param", "value", "sigma"]
    assert (out / "survival.csv").read_bytes().endswith(b"\n")


def test_attenuation_outputs(small_yaml, tmp_path):
    out = tmp_path / "a"
    assert _run("scan-attenuation", "--config", small_yaml, "--out", out) == 0
    summary = _rows(out / "summary.csv")
    assert summary[0][:4] == ["attenuation", "A", "A_sigma", "tau_ms"]
    assert [r[0] for r in summary[1:]] == ["1.0", "0.5"]
    assert (out / "survival_attenuation_1.csv").exists()
    assert (out / "survival_attenuation_0p5.csv").exists()


def test_correlation_grid(small_yaml, tmp_path):
    out = tmp_path / "c"
    assert _run("correlation", "--config", small_yaml, "--out", out) == 0
    rows = _rows(out / "correlation_deep.csv")
    tau = [float(r[0]) for r in rows[1:]]
    assert tau[0] == 0 and all(b - a == 1 for a, b in zip(tau, tau[1:])) and tau[-1] == 300


def test_energies_one_row_per_used_atom(small_yaml, tmp_path):
    out = tmp_path / "t"
    assert _run("thermometry", "--config", small_yaml, "--out", out) == 0
    fit = {r[0]: r[1] for r in _rows(out / "fit.csv")[1:]}
    rows = _rows(out / "energies_feedback_on.csv")
    assert rows[0] == ["u_esc_uK", "e0_uK"]
    assert len(rows) - 1 == int(fit["n_used_feedback_on"])


def test_figure_preset(small_yaml, tmp_path):
    out = tmp_path / "f"
    assert _run("--figure", "fig3", "--config", small_yaml, "--out", out) == 0
    assert json.loads((out / "manifest.json").read_text())["subcommand"] == "toggle"
    assert _run("storage", "--figure", "fig3", "--config", small_yaml, "--out", tmp_path / "g") == 1


def test_exit_codes(small_yaml, tmp_path, capsys):
    assert _run("bogus") == 1
    assert _run() == 1
    assert _run("storage", "--jobs", 0, "--config", small_yaml, "--out", tmp_path / "j") == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("feedback:\n  threshold: 0\n")
    assert _run("storage", "--config", bad, "--out", tmp_path / "x") == 2
    assert "feedback.threshold" in capsys.readouterr().err
    assert _run("storage", "--config", tmp_path / "missing.yaml", "--out", tmp_path / "y") == 2
    assert _run("replay", "--from", tmp_path / "nothing", "--out", tmp_path / "z") == 3


def test_refuses_nonempty_out(small_yaml, tmp_path):
    out = tmp_path / "o"
    assert _run("storage", "--config", small_yaml, "--out", out) == 0
    assert _run("storage", "--config", small_yaml, "--out", out) == 1
    assert _run("storage", "--config", small_yaml, "--out", out, "--overwrite") == 0


def test_options_before_subcommand(small_yaml, tmp_path):
    out = tmp_path / "p"
    assert _run("--seed", 7, "--config", small_yaml, "--out", out, "storage") == 0
    assert json.loads((out / "manifest.json").read_text())["master_seed"] == 7
