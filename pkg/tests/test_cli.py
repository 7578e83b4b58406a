import json
import subprocess
import sys

import pytest

from jumplab.cli import main, reference_text


def _write(tmp_path, text):
    path = tmp_path / "scenario.toml"
    path.write_text(text)
    return str(path)


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_kernel_verify_passes(tmp_path):
    cfg = _write(tmp_path, "[experiments.kernel-verify]\nn_random_pairs = 300\n"
                           "check_defect = true\n")
    assert main(["kernel-verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    checks = _summary(tmp_path / "o")["experiments"]["kernel-verify"]["checks"]
    for name in ("two-sided", "tail", "local-lower", "defect"):
        assert checks[name]["passed"]


def test_false_tail_constant_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path, "[kernel.bounds]\nkappa3 = 3.0\n[experiments.kernel-verify]\n"
                           "n_random_pairs = 300\n")
    assert main(["kernel-verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    tail = _summary(tmp_path / "o")["experiments"]["kernel-verify"]["checks"]["tail"]
    assert not tail["passed"]
    assert tail["witness_value"] == pytest.approx(4.0, rel=1e-9)
    assert tail["violation_ratio"] == pytest.approx(4.0 / 3.0, rel=1e-9)
    assert "FAIL kernel-verify:tail" in capsys.readouterr().out


def test_ball_outside_box_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "[lattice]\nn = 32\nbox = [[-1.0, 1.0]]\n"
                           "[experiments.exit-mc]\nradii = [0.6]\n")
    assert main(["exit-mc", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err and "box" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", [
    "[experiments.exit-mc]\nbogus = 1\n",
    "[experiments.exit-mc]\nn_paths = 'many'\n",
    "[kernel]\nfamily = 'gaussian'\n",
    "not toml = = 1\n",
])
def test_bad_config_exits_2(tmp_path, text):
    cfg = _write(tmp_path, text)
    assert main(["exit-mc", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_all_problems_reported(tmp_path, capsys):
    cfg = _write(tmp_path, "[experiments.exit-mc]\nbogus = 1\nradii = [5.0]\ntimes = [-1.0]\n")
    assert main(["exit-mc", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.count("  - ") >= 3


def test_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2


def test_run_needs_experiments(tmp_path):
    assert main(["run", "--config", _write(tmp_path, "seed = 1\n")]) == 2


def test_run_executes_listed_experiments(tmp_path):
    cfg = _write(tmp_path, "[lattice]\nn = 32\nbox = [[-1.0, 1.0]]\n"
                           "[experiments.chain-build]\n[experiments.functionals]\n"
                           "radii = [0.5, 0.25]\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = _summary(tmp_path / "o")
    assert set(summary["experiments"]) == {"chain-build", "functionals"}
    assert summary["status"] == "pass"
    for name in summary["experiments"]:
        for f in summary["experiments"][name]["files"]:
            assert (tmp_path / "o" / f).exists()


def test_outputs_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, "seed = 5\n[lattice]\nn = 64\nbox = [[-2.0, 2.0]]\n"
                           "[experiments.exit-mc]\nn_paths = 1000\ncompare_n = 32\n")
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"o{threads}"
        assert main(["exit-mc", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.is_file() and p.name != "metadata.json")
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    meta = json.loads((outs[1] / "metadata.json").read_text())
    assert meta["threads"] == 3


def test_seed_override_changes_results(tmp_path):
    cfg = _write(tmp_path, "[lattice]\nn = 64\nbox = [[-2.0, 2.0]]\n"
                           "[experiments.exit-mc]\nn_paths = 500\ncompare_n = 32\n")
    main(["exit-mc", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["exit-mc", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert _summary(tmp_path / "a")["config"]["seed"] == 1
    a = (tmp_path / "a" / "summary.json").read_bytes()
    b = (tmp_path / "b" / "summary.json").read_bytes()
    assert a != b


def test_reference_lists_every_experiment():
    text = reference_text()
    for name in ("kernel-verify", "functionals", "chain-build", "exit-mc", "mean-exit-mc",
                 "levy-check", "heat-kernel", "resolvent-check", "harmonic", "holder",
                 "uic-check", "weak-probe", "converge"):
        assert f"[experiments.{name}]" in text


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "jumplab.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
