import csv
import io
import json
import shutil
import subprocess
import sys

import pytest

from subacct.cli import main

RR_LINE = "H_{4/3}(P||Q)=11/48, H_{4/3}(Q||P)=1/6, H_2(P||Q)=1/16, H_2(Q||P)=1/8\n"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_rr_oracle_exact(capsys):
    code, out, _ = run(capsys, "rr-oracle")
    assert code == 0 and out == RR_LINE


def test_rr_oracle_json(capsys):
    code, out, _ = run(capsys, "rr-oracle", "--json")
    assert code == 0
    assert {r["quantity"]: r["value"] for r in json.loads(out)}["H_2(Q||P)"] == "1/8"


def test_console_script():
    exe = shutil.which("subacct")
    cmd = [exe] if exe else [sys.executable, "-m", "subacct.cli"]
    res = subprocess.run(cmd + ["rr-oracle"], capture_output=True, text=True, check=True)
    assert res.stdout == RR_LINE


def test_delta_zero_rate(capsys):
    code, out, _ = run(capsys, "delta", "--gamma", "0", "--k", "3", "--eps", "0", "0.5", "1")
    assert code == 0
    assert [float(r["delta"]) for r in rows(out)] == [0.0, 0.0, 0.0]


def test_delta_and_epsilon_consistent(capsys):
    common = ["--sigma", "1.0", "--gamma", "0.1", "--k", "10"]
    _, out, _ = run(capsys, "epsilon", *common, "--delta", "1e-5")
    eps = float(rows(out)[0]["epsilon"])
    _, out, _ = run(capsys, "delta", *common, "--eps", repr(eps))
    assert float(rows(out)[0]["delta"]) <= 1e-5 * (1 + 1e-9)


def test_wor_substitution_is_labelled(capsys):
    code, out, _ = run(capsys, "epsilon", "--scheme", "wor", "--relation", "substitution",
                       "--sigma", "4", "--gamma", "0.05", "--delta", "1e-6")
    r = rows(out)[0]
    assert code == 0 and r["tight"] == "false" and "upper bound" in r["direction"]


def test_usage_errors_exit_two(capsys):
    assert run(capsys, "epsilon", "--delta", "1.5")[0] == 2
    assert run(capsys, "delta", "--gamma", "2", "--eps", "0")[0] == 2
    assert run(capsys, "pld")[0] == 2
    code, _, err = run(capsys, "delta", "--noise", "laplace", "--relation", "substitution",
                       "--eps", "1")
    assert code == 2 and "Gaussian noise" in err
    with pytest.raises(SystemExit) as exc:
        main(["delta"])
    assert exc.value.code == 2


def test_computation_failure_exit_one(capsys):
    code, _, err = run(capsys, "epsilon", "--sigma", "1", "--gamma", "1", "--delta", "1e-300")
    assert code == 1 and "DeltaUnreachable" in err


def test_mc_determinism_and_replay(tmp_path, capsys):
    out = tmp_path / "mc.csv"
    argv = ["mc", "--sigma", "1", "--gamma", "0.3", "--k", "2", "--accuracy", "0.05",
            "--eps", "0", "0.5", "1", "--seed", "5", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_bytes()
    manifest = json.loads((tmp_path / "mc.csv.manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["argv"] == argv
    assert manifest["defaults"]["tail_mass_bound"] == 1e-15
    out.unlink()
    assert main(["replay", str(tmp_path / "mc.csv.manifest.json")]) == 0
    assert out.read_bytes() == first
    capsys.readouterr()


def test_json_output(capsys):
    code, out, _ = run(capsys, "delta", "--gamma", "0.1", "--eps", "1", "--json")
    doc = json.loads(out)
    assert code == 0 and set(doc[0]) == {"epsilon", "delta", "direction", "tight"}


def test_pld_save_and_reuse(tmp_path, capsys):
    path = tmp_path / "plds.json"
    common = ["--sigma", "1", "--gamma", "0.1", "--k", "4"]
    assert main(["pld", *common, "--out", str(path)]) == 0
    assert {d["direction"] for d in json.loads(path.read_text())} == {"add", "remove"}
    _, direct, _ = run(capsys, "epsilon", *common, "--delta", "1e-5", "1e-3")
    _, loaded, _ = run(capsys, "epsilon", "--pld", str(path), "--delta", "1e-5", "1e-3")
    assert rows(direct) == rows(loaded)
