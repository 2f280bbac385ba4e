import json
import subprocess
import sys

from tofu.cli import main
from tofu.fixtures import fixture_paths


def test_dist_command(tmp_path, capsys):
    p = fixture_paths("validate")
    rc = main(["dist", "--graph", str(p["graph"]), "--targets", str(p["targets"]), "--out", str(tmp_path)])
    assert rc == 0
    assert "main:5: distance from main:0 = 2" in capsys.readouterr().out
    assert (tmp_path / "main__5.dist").read_text().startswith("main:5 0\n")


def test_fuzz_and_replay(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["fuzz", "--fixture", "validate", "--timeout", "30", "--seed", "42", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["targets"][0]["covered"]
    assert (out / "summary.txt").exists() and (out / "timing.json").exists()
    assert (out / "distances" / "main__5.dist").exists()
    witness = out / report["targets"][0]["witness"]
    rc = main(["replay", "--witness", str(witness), "--graph", str(fixture_paths("validate")["graph"])])
    assert rc == 0
    assert "main:5: covered" in capsys.readouterr().out


def test_fuzz_exit_code_when_target_missed(tmp_path):
    rc = main(["fuzz", "--fixture", "maze", "--timeout", "30", "--max-execs", "20", "--batch", "10",
               "--out", str(tmp_path)])
    assert rc == 1


def test_replay_of_a_wrong_witness_fails(tmp_path):
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"target": "main:5", "program": "fixture:validate", "argv": ["@@"], "input_b64": ""}))
    assert main(["replay", "--witness", str(w), "--graph", str(fixture_paths("validate")["graph"])]) == 1


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.icfg"
    bad.write_text("nonsense\n")
    rc = main(["dist", "--graph", str(bad), "--targets", str(bad), "--out", str(tmp_path)])
    assert rc == 2
    assert "error" in capsys.readouterr().err
    assert main(["fuzz", "--timeout", "1", "--out", str(tmp_path)]) == 2  # no program or graph


def test_module_entry_point(tmp_path):
    p = fixture_paths("flagdemo")
    r = subprocess.run([sys.executable, "-m", "tofu", "fuzz", "--fixture", "flagdemo", "--timeout", "30",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "phase-1 best command line: -B" in r.stdout
    assert p["graph"].exists()
