import os
import random
import stat
import sys
import time
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from tofu.fixtures import FIXTURES, fixture_paths, run_fixture
from tofu.harness import (
    ExecutionRequest,
    FixtureTarget,
    ProcessTarget,
    SpawnError,
    execute,
    execute_batch,
    make_target,
)
from tofu.icfg import load_icfg


def script(tmp_path: Path, name: str, body: str) -> str:
    p = tmp_path / name
    p.write_text(f"#!{sys.executable}\nimport os, sys, time\n"
                 "cov = open(os.environ['TOFU_COVERAGE_FILE'], 'a')\n"
                 "def hit(b):\n    cov.write(b + '\\n'); cov.flush()\n" + body)
    p.chmod(p.stat().st_mode | stat.S_IXUSR)
    return str(p)


@pytest.fixture
def echo(tmp_path):
    # Reports one block per argv entry plus one per input byte.
    return script(tmp_path, "echo.py", """\
hit('start')
for a in sys.argv[1:]:
    hit('arg:' + os.path.basename(a))
if len(sys.argv) > 1 and os.path.isfile(sys.argv[-1]):
    for byte in open(sys.argv[-1], 'rb').read():
        hit('byte:%d' % byte)
sys.exit(int(os.environ.get('EXIT', '0')))
""")


def test_coverage_and_input_file(echo):
    r = execute(ExecutionRequest(echo, ("-x", "@@"), b"AB"))
    assert r.exit.kind == "normal" and r.exit.code == 0
    assert r.coverage == {"start", "arg:-x", "arg:input", "byte:65", "byte:66"}
    assert r.trace[0] == "start"


def test_no_placeholder_means_no_file(echo):
    r = execute(ExecutionRequest(echo, ("plain",), b"AB"))
    assert r.coverage == {"start", "arg:plain"}


def test_exit_code_and_env(echo):
    r = execute(ExecutionRequest(echo, (), env={"EXIT": "3"}))
    assert (r.exit.kind, r.exit.code) == ("normal", 3)


def test_two_placeholders_rejected():
    with pytest.raises(ValueError):
        ExecutionRequest("x", ("@@", "@@"))
    with pytest.raises(ValueError):
        ExecutionRequest("x", (), per_exec_timeout=0)


def test_crash_is_signaled_not_error(tmp_path):
    prog = script(tmp_path, "crash.py", "hit('before')\nimport signal\nos.kill(os.getpid(), signal.SIGSEGV)\n")
    r = execute(ExecutionRequest(prog))
    assert r.exit.kind == "signaled" and r.exit.code == 11
    assert r.coverage == {"before"}


def test_timeout_keeps_partial_coverage_and_kills_group(tmp_path):
    pidfile = tmp_path / "child.pid"
    prog = script(tmp_path, "hang.py", f"""\
import subprocess
hit('early')
child = subprocess.Popen(['sleep', '30'])
open({str(pidfile)!r}, 'w').write(str(child.pid))
time.sleep(30)
hit('late')
""")
    start = time.monotonic()
    r = execute(ExecutionRequest(prog, per_exec_timeout=0.5))
    assert time.monotonic() - start < 5
    assert r.exit.kind == "timed_out"
    assert r.coverage == {"early"}
    pid = int(pidfile.read_text())
    for _ in range(50):
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            break
        # Zombie until reaped by init; check its state instead of waiting forever.
        status = Path(f"/proc/{pid}/stat").read_text().split()[2] if Path(f"/proc/{pid}/stat").exists() else "Z"
        if status == "Z":
            break
        time.sleep(0.05)
    else:
        pytest.fail("grandchild survived the timeout")


def test_missing_program_is_spawn_error(tmp_path):
    with pytest.raises(SpawnError):
        execute(ExecutionRequest(str(tmp_path / "does-not-exist")))


def test_batch_embeds_spawn_errors_in_order(echo, tmp_path):
    reqs = [ExecutionRequest(echo, ("a",)), ExecutionRequest(str(tmp_path / "nope")), ExecutionRequest(echo, ("b",))]
    out = execute_batch(reqs, parallelism=3)
    assert [r.exit.kind for r in out] == ["normal", "error", "normal"]
    assert "arg:b" in out[2].coverage


def test_batch_of_120_in_parallel_keeps_request_order(echo):
    reqs = [ExecutionRequest(echo, (f"n{i}",), per_exec_timeout=30) for i in range(120)]
    out = execute_batch(reqs, parallelism=24)
    assert all(r.exit.kind == "normal" for r in out)
    assert [sorted(r.coverage - {"start"}) for r in out] == [[f"arg:n{i}"] for i in range(120)]


def test_make_target_dispatch():
    assert isinstance(make_target("fixture:validate"), FixtureTarget)
    assert isinstance(make_target("/bin/true"), ProcessTarget)
    with pytest.raises(ValueError):
        make_target("fixture:nope")


@pytest.mark.parametrize("name, argv, data", [
    ("validate", ["@@"], b"abba"),
    ("validate", ["@@"], b"aaaaaaaaaa"),
    ("maze", ["@@"], b"7,3,12,5,9"),
    ("flagdemo", ["-B", str(fixture_paths("flagdemo")["cmdspec"].parent / "flagdemo_files/a.txt"),
                  str(fixture_paths("flagdemo")["cmdspec"].parent / "flagdemo_files/b.txt")], b""),
])
def test_fixture_process_matches_in_process(tmp_path, name, argv, data):
    wrapper = tmp_path / "run"
    wrapper.write_text(f"#!/bin/sh\nexec {sys.executable} -m tofu.fixtures {name} \"$@\"\n")
    wrapper.chmod(0o755)
    proc = execute(ExecutionRequest(str(wrapper), tuple(argv), data, per_exec_timeout=10))
    inproc = run_fixture(name, argv, data)
    assert proc.coverage == inproc.coverage
    assert proc.trace == inproc.trace
    assert proc.exit == inproc.exit


def test_fixture_targets_hit():
    assert "main:5" in run_fixture("validate", ["@@"], b"a" * 10).coverage
    assert "main:5" not in run_fixture("validate", ["@@"], b"a" * 8).coverage
    assert "main:7" in run_fixture("maze", ["@@"], b"7,3,12,5,9").coverage


def _edges(name):
    g = load_icfg(fixture_paths(name)["graph"])
    return {(e.src, e.dst) for e in g.edges}, g.functions[g.main].entry


@given(st.sampled_from(sorted(FIXTURES)), st.binary(max_size=24),
       st.lists(st.sampled_from(["-B", "-i", "-w", "--brief", "a.txt", "c.txt"]), max_size=4))
def test_fixture_traces_follow_graph_edges(name, data, flags):
    edges, entry = _edges(name)
    base = fixture_paths("flagdemo")["cmdspec"].parent / "flagdemo_files"
    argv = [str(base / f) if f.endswith(".txt") else f for f in flags] if name == "flagdemo" else ["@@"]
    if name == "maze":
        data = ",".join(str(b % 16) for b in data[:5]).encode() if random.Random(len(data)).random() < 0.5 else data
    trace = run_fixture(name, argv, data).trace
    assert trace[0] == entry
    for a, b in zip(trace, trace[1:]):
        assert (a, b) in edges, (a, b)
