"""Run target programs on candidate inputs and collect basic-block coverage.

A target reports coverage by appending one block id per line to the file
named by the ``TOFU_COVERAGE_FILE`` environment variable.  The primary
input file is written to a temporary path that replaces the ``@@`` token
in argv.
"""

from __future__ import annotations

import os
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

COVERAGE_ENV = "TOFU_COVERAGE_FILE"
INPUT_PLACEHOLDER = "@@"


class SpawnError(OSError):
    """The target could not be started at all (as opposed to crashing)."""


@dataclass(frozen=True)
class Exit:
    kind: str  # "normal", "signaled", "timed_out" or "error"
    code: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        if self.kind == "normal":
            return f"exit {self.code}"
        if self.kind == "signaled":
            return f"signal {self.code}"
        return self.kind if not self.detail else f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class ExecutionRequest:
    program: str
    argv: tuple[str, ...] = ()
    input_file_content: bytes = b""
    per_exec_timeout: float = 1.0
    env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.argv.count(INPUT_PLACEHOLDER) > 1:
            raise ValueError("at most one @@ token is allowed in argv")
        if self.per_exec_timeout <= 0:
            raise ValueError("per-execution timeout must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    coverage: frozenset[str]
    exit: Exit
    duration: float
    trace: tuple[str, ...] = field(default=(), compare=False)


def read_coverage(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8", errors="replace")
    except FileNotFoundError:
        return []
    return [line.strip() for line in text.splitlines() if line.strip()]


def _kill(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def execute(req: ExecutionRequest) -> ExecutionResult:
    """Run one request; raises SpawnError if the program cannot be started."""
    with tempfile.TemporaryDirectory(prefix="tofu-exec-") as tmp:
        cov_path = os.path.join(tmp, "coverage")
        argv = list(req.argv)
        if INPUT_PLACEHOLDER in argv:
            input_path = os.path.join(tmp, "input")
            with open(input_path, "wb") as f:
                f.write(req.input_file_content)
            argv[argv.index(INPUT_PLACEHOLDER)] = input_path
        env = {**os.environ, **req.env, COVERAGE_ENV: cov_path}
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                [req.program, *argv], env=env, cwd=tmp,
                stdin=subprocess.DEVNULL, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                start_new_session=True,
            )
        except OSError as e:
            raise SpawnError(e.errno, f"cannot start {req.program}: {e.strerror}") from e
        try:
            code = proc.wait(timeout=req.per_exec_timeout)
            exit_ = Exit("normal", code) if code >= 0 else Exit("signaled", -code)
        except subprocess.TimeoutExpired:
            _kill(proc)
            proc.wait()
            exit_ = Exit("timed_out")
        duration = time.monotonic() - start
        trace = read_coverage(cov_path)
    return ExecutionResult(frozenset(trace), exit_, duration, tuple(trace))


def _execute_isolated(req: ExecutionRequest) -> ExecutionResult:
    try:
        return execute(req)
    except SpawnError as e:
        return ExecutionResult(frozenset(), Exit("error", None, str(e)), 0.0)


def execute_batch(reqs: Sequence[ExecutionRequest], parallelism: int = 1) -> list[ExecutionResult]:
    """Results come back in request order; spawn failures are embedded per request."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism == 1 or len(reqs) <= 1:
        return [_execute_isolated(r) for r in reqs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_execute_isolated, reqs))


# --------------------------------------------------------------------------
# Targets: the campaign talks to these rather than to execute() directly.


class ProcessTarget:
    def __init__(self, program: str, per_exec_timeout: float = 1.0, parallelism: int = 1,
                 env: dict[str, str] | None = None):
        self.program = program
        self.per_exec_timeout = per_exec_timeout
        self.parallelism = parallelism
        self.env = env or {}

    @property
    def name(self) -> str:
        return self.program

    def request(self, argv: Sequence[str], data: bytes) -> ExecutionRequest:
        return ExecutionRequest(self.program, tuple(argv), data, self.per_exec_timeout, self.env)

    def run(self, argv: Sequence[str], data: bytes) -> ExecutionResult:
        return execute(self.request(argv, data))

    def run_batch(self, inputs: Sequence[tuple[Sequence[str], bytes]]) -> list[ExecutionResult]:
        return execute_batch([self.request(a, d) for a, d in inputs], self.parallelism)


class FixtureTarget:
    """In-process interpreted specimen; see tofu.fixtures."""

    def __init__(self, fixture: str):
        from .fixtures import FIXTURES

        if fixture not in FIXTURES:
            raise ValueError(f"unknown fixture {fixture!r}")
        self.fixture = fixture

    @property
    def name(self) -> str:
        return f"fixture:{self.fixture}"

    def run(self, argv: Sequence[str], data: bytes) -> ExecutionResult:
        from .fixtures import run_fixture

        return run_fixture(self.fixture, list(argv), data)

    def run_batch(self, inputs: Sequence[tuple[Sequence[str], bytes]]) -> list[ExecutionResult]:
        return [self.run(a, d) for a, d in inputs]


def make_target(program: str, per_exec_timeout: float = 1.0, parallelism: int = 1) -> ProcessTarget | FixtureTarget:
    """``fixture:<name>`` selects a built-in specimen; anything else is an executable path."""
    if program.startswith("fixture:"):
        return FixtureTarget(program.split(":", 1)[1])
    return ProcessTarget(program, per_exec_timeout, parallelism)

