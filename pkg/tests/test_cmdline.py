import random

import pytest
from hypothesis import given, strategies as st

from tofu.cmdline import (
    CmdlineSpecError,
    CmdlineState,
    DirectoryValue,
    IntValue,
    initial_state,
    is_valid,
    load_cmdline_spec,
    mutate_cmdline,
    parse_argv,
    parse_cmdline_spec,
    render_argv,
)
from tofu.fixtures import fixture_paths

SPEC_TEXT = """\
# demo
--silent|optional|no option
-n|optional|int|0,3
--mode|optional|oneof|fast,slow
-q|required|no option
input|required|oneof|@@
"""


@pytest.fixture
def spec():
    return parse_cmdline_spec(SPEC_TEXT)


def test_parse_spec(spec):
    assert [e.name for e in spec.entries] == ["--silent", "-n", "--mode", "-q", "input"]
    assert spec["-n"].kind == IntValue(0, 3)
    assert spec["-n"].domain() == ["0", "1", "2", "3"]
    assert not spec["input"].is_flag


def test_directory_values_resolve_relative_to_spec():
    spec = load_cmdline_spec(fixture_paths("flagdemo")["cmdspec"])
    kind = spec["file1"].kind
    assert isinstance(kind, DirectoryValue)
    assert [f.rsplit("/", 1)[1] for f in kind.files] == ["a.txt", "b.txt", "c.txt"]
    assert all(f.startswith("/") for f in kind.files)


@pytest.mark.parametrize("line, message", [
    ("-x|sometimes|no option", "unknown requirement"),
    ("-x|optional|float|1", "unknown option kind"),
    ("-x|optional|directory|no/such/dir", "missing directory"),
    ("-x|optional|int|5,1", "empty int range"),
    ("-x|optional", "expected name"),
    ("pos|optional|oneof|a", "must be required and valued"),
    ("-x|optional|no option\n-x|optional|no option", "duplicate entry"),
])
def test_spec_errors(tmp_path, line, message):
    with pytest.raises(CmdlineSpecError, match=message):
        parse_cmdline_spec(line, tmp_path)


def test_initial_state_holds_required_entries_only(spec):
    st_ = initial_state(spec)
    assert st_.as_dict() == {"-q": True, "input": "@@"}
    assert render_argv(st_, spec) == ["-q", "@@"]


def test_render_orders_flags_before_positionals(spec):
    state = CmdlineState.from_dict(spec, {"input": "@@", "--mode": "slow", "-q": True, "-n": "2"})
    assert render_argv(state, spec) == ["-n", "2", "--mode", "slow", "-q", "@@"]


@given(st.integers(0, 10**9), st.integers(1, 30))
def test_mutation_keeps_state_valid_and_round_trips(seed, steps):
    spec = parse_cmdline_spec(SPEC_TEXT)
    rng = random.Random(seed)
    state = initial_state(spec)
    for _ in range(steps):
        state = mutate_cmdline(state, spec, rng)
        assert is_valid(state, spec)
        assert parse_argv(render_argv(state, spec), spec) == state


def test_mutation_explores_every_optional_flag(spec):
    rng = random.Random(0)
    seen = set()
    state = initial_state(spec)
    for _ in range(300):
        state = mutate_cmdline(state, spec, rng)
        seen |= set(state.as_dict())
    assert seen == {e.name for e in spec.entries}


def test_is_valid_rejects_bad_states(spec):
    assert not is_valid(CmdlineState((("-q", True),)), spec)  # missing positional
    assert not is_valid(CmdlineState((("-q", True), ("input", "@@"), ("-n", "9"))), spec)
    assert not is_valid(CmdlineState((("-q", True), ("input", "@@"), ("--bogus", True))), spec)


def test_parse_argv_rejects_foreign_argv(spec):
    with pytest.raises(CmdlineSpecError):
        parse_argv(["-q"], spec)
    with pytest.raises(CmdlineSpecError):
        parse_argv(["-q", "-q", "@@"], spec)
    with pytest.raises(CmdlineSpecError):
        parse_argv(["-n"], spec)


def test_nothing_to_mutate_returns_same_state():
    spec = parse_cmdline_spec("input|required|oneof|@@\n")
    state = initial_state(spec)
    assert mutate_cmdline(state, spec, random.Random(0)) == state
