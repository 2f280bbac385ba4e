import random

import pytest
from hypothesis import given, strategies as st

from helpers import INF, bellman_ford, ipdom_by_paths, random_cfg, random_icfg
from tofu.fixtures import fixture_paths
from tofu.icfg import (
    EXIT_SINK,
    GraphParseError,
    GraphValidationError,
    TargetSpec,
    build_weighted_graph,
    compute_immediate_post_dominators,
    dump_icfg,
    immediate_post_dominators,
    load_icfg,
    load_targets,
    parse_icfg,
    relevant_call_edges,
    resolve_indirect_calls,
    validate,
)

SMALL = """\
main main
function main signature=i32() entry=m:0 exits=m:3
block m:0
block m:1
block m:2
block m:3
function helper signature=void(ptr) address_taken=1 entry=h:0 exits=h:1
block h:0
block h:1
function other signature=void(ptr) address_taken=1 entry=o:0 exits=o:0
block o:0
function hidden signature=void(ptr) address_taken=0 entry=x:0 exits=x:0
block x:0
edge m:0 m:1
edge m:0 m:2
edge m:1 m:3
edge m:2 m:3
edge h:0 h:1
call m:1 indirect=void(ptr) return=m:3
"""


def test_parse_small_graph():
    g = parse_icfg(SMALL)
    assert g.main == "main"
    assert set(g.functions) == {"main", "helper", "other", "hidden"}
    assert g.functions["main"].exits == frozenset({"m:3"})
    assert g.call_sites[0].is_indirect


def test_indirect_calls_resolve_to_address_taken_signature_matches():
    g = resolve_indirect_calls(parse_icfg(SMALL))
    assert g.call_sites[0].callees == ("helper", "other")
    kinds = {(e.src, e.dst, e.kind) for e in g.edges}
    assert ("m:1", "h:0", "call") in kinds and ("h:1", "m:3", "return") in kinds
    assert ("m:1", "x:0", "call") not in kinds


@pytest.mark.parametrize("text, message", [
    (SMALL.replace("edge h:0 h:1", "edge h:0 f:9"), "unknown block f:9"),
    (SMALL.replace("block o:0", "block h:0"), "duplicate block id"),
    (SMALL.replace("main main\n", ""), "missing main declaration"),
    (SMALL.replace("main main", "main nosuch"), "missing main function"),
    (SMALL.replace("edge m:0 m:1", "edge m:0 h:0"), "crosses functions"),
])
def test_validation_errors(text, message):
    with pytest.raises(GraphValidationError, match=message):
        parse_icfg(text)


def test_parse_error_carries_line_number():
    with pytest.raises(GraphParseError) as e:
        parse_icfg(SMALL.replace("edge h:0 h:1", "frobnicate h:0"), "g.icfg")
    assert e.value.line == 18 and "g.icfg" in str(e.value)


def test_unknown_target_rejected(tmp_path):
    g = parse_icfg(SMALL)
    (tmp_path / "t").write_text("m:3\nzz:1\n")
    with pytest.raises(GraphValidationError, match="unknown target block zz:1"):
        load_targets(tmp_path / "t", g)


@given(st.integers(0, 10**6))
def test_dump_parse_round_trip(seed):
    g, _ = random_icfg(random.Random(seed))
    validate(g)
    assert parse_icfg(dump_icfg(g)) == g


def test_validate_fixture_post_dominators():
    g = load_icfg(fixture_paths("validate")["graph"])
    ip = compute_immediate_post_dominators(g, "check")
    # check:0 may skip check:5 (via check:4), so only the return block is common.
    assert ip["check:0"] == "check:6"
    assert ip["check:1"] == "check:6"
    assert ip["check:6"] == EXIT_SINK
    main = compute_immediate_post_dominators(g, "main")
    assert main["main:0"] == "main:1"  # call block falls through to its return site
    assert main["main:1"] == "main:6"


def test_blocks_that_cannot_exit_have_no_post_dominator():
    succ = {"a": ["b", "c"], "b": ["b"], "c": [EXIT_SINK]}
    assert immediate_post_dominators(succ) == {"a": "c", "c": EXIT_SINK}


@pytest.mark.parametrize("seed", range(40))
def test_post_dominators_match_path_enumeration(seed):
    cfg = random_cfg(random.Random(seed))
    assert immediate_post_dominators(cfg) == ipdom_by_paths(cfg)


def test_validate_fixture_weights():
    g = load_icfg(fixture_paths("validate")["graph"])
    wg = build_weighted_graph(g, TargetSpec(frozenset({"main:5"})))
    arcs = wg.arc_set()
    assert ("main:1", "main:3", 1, "intra") in arcs
    assert ("main:2", "main:6", 0, "intra") in arcs
    # check cannot lead back into a target function, so the call is pruned;
    # the post-dominator shortcut main:0 -> main:1 bypasses it.
    assert ("main:0", "check:0", INF, "call") in arcs
    assert ("check:6", "main:1", 0, "return") in arcs
    assert ("main:0", "main:1", 0, "postdom") in arcs
    assert not any(dst == EXIT_SINK for _, dst, _, _ in arcs)


def test_call_into_function_that_cannot_reach_target_is_infinite():
    g = load_icfg(fixture_paths("validate")["graph"])
    wg = build_weighted_graph(g, TargetSpec(frozenset({"count_a:3"})))
    arcs = wg.arc_set()
    assert ("main:0", "check:0", INF, "call") in arcs
    assert ("main:3", "count_a:0", 0, "call") in arcs


@given(st.integers(0, 10**6))
def test_weighted_graph_labelling_rules(seed):
    g, targets = random_icfg(random.Random(seed))
    g = resolve_indirect_calls(g)
    wg = build_weighted_graph(g, targets)
    succ = g.intra_successors()
    from_main, to_target = relevant_call_edges(g, targets)
    owner = g.block_owner()
    sites = {s.block: s for s in g.call_sites}
    for a in wg.arcs:
        if a.kind == "intra":
            assert a.weight == (1 if len(succ[a.src]) > 1 else 0)
        elif a.kind in ("return", "postdom"):
            assert a.weight == 0
        else:
            site = sites[a.src]
            callee = next(f for f in site.callees if g.functions[f].entry == a.dst)
            if callee in to_target and owner[a.src] in from_main:
                assert a.weight == (1 if len(site.callees) > 1 else 0)
            else:
                assert a.weight == INF
    for fn in g.functions:
        for b, p in compute_immediate_post_dominators(g, fn).items():
            if p != EXIT_SINK:
                assert (b, p, 0, "postdom") in wg.arc_set()


def test_random_graph_distances_against_bellman_ford_sample():
    for seed in range(25):
        g, targets = random_icfg(random.Random(seed))
        wg = build_weighted_graph(resolve_indirect_calls(g), targets)
        from tofu.distance import compute_distances

        maps = compute_distances(wg, targets)
        for t in targets:
            assert dict(maps[t].dist) == bellman_ford(wg, t)
