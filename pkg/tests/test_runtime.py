import re

import pytest
from hypothesis import given, settings, strategies as st

from frj import runtime, wf
from frj.parse import parse_program
from frj.runtime import (
    Configuration, GcPolicy, MainFirst, Redex, RoundRobin, SeededRandom, Site, collect_garbage,
    enabled_redexes, initial, run, run_parallel, step,
)
from frj.syntax import (
    Call, Done, EmptySignal, Head, Label, LiftCall, Lit, Loc, Message, Program, Record, Tail, Var,
    labels,
)

from conftest import EXPECTED, POSITIVE, load, script_for

EMPTY_PROG = parse_program("class Person { method Int age() { return 24; } }")


def config(main, memory=None) -> Configuration:
    return Configuration(EMPTY_PROG, memory or {}, main, next_loc=100, next_label=100)


def one(v):
    return Lit("Int", v)


# ---- enabled redexes

def test_head_of_completed_signal_is_the_only_redex():
    c = config(Head(Done(one(1), EmptySignal())))
    assert enabled_redexes(c) == [Redex(Site("main"), "head")]


def test_message_with_value_head_and_signal_tail_can_complete():
    mem = {1: Record("Object", [], [Message(5, one(1), Label(6))]),
           2: Record("Object", [], [Message(6, one(2), EmptySignal())])}
    rs = enabled_redexes(config(Head(Label(5)), mem))
    assert Redex(Site("complete", 1, 5), "msgComplete") in rs
    assert Redex(Site("complete", 2, 6), "msgComplete") in rs


def test_terminal_configuration_has_no_redexes():
    assert enabled_redexes(config(one(3))) == []


def test_only_the_front_message_of_a_mailbox_is_active():
    mem = {1: Record("Object", [], [Message(1, Head(Label(2)), EmptySignal()),
                                     Message(2, one(7), EmptySignal())])}
    assert enabled_redexes(config(Head(Label(1)), mem)) == []


def test_blocked_head_waits_for_label():
    mem = {1: Record("Object", [], [Message(1, Call(Head(Label(2)), "plus", (one(1),)), EmptySignal())]),
           2: Record("Object", [], [Message(2, Call(one(1), "plus", (one(1),)), EmptySignal())])}
    rs = enabled_redexes(config(Head(Label(1)), mem))
    assert rs == [Redex(Site("head", 2, 2), "prim")]


def test_empty_redex_in_head_and_in_tail():
    mem = {1: Record("Object", [], [Message(1, Call(Head(EmptySignal()), "plus", (one(1),)), EmptySignal())]),
           2: Record("Object", [], [Message(2, one(1), LiftCall(Loc(2), "m", (Tail(EmptySignal()),)))]),
           3: Record("Object", [], [Message(3, one(1), Head(EmptySignal()))])}
    rs = enabled_redexes(config(Head(Label(1)), mem))
    assert Redex(Site("empty", 1, 1), "Empty") in rs
    assert Redex(Site("tail", 2, 2), "tailEmpty") in rs
    assert Redex(Site("empty", 3, 3), "Empty") in rs


def test_garbage_redex_only_on_request():
    c = config(one(1), {1: Record("Object", [])})
    assert enabled_redexes(c) == []
    assert enabled_redexes(c, include_garbage=True) == [runtime.GARBAGE]


# ---- single steps

def test_tail_empty_step():
    c = config(Tail(EmptySignal()))
    step(c, Redex(Site("main"), "tailEmpty"))
    assert c.main == EmptySignal()


def test_lift_enqueues_message_on_receiver():
    c = config(LiftCall(Loc(1), "age", ()), {1: Record("Person", [])})
    step(c, Redex(Site("main"), "liftS"))
    assert c.main == Label(100)
    assert c.memory[1].mailbox == [Message(100, Call(Loc(1), "age", ()), LiftCall(Loc(1), "age", ()))]


def test_lift_maps_head_and_tail_over_arguments():
    c = config(LiftCall(Loc(1), "m", (Label(7), EmptySignal())), {1: Record("Person", [])})
    step(c, Redex(Site("main"), "liftS"))
    m = c.memory[1].mailbox[-1]
    assert m.head == Call(Loc(1), "m", (Head(Label(7)), Head(EmptySignal())))
    assert m.tail == LiftCall(Loc(1), "m", (Tail(Label(7)), Tail(EmptySignal())))


def test_mailbox_is_fifo():
    c = config(LiftCall(Loc(1), "age", ()), {1: Record("Person", [], [Message(1, one(0), EmptySignal())])})
    step(c, Redex(Site("main"), "liftS"))
    assert [m.label for m in c.memory[1].mailbox] == [1, 100]


def test_msg_complete_substitutes_globally_and_removes_label():
    mem = {1: Record("Object", [], [Message(5, one(1), EmptySignal())]),
           2: Record("Box", [Label(5)])}
    c = config(Call(Head(Label(5)), "plus", (Loc(2),)), mem)
    step(c, Redex(Site("complete", 1, 5), "msgComplete"))
    assert c.main == Call(Head(Done(one(1), EmptySignal())), "plus", (Loc(2),))
    assert c.memory[2].fields == [Done(one(1), EmptySignal())]
    assert 5 not in wf.dom_s(c.memory) and 5 not in wf.used_s(c.memory) | wf.used_s(c.main)


def test_empty_rule_terminates_signal():
    mem = {1: Record("Object", [], [Message(5, Head(EmptySignal()), EmptySignal())])}
    c = config(Tail(Label(5)), mem)
    step(c, Redex(Site("empty", 1, 5), "Empty"))
    assert c.main == Tail(EmptySignal()) and c.memory[1].mailbox == []


def test_explicit_signal_allocates_holder():
    c = config(parse_program("main { @[1; @[]] }").main)
    step(c, Redex(Site("main"), "explicitS"))
    assert c.main == Label(100)
    assert c.memory[100] == Record("Object", [], [Message(100, one(1), EmptySignal())])


def test_firing_a_disabled_redex_is_an_invariant_violation():
    with pytest.raises(runtime.InvariantViolation):
        step(config(one(1)), Redex(Site("main"), "head"))


# ---- whole runs

@pytest.mark.parametrize("name", POSITIVE)
@pytest.mark.parametrize("sched", [MainFirst, RoundRobin, lambda: SeededRandom(3)])
def test_corpus_values(name, sched):
    assert run(load(name), sched(), script=script_for(name)).rendered == EXPECTED[name]


def test_fork_join_reduces_by_hand_under_main_first():
    res = run(load("fork_join"), MainFirst(), trace=True, gc=GcPolicy("never"))
    rules = [line.split()[1] for line in res.trace]
    assert rules[:3] == ["new", "let", "explicitS"]
    assert rules.count("msgComplete") == 1 and res.rendered == "3"


def test_tail_of_empty_program():
    assert run(parse_program("main { tail(@[]) }")).rendered == "@[]"


def test_head_of_empty_in_main_is_an_error():
    with pytest.raises(runtime.EmptySignalInMain):
        run(parse_program("main { head(@[]) }"))


def test_step_limit_carries_configuration():
    with pytest.raises(runtime.StepLimitExceeded) as info:
        run(load("person_frp"), max_steps=10)
    assert info.value.config.step_count == 10


def test_stuck_when_label_has_no_message():
    with pytest.raises(runtime.StuckConfiguration):
        run(Program((), Head(Label(1))))


def test_program_without_main_cannot_run():
    with pytest.raises(ValueError):
        initial(EMPTY_PROG)


def test_trace_format_and_seed_stability():
    a = run(load("person_actor"), SeededRandom(11), trace=True)
    b = run(load("person_actor"), SeededRandom(11), trace=True)
    assert a.trace == b.trace
    pattern = re.compile(r"^#\d+ \w+ @(main|gc|L\d+:S\d+(\.head|\.tail)?)( \[[^\]]*\])?$")
    assert all(pattern.match(line) for line in a.trace), a.trace
    assert [int(line.split()[0][1:]) for line in a.trace if "garbage" not in line] == list(range(1, a.stats.steps + 1))


def test_stats_count_messages():
    res = run(load("person_actor"), MainFirst())
    s = res.stats
    assert s.steps == sum(v for k, v in s.rules.items() if k != "garbage")
    assert s.messages_created == s.messages_completed + s.messages_emptied
    assert s.allocations >= 3


@pytest.mark.parametrize("name", POSITIVE)
def test_preservation(name):
    res = run(load(name), SeededRandom(5), script=script_for(name), debug_preserve=True)
    assert res.rendered == EXPECTED[name]


@pytest.mark.parametrize("name", POSITIVE)
def test_labels_are_fresh_and_completed_labels_vanish(name):
    prog = load(name)
    c = initial(prog, script_for(name))
    seen: set = set()
    sched = SeededRandom(2)
    while not runtime.is_terminal(c):
        r = sched.pick(enabled_redexes(c), c)
        before = set(wf.dom_s(c.memory))
        step(c, r)
        new = wf.dom_s(c.memory) - before
        assert not (new & seen)
        seen |= new
        if r.rule == "msgComplete":
            s = r.site.label
            assert s not in wf.dom_s(c.memory)
            assert s not in wf.used_s(c.memory) | wf.used_s(c.main)


# ---- garbage

def test_gc_drops_unreferenced_records():
    c = config(Loc(1), {1: Record("Box", [Loc(2)]), 2: Record("Box", []), 3: Record("Box", [])})
    assert collect_garbage(c) == 1 and set(c.memory) == {1, 2}


def test_gc_keeps_actor_with_referenced_pending_message():
    mem = {1: Record("Person", [], [Message(4, one(1), EmptySignal())])}
    c = config(Head(Label(4)), mem)
    assert collect_garbage(c) == 0 and 1 in c.memory


def test_gc_follows_labels_inside_messages():
    mem = {1: Record("Object", [], [Message(4, Head(Label(5)), EmptySignal())]),
           2: Record("Object", [], [Message(5, one(1), EmptySignal())])}
    c = config(Head(Label(4)), mem)
    assert collect_garbage(c) == 0


def test_gc_collects_signal_holder_after_completion():
    c = initial(load("fork_join"))
    sched = MainFirst()
    while True:
        r = sched.pick(enabled_redexes(c), c)
        step(c, r)
        if r.rule == "msgComplete":
            break
    holder = r.site.loc
    assert holder in c.memory
    collect_garbage(c)
    assert holder not in c.memory
    assert runtime.locations(c.main) <= set(c.memory)


@pytest.mark.parametrize("name", POSITIVE)
@pytest.mark.parametrize("seed", range(5))
def test_gc_transparency(name, seed):
    values = {run(load(name), SeededRandom(seed), gc=gc, script=script_for(name)).rendered
              for gc in (GcPolicy("never"), GcPolicy("every", 1), GcPolicy("every", 1024))}
    assert values == {EXPECTED[name]}


def test_gc_policy_parse():
    assert GcPolicy.parse("every-5") == GcPolicy("every", 5)
    assert GcPolicy.parse("never").mode == "never"
    with pytest.raises(ValueError):
        GcPolicy.parse("sometimes")


# ---- schedulers and parallel mode

def test_seeded_random_equal_seeds_equal_choices():
    prog = load("person_frp")
    assert run(prog, SeededRandom(9), trace=True).trace == run(prog, SeededRandom(9), trace=True).trace


def test_round_robin_cycles_sites():
    rr = RoundRobin()
    rs = [Redex(Site("main"), "let"), Redex(Site("head", 1, 1), "prim"), Redex(Site("head", 2, 2), "prim")]
    assert [rr.pick(rs, None).site.kind for _ in range(4)] == ["main", "head", "head", "main"]


@pytest.mark.parametrize("name", POSITIVE)
def test_parallel_matches_sequential_and_logs_no_races(name):
    res = run_parallel(load(name), workers=4, seed=1, script=script_for(name), debug_preserve=True)
    assert res.rendered == EXPECTED[name] and res.races == []


def test_race_detector_flags_overlaps():
    u = runtime.UpdateEntry
    assert runtime.find_overlaps([u(1, "x", 1, 0, 0, 2), u(1, "x", 2, 1, 1, 3)])
    assert not runtime.find_overlaps([u(1, "x", 1, 0, 0, 1), u(1, "x", 2, 1, 1, 2)])
    assert not runtime.find_overlaps([u(1, "x", 1, 0, 0, 2), u(2, "x", 2, 1, 1, 3)])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_pure_programs_agree_for_any_seed(seed):
    for name in ("fork_join", "person_actor"):
        assert run(load(name), SeededRandom(seed)).rendered == EXPECTED[name]
