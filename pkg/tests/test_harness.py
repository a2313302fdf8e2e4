import pytest

from frj import harness, runtime
from frj.parse import parse_program
from frj.runtime import MainFirst, SeededRandom

from conftest import EXPECTED, PURE, load, script_for


@pytest.mark.parametrize("name, det", [(n, True) for n in PURE] + [
    ("ac_controller", False), ("nondet_acc", False), ("micro/racy_read", False),
    ("micro/two_signals", True), ("micro/head_plus", True)])
def test_purity_classification(name, det):
    assert harness.expected_deterministic(load(name)) is det


def test_replay_fork_join_is_deterministic():
    r = harness.replay_determinism(load("fork_join"), range(20))
    assert r.verdict == "deterministic" and r.distinct == ["3"]
    assert set(r.outcomes) == {f"seed {s}" for s in range(20)} | {"parallel"}


def test_replay_literal_main():
    r = harness.replay_determinism(parse_program("main { 1 }"), range(3), parallel=False)
    assert r.distinct == ["1"] and all(v == 0 for v in r.steps.values())


def test_replay_finds_nondeterminism():
    r = harness.replay_determinism(load("nondet_acc"), range(50))
    assert r.verdict == "nondeterministic" and r.distinct == ["11", "13"]


def test_replay_records_errors():
    r = harness.replay_determinism(load("person_frp"), range(2), parallel=False, max_steps=5)
    assert r.verdict == "inconclusive" and len(r.errors) == 2


def test_race_check_on_mutable_actor():
    rep = harness.race_check(load("nondet_acc"), repetitions=3)
    # main may finish before the third message runs
    assert rep.ok and all(len(v) >= 2 for v in rep.log.values()) and len(rep.log) == 3


@pytest.mark.parametrize("name, values", [
    ("micro/head_plus", {"2"}), ("micro/two_signals", {"3"}), ("micro/racy_read", {"0", "1"}),
])
def test_enumeration(name, values):
    rep = harness.enumerate_schedules(load(name), 200)
    assert rep.values == values and rep.complete and rep.states <= 200


@pytest.mark.parametrize("name", ["micro/head_plus", "micro/two_signals", "micro/racy_read"])
def test_canonicalization_is_sound(name):
    memo = harness.enumerate_schedules(load(name), 200)
    plain = harness.enumerate_schedules(load(name), 200, memoize=False)
    assert memo.values == plain.values and memo.states <= plain.states


def test_enumeration_bound_is_flagged():
    rep = harness.enumerate_schedules(load("person_frp"), 30)
    assert not rep.complete


def test_enumeration_and_replay_agree_on_pure_programs():
    for name in ("micro/two_signals", "fork_join", "person_actor"):
        prog = load(name)
        enum = harness.enumerate_schedules(prog, 400)
        replay = harness.replay_determinism(prog, range(20))
        assert enum.complete and enum.singleton == (replay.verdict == "deterministic")


def test_canonical_ignores_location_names():
    prog = load("fork_join")
    a = runtime.initial(prog)
    b = runtime.initial(prog)
    b.next_loc, b.next_label = 50, 70
    for c in (a, b):
        sched = MainFirst()
        for _ in range(4):
            runtime.step(c, sched.pick(runtime.enabled_redexes(c), c))
    assert harness.canonical(a) == harness.canonical(b)


def test_verify_report():
    rep = harness.verify(load("fork_join"), seeds=5, enumerate_depth=200, race_runs=2)
    assert rep.ok and rep.as_dict()["enumeration"]["values"] == ["3"]
    bad = harness.verify(load("nondet_acc"), seeds=30, race_runs=2)
    assert bad.ok  # nondeterminism is allowed when a mut capability actor is involved


def test_verify_flags_unexpected_nondeterminism(monkeypatch):
    monkeypatch.setattr(harness, "expected_deterministic", lambda prog: True)
    rep = harness.verify(load("nondet_acc"), seeds=30, race_runs=1)
    assert not rep.ok and "expected deterministic" in rep.failures[0]
