"""Empirical checks of the determinism and race-freedom claims.

Replays a program under many seeds, runs it on parallel workers while logging
field updates, and enumerates every schedule of tiny programs.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

from . import runtime
from .builtins import SensorScript, render
from .runtime import Configuration, RuntimeFault, SeededRandom
from .syntax import Expr, Label, Loc, MUT, Program, children, rebuild, walk
from .typeck import main_type


def _outcome(rendered: str, outputs: list) -> str:
    logs = "".join(f" {ch}:{t}" for ch, t in outputs)
    return rendered + (f" |{logs}" if logs else "")


# ---------------------------------------------------------------- purity


def lifted_receivers(prog: Program) -> list:
    _, _, checker = main_type(prog)
    return [t0 for _, t0 in checker.facts.lifted.values()]


def expected_deterministic(prog: Program) -> bool:
    """Syntactic classification: no lifted call has a mut capability receiver."""
    return not any(t.mdf is MUT and prog.cap_of(t.name) for t in lifted_receivers(prog))


# ---------------------------------------------------------------- replay


@dataclass
class ReplayReport:
    program: str
    seeds: list
    outcomes: dict  # run id -> outcome text
    steps: dict  # run id -> step count
    errors: dict = field(default_factory=dict)  # run id -> error text

    @property
    def distinct(self) -> list[str]:
        return sorted(set(self.outcomes.values()))

    @property
    def verdict(self) -> str:
        if self.errors:
            return "inconclusive"
        return "deterministic" if len(self.distinct) == 1 else "nondeterministic"

    def as_dict(self) -> dict:
        return {"program": self.program, "seeds": self.seeds, "distinct": self.distinct,
                "verdict": self.verdict, "steps": self.steps, "errors": self.errors}


def replay_determinism(prog: Program, seeds, *, parallel: bool = True, workers: int = 4,
                       script: Optional[SensorScript] = None, max_steps: int = 1_000_000,
                       name: str = "<program>") -> ReplayReport:
    seeds = list(seeds)
    report = ReplayReport(name, seeds, {}, {})
    runs = [(f"seed {s}", lambda s=s: runtime.run(prog, SeededRandom(s), script=script,
                                                   max_steps=max_steps)) for s in seeds]
    if parallel:
        runs.append(("parallel", lambda: runtime.run_parallel(prog, workers, script=script,
                                                             max_steps=max_steps)))
    for key, thunk in runs:
        try:
            res = thunk()
        except RuntimeFault as exc:
            report.errors[key] = f"{exc.code}: {exc}"
            continue
        report.outcomes[key] = _outcome(res.rendered, res.outputs)
        report.steps[key] = res.stats.steps
    return report


# ---------------------------------------------------------------- races


@dataclass
class RaceReport:
    program: str
    log: dict  # loc -> [(worker, field, (start, end))] in order
    overlaps: list
    runs: int = 1
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.overlaps

    def as_dict(self) -> dict:
        return {"program": self.program, "runs": self.runs, "updates": sum(map(len, self.log.values())),
                "overlaps": [[str(a), str(b)] for a, b in self.overlaps], "errors": self.errors}


def race_check(prog: Program, *, repetitions: int = 10, workers: int = 4,
               script: Optional[SensorScript] = None, max_steps: int = 1_000_000,
               name: str = "<program>") -> RaceReport:
    log: dict = {}
    overlaps: list = []
    errors: list = []
    for rep in range(repetitions):
        try:
            res = runtime.run_parallel(prog, workers, seed=rep, script=script, max_steps=max_steps)
        except RuntimeFault as exc:
            errors.append(f"run {rep}: {exc.code}: {exc}")
            continue
        for u in res.config.updates:
            log.setdefault(f"run{rep}:L{u.loc}", []).append((u.worker, u.field, (u.start, u.end)))
        overlaps.extend(res.races)
    return RaceReport(name, log, overlaps, repetitions, errors)


# ---------------------------------------------------------------- enumeration


def canonical(c: Configuration) -> tuple:
    """Configuration key with locations and labels renamed in discovery order."""
    locs: dict[int, int] = {}
    labs: dict[int, int] = {}
    order: list[int] = []
    owner = {m.label: n for n, rec in c.memory.items() for m in rec.mailbox}

    def see_loc(n: int):
        if n not in locs:
            locs[n] = len(locs)
            order.append(n)

    def scan(e: Expr):
        for node in walk(e):
            if isinstance(node, Loc):
                see_loc(node.id)
            elif isinstance(node, Label) and node.id not in labs:
                labs[node.id] = len(labs)
                if node.id in owner:
                    see_loc(owner[node.id])

    def rename(e: Expr) -> Expr:
        match e:
            case Loc(n):
                return Loc(locs[n])
            case Label(n):
                return Label(labs[n])
        kids = children(e)
        return rebuild(e, tuple(rename(k) for k in kids)) if kids else e

    scan(c.main)
    i = 0
    pending = sorted(c.memory)
    while True:
        while i < len(order):
            rec = c.memory.get(order[i])
            i += 1
            if rec is None:
                continue
            for f in rec.fields:
                scan(f)
            for m in rec.mailbox:
                if m.label not in labs:
                    labs[m.label] = len(labs)
                scan(m.head)
                scan(m.tail)
        rest = [n for n in pending if n not in locs]
        if not rest:
            break
        see_loc(rest[0])

    records = tuple(
        (rec.cls, tuple(rename(f) for f in rec.fields),
         tuple((labs[m.label], rename(m.head), rename(m.tail)) for m in rec.mailbox))
        for rec in (c.memory[n] for n in order if n in c.memory))
    cursors = tuple(sorted((locs.get(n, -1 - n), ch, k) for (n, ch), k in c.host.cursors.items()))
    return rename(c.main), records, cursors, tuple(c.host.outputs)


@dataclass
class EnumReport:
    program: str
    values: set
    states: int
    complete: bool  # False when a depth or state bound cut the search

    @property
    def singleton(self) -> bool:
        return len(self.values) == 1

    def as_dict(self) -> dict:
        return {"program": self.program, "values": sorted(self.values), "states": self.states,
                "complete": self.complete}


def enumerate_schedules(prog: Program, depth_bound: int = 200, *, max_states: int = 20_000,
                        script: Optional[SensorScript] = None, memoize: bool = True,
                        name: str = "<program>") -> EnumReport:
    """Depth-first search over all redex choices, garbage excluded."""
    memo: dict[tuple, frozenset] = {}
    visited = [0]
    complete = [True]

    def explore(c: Configuration, depth: int) -> frozenset:
        if runtime.is_terminal(c):
            return frozenset({_outcome(render(c.main, c.memory), c.host.outputs)})
        if runtime.focus(c.main).kind == runtime.EMPTY:
            return frozenset({"error: empty-signal-in-main"})
        key = canonical(c) if memoize else None
        if memoize and key in memo:
            return memo[key]
        visited[0] += 1
        if depth >= depth_bound or visited[0] > max_states:
            complete[0] = False
            return frozenset()
        rs = runtime.enabled_redexes(c)
        if not rs:
            out = frozenset({"error: stuck"})
        else:
            acc: set = set()
            for r in rs:
                nxt = c.copy()
                runtime.step(nxt, r)
                acc |= explore(nxt, depth + 1)
            out = frozenset(acc)
        if memoize:
            memo[key] = out
        return out

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, depth_bound * 4 + 1000))
    try:
        values = explore(runtime.initial(prog, script), 0)
    finally:
        sys.setrecursionlimit(limit)
    return EnumReport(name, set(values), len(memo) if memoize else visited[0], complete[0])


# ---------------------------------------------------------------- verification


@dataclass
class VerifyReport:
    program: str
    expected_deterministic: bool
    replay: ReplayReport
    races: RaceReport
    enumeration: Optional[EnumReport] = None

    @property
    def failures(self) -> list[str]:
        out = []
        if self.replay.errors:
            out.append("some runs failed: " + "; ".join(f"{k}: {v}" for k, v in self.replay.errors.items()))
        if self.expected_deterministic and len(self.replay.distinct) > 1:
            out.append(f"expected deterministic but observed {len(self.replay.distinct)} outcomes")
        if self.races.errors:
            out.append("some parallel runs failed: " + "; ".join(self.races.errors))
        if self.races.overlaps:
            out.append(f"{len(self.races.overlaps)} overlapping field updates")
        if self.enumeration is not None:
            if self.expected_deterministic and len(self.enumeration.values) > 1:
                out.append("schedule enumeration found several outcomes")
            if not self.enumeration.complete:
                out.append("schedule enumeration hit its bound")
        return out

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"program": self.program, "expected_deterministic": self.expected_deterministic,
                "ok": self.ok, "failures": self.failures, "replay": self.replay.as_dict(),
                "races": self.races.as_dict(),
                "enumeration": self.enumeration.as_dict() if self.enumeration else None}


def verify(prog: Program, *, seeds: int = 20, enumerate_depth: Optional[int] = None,
           race_runs: int = 10, workers: int = 4, script: Optional[SensorScript] = None,
           max_steps: int = 1_000_000, name: str = "<program>") -> VerifyReport:
    det = expected_deterministic(prog)
    replay = replay_determinism(prog, range(seeds), workers=workers, script=script,
                                max_steps=max_steps, name=name)
    races = race_check(prog, repetitions=race_runs, workers=workers, script=script,
                       max_steps=max_steps, name=name)
    enum = None
    if enumerate_depth is not None:
        enum = enumerate_schedules(prog, enumerate_depth, script=script, name=name)
    return VerifyReport(name, det, replay, races, enum)

