"""Small-step reduction of configurations ``μ | e``.

Each actor processes the message at the front of its mailbox; lifted calls and
explicit signals append. Substitutions of completed or terminated signals are
global over memory and the main expression.
"""
from __future__ import annotations

import random
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from . import wf
from .builtins import Host, SensorScript, call_capability, call_primitive, render
from .syntax import (
    Call, Cond, Done, EmptySignal, Expr, FieldGet, FieldSet, Head, Label, Let, LiftCall,
    Lit, Loc, Message, New, Program, Record, SignalCons, Tail, children, is_signal_value,
    is_value, labels, locations, rebuild, subst_label, subst_vars,
)


class RuntimeFault(Exception):
    """A run that could not reach a final value; carries the configuration."""

    code = "runtime-error"

    def __init__(self, message: str, config: Optional[Configuration] = None):
        super().__init__(message)
        self.config = config


class StuckConfiguration(RuntimeFault):
    code = "stuck"


class StepLimitExceeded(RuntimeFault):
    code = "step-limit"


class EmptySignalInMain(RuntimeFault):
    code = "empty-signal-in-main"


class InvariantViolation(RuntimeFault):
    code = "internal"


# ---------------------------------------------------------------- configurations


@dataclass
class Stats:
    steps: int = 0
    allocations: int = 0
    messages_created: int = 0
    messages_completed: int = 0
    messages_emptied: int = 0
    gc_collections: int = 0
    records_collected: int = 0
    rules: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "rules"}
        d["rules"] = dict(sorted(self.rules.items()))
        return d


@dataclass
class UpdateEntry:
    """One field update; ``start``/``end`` are coordinator sequence numbers."""

    loc: int
    field: str
    step: int
    worker: int
    start: int
    end: int


@dataclass
class Configuration:
    program: Program
    memory: dict
    main: Expr
    host: Host = field(default_factory=Host)
    step_count: int = 0
    next_loc: int = 1
    next_label: int = 1
    stats: Stats = field(default_factory=Stats)
    updates: list = field(default_factory=list)

    def copy(self) -> Configuration:
        return Configuration(self.program, {k: r.copy() for k, r in self.memory.items()}, self.main,
                             self.host.copy(), self.step_count, self.next_loc, self.next_label, Stats())

    def fresh_loc(self) -> int:
        n = self.next_loc
        self.next_loc += 1
        self.stats.allocations += 1
        return n

    def fresh_label(self) -> int:
        n = self.next_label
        self.next_label += 1
        self.stats.messages_created += 1
        return n


def initial(program: Program, script: Optional[SensorScript] = None, echo: bool = False) -> Configuration:
    if program.main is None:
        raise ValueError("program has no main expression")
    return Configuration(program, {}, program.main, Host(script or SensorScript(), echo=echo))


# ---------------------------------------------------------------- decomposition

VALUE, REDEX, EMPTY, BLOCKED, STUCK = "value", "redex", "empty", "blocked", "stuck"


@dataclass(frozen=True)
class Focus:
    kind: str
    rule: str = ""
    node: Optional[Expr] = None
    path: tuple = ()


def _eval_positions(e: Expr) -> range:
    match e:
        case Call() | LiftCall() | New() | FieldSet():
            return range(len(children(e)))
        case FieldGet() | Head() | Tail() | Let() | Cond():
            return range(1)
    return range(0)


def _redex_rule(e: Expr) -> Focus:
    match e:
        case Call(Loc(), _, _):
            return Focus(REDEX, "mCall", e)
        case Call(Lit(), _, _):
            return Focus(REDEX, "prim", e)
        case LiftCall(Loc() | Lit(), _, _):
            return Focus(REDEX, "liftS", e)
        case FieldGet(Loc(), _):
            return Focus(REDEX, "fAccess", e)
        case FieldSet(Loc(), _, _):
            return Focus(REDEX, "fUpdate", e)
        case New():
            return Focus(REDEX, "new", e)
        case SignalCons():
            return Focus(REDEX, "explicitS", e)
        case Head(Done()):
            return Focus(REDEX, "head", e)
        case Tail(Done()):
            return Focus(REDEX, "tail", e)
        case Tail(EmptySignal()):
            return Focus(REDEX, "tailEmpty", e)
        case Head(EmptySignal()):
            return Focus(EMPTY, "Empty", e)
        case Head(Label()) | Tail(Label()):
            return Focus(BLOCKED, "", e)
        case Let():
            return Focus(REDEX, "let", e)
        case Cond(Lit("Bool", _), _, _):
            return Focus(REDEX, "cond", e)
    return Focus(STUCK, "", e)


def focus(e: Expr) -> Focus:
    """Split ``e`` as E[r] following the evaluation-context grammar."""
    if is_value(e):
        return Focus(VALUE)
    kids = children(e)
    for i in _eval_positions(e):
        if not is_value(kids[i]):
            f = focus(kids[i])
            return Focus(f.kind, f.rule, f.node, (i, *f.path))
    return _redex_rule(e)


def plug(e: Expr, path: tuple, r: Expr) -> Expr:
    if not path:
        return r
    kids = list(children(e))
    kids[path[0]] = plug(kids[path[0]], path[1:], r)
    return rebuild(e, tuple(kids))


# ---------------------------------------------------------------- redexes


@dataclass(frozen=True)
class Site:
    kind: str  # main | head | tail | complete | empty | garbage
    loc: Optional[int] = None
    label: Optional[int] = None

    def __str__(self) -> str:
        match self.kind:
            case "main" | "garbage":
                return self.kind
            case "head" | "tail":
                return f"L{self.loc}:S{self.label}.{self.kind}"
        return f"L{self.loc}:S{self.label}"


@dataclass(frozen=True)
class Redex:
    site: Site
    rule: str

    def __str__(self) -> str:
        return f"{self.rule} @{self.site}"


MAIN = Site("main")
GARBAGE = Redex(Site("garbage"), "garbage")


def enabled_redexes(c: Configuration, include_garbage: bool = False) -> list[Redex]:
    out: list[Redex] = []
    f = focus(c.main)
    if f.kind == REDEX:
        out.append(Redex(MAIN, f.rule))
    for loc in sorted(c.memory):
        rec = c.memory[loc]
        if not rec.mailbox:
            continue
        m = rec.mailbox[0]
        fh = focus(m.head)
        if fh.kind == VALUE:
            if is_signal_value(m.tail):
                out.append(Redex(Site("complete", loc, m.label), "msgComplete"))
                continue
            ft = focus(m.tail)
            if ft.kind == REDEX:
                out.append(Redex(Site("tail", loc, m.label), ft.rule))
            elif ft.kind == EMPTY:
                out.append(Redex(Site("empty", loc, m.label), "Empty"))
        elif fh.kind == REDEX:
            out.append(Redex(Site("head", loc, m.label), fh.rule))
        elif fh.kind == EMPTY:
            out.append(Redex(Site("empty", loc, m.label), "Empty"))
    if include_garbage and len(reachable(c)) < len(c.memory):
        out.append(GARBAGE)
    return out


def _field_index(c: Configuration, rec: Record, name: str) -> int:
    for i, (_, f) in enumerate(c.program.fields(rec.cls)):
        if f == name:
            return i
    raise InvariantViolation(f"{rec.cls} has no field {name}", c)


def _record(c: Configuration, loc: Loc) -> Record:
    try:
        return c.memory[loc.id]
    except KeyError:
        raise InvariantViolation(f"dangling location L{loc.id}", c) from None


def _contract(c: Configuration, rule: str, e: Expr, worker: int, seq: tuple) -> tuple[Expr, str]:
    """Reduct of a single redex plus a short detail string for traces."""
    match rule, e:
        case "fAccess", FieldGet(loc, name):
            rec = _record(c, loc)
            return rec.fields[_field_index(c, rec, name)], f"L{loc.id}.{name}"
        case "fUpdate", FieldSet(loc, name, v):
            rec = _record(c, loc)
            rec.fields[_field_index(c, rec, name)] = v
            c.updates.append(UpdateEntry(loc.id, name, c.step_count + 1, worker, *seq))
            return v, f"L{loc.id}.{name}"
        case "new", New(cls, args):
            n = c.fresh_loc()
            c.memory[n] = Record(cls, list(args))
            return Loc(n), f"L{n}"
        case "mCall", Call(loc, m, args):
            rec = _record(c, loc)
            md = c.program.cls(rec.cls).method(m)
            if md is None:
                raise InvariantViolation(f"{rec.cls} has no method {m}", c)
            if md.native is not None:
                return call_capability(c.host, md.native, loc, args), f"L{loc.id}.{m}"
            env = {"this": loc, **{p.name: v for p, v in zip(md.header.params, args)}}
            return subst_vars(md.body, env), f"L{loc.id}.{m}"
        case "prim", Call(lit, m, args):
            return call_primitive(lit, m, args), f"{lit.kind}.{m}"
        case "liftS", LiftCall(recv, m, args):
            s = c.fresh_label()
            msg = Message(s, Call(recv, m, tuple(Head(a) for a in args)),
                          LiftCall(recv, m, tuple(Tail(a) for a in args)))
            if isinstance(recv, Loc):
                _record(c, recv).mailbox.append(msg)
                target = recv.id
            else:
                target = c.fresh_loc()
                c.memory[target] = Record("Object", [], [msg])
            return Label(s), f"S{s} on L{target}"
        case "explicitS", SignalCons(h, t):
            s, n = c.fresh_label(), c.fresh_loc()
            c.memory[n] = Record("Object", [], [Message(s, h, t)])
            return Label(s), f"S{s} on L{n}"
        case "head", Head(Done(v, _)):
            return v, ""
        case "tail", Tail(Done(_, rest)):
            return rest, ""
        case "tailEmpty", Tail(EmptySignal()):
            return EmptySignal(), ""
        case "let", Let(name, _, v, body):
            return (body if name is None else subst_vars(body, {name: v})), name or ""
        case "cond", Cond(Lit(_, b), then, other):
            return (then if b else other), str(bool(b)).lower()
    raise InvariantViolation(f"rule {rule} does not apply", c)


def substitute_label(c: Configuration, label: int, v: Expr) -> None:
    """Global ``[S := v]`` over the main expression and every record."""
    c.main = subst_label(c.main, label, v)
    for rec in c.memory.values():
        rec.fields = [subst_label(f, label, v) for f in rec.fields]
        rec.mailbox = [Message(m.label, subst_label(m.head, label, v), subst_label(m.tail, label, v))
                       for m in rec.mailbox]


def step(c: Configuration, r: Redex, worker: int = 0, seq: tuple = (0, 0)) -> str:
    """Fire ``r`` in place; returns the trace detail."""
    site = r.site
    detail = ""
    if site.kind == "garbage":
        detail = f"{collect_garbage(c)} records"
        c.stats.gc_collections += 1
        c.stats.rules["garbage"] += 1
        return detail
    if site.kind == "main":
        f = focus(c.main)
        if f.kind != REDEX or f.rule != r.rule:
            raise InvariantViolation(f"redex {r} is not enabled", c)
        reduct, detail = _contract(c, f.rule, f.node, worker, seq)
        c.main = plug(c.main, f.path, reduct)
    else:
        rec = c.memory.get(site.loc)
        if rec is None or not rec.mailbox or rec.mailbox[0].label != site.label:
            raise InvariantViolation(f"redex {r} is not enabled", c)
        m = rec.mailbox[0]
        if site.kind in ("complete", "empty"):
            rec.mailbox.pop(0)
            if site.kind == "complete":
                substitute_label(c, m.label, Done(m.head, m.tail))
                c.stats.messages_completed += 1
            else:
                substitute_label(c, m.label, EmptySignal())
                c.stats.messages_emptied += 1
            detail = f"S{m.label}"
        else:
            target = m.head if site.kind == "head" else m.tail
            f = focus(target)
            if f.kind != REDEX or f.rule != r.rule:
                raise InvariantViolation(f"redex {r} is not enabled", c)
            reduct, detail = _contract(c, f.rule, f.node, worker, seq)
            m = rec.mailbox[0]  # a self-send appended; the front is unchanged
            new = plug(target, f.path, reduct)
            rec.mailbox[0] = Message(m.label, new, m.tail) if site.kind == "head" \
                else Message(m.label, m.head, new)
    c.step_count += 1
    c.stats.steps += 1
    c.stats.rules[r.rule] += 1
    return detail


# ---------------------------------------------------------------- garbage


def _entity_refs(e: Expr) -> tuple[set, set]:
    return locations(e), labels(e)


def reachable(c: Configuration) -> set[int]:
    """Locations reachable from main through fields, messages and label owners."""
    owner = {m.label: loc for loc, rec in c.memory.items() for m in rec.mailbox}
    locs, labs = _entity_refs(c.main)
    todo = list(locs) + [owner[s] for s in labs if s in owner]
    seen: set[int] = set()
    while todo:
        n = todo.pop()
        if n in seen or n not in c.memory:
            continue
        seen.add(n)
        rec = c.memory[n]
        for e in (*rec.fields, *(x for m in rec.mailbox for x in (m.head, m.tail))):
            ls, ss = _entity_refs(e)
            todo.extend(ls)
            todo.extend(owner[s] for s in ss if s in owner)
    return seen


def collect_garbage(c: Configuration) -> int:
    keep = reachable(c)
    dropped = [n for n in c.memory if n not in keep]
    for n in dropped:
        del c.memory[n]
    c.stats.records_collected += len(dropped)
    return len(dropped)


def has_pending_work(c: Configuration) -> bool:
    return any(c.memory[n].mailbox for n in reachable(c))


def is_terminal(c: Configuration) -> bool:
    return is_value(c.main) and not has_pending_work(c)


# ---------------------------------------------------------------- schedulers


class Scheduler:
    name = "scheduler"

    def pick(self, redexes: list[Redex], c: Configuration) -> Redex:
        raise NotImplementedError


class SeededRandom(Scheduler):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def pick(self, redexes, c):
        return self.rng.choice(redexes)


class RoundRobin(Scheduler):
    """Cycles over sites in location order, starting after the last one served."""

    name = "round-robin"

    def __init__(self):
        self.last: tuple = (-2, -2)  # before main

    @staticmethod
    def _key(r: Redex) -> tuple:
        return (-1, -1) if r.site.kind == "main" else (r.site.loc, r.site.label)

    def pick(self, redexes, c):
        later = [r for r in redexes if self._key(r) > self.last]
        chosen = later[0] if later else redexes[0]
        self.last = self._key(chosen)
        return chosen


class MainFirst(Scheduler):
    name = "main-first"

    def pick(self, redexes, c):
        return redexes[0]


SCHEDULERS = ("random", "round-robin", "main-first", "parallel")


def make_scheduler(policy: str, seed: int = 0) -> Scheduler:
    match policy:
        case "random":
            return SeededRandom(seed)
        case "round-robin":
            return RoundRobin()
        case "main-first":
            return MainFirst()
    raise ValueError(f"unknown scheduler {policy!r}")


# ---------------------------------------------------------------- running


@dataclass(frozen=True)
class GcPolicy:
    mode: str = "every"  # never | every | terminal
    every: int = 1024

    @classmethod
    def parse(cls, text: str, every: int = 1024) -> GcPolicy:
        """``never``, ``terminal``, ``every`` or ``every-K``."""
        if text in ("never", "terminal"):
            return cls(text, every)
        if text == "every":
            return cls("every", every)
        if text.startswith("every-") and text[6:].isdigit() and int(text[6:]) > 0:
            return cls("every", int(text[6:]))
        raise ValueError(f"bad gc policy {text!r}")

    def due(self, steps: int) -> bool:
        return self.mode == "every" and steps % self.every == 0


@dataclass
class RunResult:
    value: Expr
    rendered: str
    outputs: list
    stats: Stats
    trace: list
    config: Configuration
    races: list = field(default_factory=list)

    def log(self, channel: str) -> list[str]:
        return [t for ch, t in self.outputs if ch == channel]


def _check_preserved(c: Configuration, r: Redex):
    report = wf.check_config(c.memory, c.main)
    if not report.ok:
        raise InvariantViolation(f"step {c.step_count} ({r}) broke well-formedness:\n{report.render()}", c)


def _trace_line(c: Configuration, r: Redex, detail: str, worker: Optional[int] = None) -> str:
    who = f" w{worker}" if worker is not None else ""
    tail = f" [{detail}]" if detail else ""
    return f"#{c.step_count} {r.rule} @{r.site}{tail}{who}"


def _gc(c: Configuration, trace: Optional[list]):
    step(c, GARBAGE)
    if trace is not None:
        trace.append(f"#{c.step_count} garbage @gc")


def run(program: Program, scheduler: Optional[Scheduler] = None, *, max_steps: int = 1_000_000,
        gc: GcPolicy = GcPolicy(), script: Optional[SensorScript] = None, trace: bool = False,
        debug_preserve: bool = False, echo: bool = False) -> RunResult:
    sched = scheduler or SeededRandom(0)
    c = initial(program, script, echo)
    lines: Optional[list] = [] if trace else None
    while True:
        if is_value(c.main) and not has_pending_work(c):
            break
        if focus(c.main).kind == EMPTY:
            raise EmptySignalInMain("main expression reached head(@[])", c)
        if c.step_count >= max_steps:
            raise StepLimitExceeded(f"no final value after {max_steps} steps", c)
        rs = enabled_redexes(c)
        if not rs:
            raise StuckConfiguration("no enabled redex and main is not final", c)
        r = sched.pick(rs, c)
        detail = step(c, r)
        if lines is not None:
            lines.append(_trace_line(c, r, detail))
        if debug_preserve:
            _check_preserved(c, r)
        if gc.due(c.step_count):
            _gc(c, lines)
    if gc.mode != "never":
        _gc(c, lines)
    return RunResult(c.main, render(c.main, c.memory), list(c.host.outputs), c.stats, lines or [], c)


def run_parallel(program: Program, workers: int = 4, seed: int = 0, *, max_steps: int = 1_000_000,
                 gc: GcPolicy = GcPolicy(), script: Optional[SensorScript] = None, trace: bool = False,
                 debug_preserve: bool = False, echo: bool = False) -> RunResult:
    """Worker threads own disjoint sites; every step goes through one coordinator lock.

    Main belongs to worker 0 and the mailbox of location L to worker ``L % n``.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    c = initial(program, script, echo)
    lines: Optional[list] = [] if trace else None
    lock = threading.Lock()
    stop = threading.Event()
    failure: list[BaseException] = []
    seq = [0]

    def owner(r: Redex) -> int:
        return 0 if r.site.kind == "main" else r.site.loc % workers

    def worker(wid: int):
        rng = random.Random(seed * 1_000_003 + wid)
        while not stop.is_set():
            with lock:
                if stop.is_set():
                    return
                try:
                    if is_value(c.main) and not has_pending_work(c):
                        stop.set()
                        return
                    if focus(c.main).kind == EMPTY:
                        raise EmptySignalInMain("main expression reached head(@[])", c)
                    if c.step_count >= max_steps:
                        raise StepLimitExceeded(f"no final value after {max_steps} steps", c)
                    rs = enabled_redexes(c)
                    if not rs:
                        raise StuckConfiguration("no enabled redex and main is not final", c)
                    mine = [r for r in rs if owner(r) == wid]
                    if mine:
                        r = rng.choice(mine)
                        start = seq[0]
                        seq[0] += 1
                        detail = step(c, r, wid, (start, seq[0]))
                        if lines is not None:
                            lines.append(_trace_line(c, r, detail, wid))
                        if debug_preserve:
                            _check_preserved(c, r)
                        if gc.due(c.step_count):
                            _gc(c, lines)
                except BaseException as exc:  # noqa: BLE001 - handed to the caller
                    failure.append(exc)
                    stop.set()
                    return
            # release the coordinator so other workers get a turn
            stop.wait(0) if mine else stop.wait(0.0001)

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failure:
        raise failure[0]
    if gc.mode != "never":
        _gc(c, lines)
    return RunResult(c.main, render(c.main, c.memory), list(c.host.outputs), c.stats, lines or [], c,
                     races=find_overlaps(c.updates))


def find_overlaps(updates: list) -> list[tuple]:
    """Pairs of updates to the same record by different workers whose windows intersect."""
    by_loc: dict[int, list] = {}
    for u in updates:
        by_loc.setdefault(u.loc, []).append(u)
    out = []
    for entries in by_loc.values():
        entries = sorted(entries, key=lambda u: u.start)
        for a, b in zip(entries, entries[1:]):
            if b.start < a.end and a.worker != b.worker:
                out.append((a, b))
    return out
