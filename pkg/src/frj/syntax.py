"""Abstract syntax for FRJ programs, runtime values, memories and messages.

Expressions are immutable and hashable. Source spans ride along on every
node but never take part in equality, so a re-parsed program compares equal
to the original regardless of layout.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class Modifier(enum.Enum):
    IMM = "imm"
    MUT = "mut"
    CAPSULE = "capsule"
    READ = "read"

    def __str__(self) -> str:
        return self.value


IMM, MUT, CAPSULE, READ = Modifier.IMM, Modifier.MUT, Modifier.CAPSULE, Modifier.READ


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    length: int = 1


@dataclass(frozen=True)
class Type:
    depth: int
    mdf: Modifier
    name: str

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("signal depth must be non-negative")

    @property
    def is_signal(self) -> bool:
        return self.depth > 0

    def lifted(self) -> Type:
        return Type(self.depth + 1, self.mdf, self.name)

    def element(self) -> Type:
        if self.depth == 0:
            raise ValueError(f"{self} is not a signal type")
        return Type(self.depth - 1, self.mdf, self.name)

    def with_mdf(self, mdf: Modifier) -> Type:
        return Type(self.depth, mdf, self.name)

    def __str__(self) -> str:
        at = "@" * self.depth
        if self.mdf is IMM:
            return f"{at}{self.name}"
        return f"{at}{self.mdf} {self.name}"


def T(text: str) -> Type:
    """Build a type from its surface form, e.g. ``T("@Bool")`` or ``T("mut Box")``."""
    text = text.strip()
    depth = len(text) - len(text.lstrip("@"))
    rest = text[depth:].split()
    if len(rest) == 1:
        return Type(depth, IMM, rest[0])
    return Type(depth, Modifier(rest[0]), rest[1])


def _span():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Call:
    recv: Expr
    meth: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class LiftCall:
    recv: Expr
    meth: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class FieldGet:
    recv: Expr
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class FieldSet:
    recv: Expr
    name: str
    value: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class New:
    cls: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class SignalCons:
    head: Expr
    tail: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class EmptySignal:
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Head:
    arg: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Tail:
    arg: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Let:
    """``T x = init; body``. A ``None`` name is an expression statement."""

    name: Optional[str]
    type: Optional[Type]
    init: Expr
    body: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Cond:
    test: Expr
    then: Expr
    other: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Lit:
    kind: str  # Int | Float | Bool | Str
    value: object
    span: Optional[Span] = _span()


# runtime-only forms


@dataclass(frozen=True)
class Loc:
    id: int
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Label:
    id: int
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Done:
    """A completed signal node ``[v; S]``; ``rest`` is itself a signal value."""

    value: Expr
    rest: Expr
    span: Optional[Span] = _span()


Expr = Union[Var, Call, LiftCall, FieldGet, FieldSet, New, SignalCons, EmptySignal,
             Head, Tail, Let, Cond, Lit, Loc, Label, Done]

RUNTIME_ONLY = (Loc, Label, Done)


def is_value(e: Expr) -> bool:
    if isinstance(e, (Loc, Label, EmptySignal, Lit)):
        return True
    if isinstance(e, Done):
        return is_value(e.value) and is_signal_value(e.rest)
    return False


def is_signal_value(e: Expr) -> bool:
    return isinstance(e, (Label, EmptySignal)) or (isinstance(e, Done) and is_value(e))


def children(e: Expr) -> tuple:
    match e:
        case Call(recv, _, args) | LiftCall(recv, _, args):
            return (recv, *args)
        case FieldGet(recv, _):
            return (recv,)
        case FieldSet(recv, _, value):
            return (recv, value)
        case New(_, args):
            return tuple(args)
        case SignalCons(h, t):
            return (h, t)
        case Head(a) | Tail(a):
            return (a,)
        case Let(_, _, init, body):
            return (init, body)
        case Cond(a, b, c):
            return (a, b, c)
        case Done(v, rest):
            return (v, rest)
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def subst_var(e: Expr, name: str, v: Expr) -> Expr:
    """Replace free occurrences of variable ``name``; ``v`` must be closed."""
    return subst_vars(e, {name: v})


def subst_vars(e: Expr, env: dict) -> Expr:
    """Simultaneously replace free variables by closed values."""
    match e:
        case Var(n):
            return env.get(n, e)
        case Lit() | Loc() | Label() | EmptySignal():
            return e
        case Let(x, ty, init, body):
            inner = env
            if x in env:
                inner = {k: w for k, w in env.items() if k != x}
            body2 = subst_vars(body, inner) if inner else body
            return Let(x, ty, subst_vars(init, env), body2, e.span)
    return rebuild(e, tuple(subst_vars(k, env) for k in children(e)))


def subst_label(e: Expr, label: int, v: Expr) -> Expr:
    """Replace every ``Label(label)`` in ``e``; returns ``e`` itself when nothing changes."""
    match e:
        case Label(i):
            return v if i == label else e
        case Var() | Lit() | Loc() | EmptySignal():
            return e
    kids = children(e)
    new_kids = tuple(subst_label(k, label, v) for k in kids)
    if all(a is b for a, b in zip(kids, new_kids)):
        return e
    return rebuild(e, new_kids)


def rebuild(e: Expr, kids: tuple) -> Expr:
    """Rebuild ``e`` with replaced children, in ``children`` order."""
    match e:
        case Call(_, m, _):
            return Call(kids[0], m, tuple(kids[1:]), e.span)
        case LiftCall(_, m, _):
            return LiftCall(kids[0], m, tuple(kids[1:]), e.span)
        case FieldGet(_, f):
            return FieldGet(kids[0], f, e.span)
        case FieldSet(_, f, _):
            return FieldSet(kids[0], f, kids[1], e.span)
        case New(c, _):
            return New(c, tuple(kids), e.span)
        case SignalCons():
            return SignalCons(kids[0], kids[1], e.span)
        case Head():
            return Head(kids[0], e.span)
        case Tail():
            return Tail(kids[0], e.span)
        case Let(x, ty, _, _):
            return Let(x, ty, kids[0], kids[1], e.span)
        case Cond():
            return Cond(kids[0], kids[1], kids[2], e.span)
        case Done():
            return Done(kids[0], kids[1], e.span)
    return e


def locations(e: Expr) -> set[int]:
    return {n.id for n in walk(e) if isinstance(n, Loc)}


def labels(e: Expr) -> set[int]:
    return {n.id for n in walk(e) if isinstance(n, Label)}


def free_vars(e: Expr) -> set[str]:
    match e:
        case Var(n):
            return {n}
        case Let(x, _, init, body):
            inner = free_vars(body)
            inner.discard(x)
            return free_vars(init) | inner
    out: set[str] = set()
    for k in children(e):
        out |= free_vars(k)
    return out


# ---------------------------------------------------------------- declarations


@dataclass(frozen=True)
class Param:
    type: Type
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class MethodHeader:
    mdf: Modifier
    ret: Type
    name: str
    params: tuple = ()
    span: Optional[Span] = _span()

    def signature(self) -> tuple:
        return (self.mdf, self.ret, tuple(p.type for p in self.params))


@dataclass(frozen=True)
class MethodDecl:
    header: MethodHeader
    body: Optional[Expr]  # None for builtin natives
    native: Optional[str] = None

    @property
    def name(self) -> str:
        return self.header.name


@dataclass(frozen=True)
class ClassDecl:
    name: str
    is_capability: bool = False
    implements: tuple = ()
    fields: tuple = ()  # of Param
    ctor: Optional[tuple] = None  # explicit constructor params, None when omitted
    methods: tuple = ()
    builtin: bool = False
    span: Optional[Span] = _span()

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        return None


@dataclass(frozen=True)
class InterfaceDecl:
    name: str
    extends: tuple = ()
    headers: tuple = ()
    builtin: bool = False
    span: Optional[Span] = _span()


Decl = Union[ClassDecl, InterfaceDecl]


class LookupError_(KeyError):
    """Unknown class, interface, field or method name."""

    def __str__(self) -> str:
        return self.args[0] if self.args else "lookup error"


@dataclass
class Program:
    decls: tuple  # user declarations, in source order
    main: Optional[Expr] = None
    prelude: tuple = field(default=(), repr=False)  # builtin declarations
    _table: dict = field(default=None, init=False, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        return self.decls == other.decls and self.main == other.main

    @property
    def table(self) -> dict[str, Decl]:
        if self._table is None:
            t: dict[str, Decl] = {}
            for d in (*self.prelude, *self.decls):
                t.setdefault(d.name, d)
            self._table = t
        return self._table

    def lookup(self, name: str) -> Decl:
        try:
            return self.table[name]
        except KeyError:
            raise LookupError_(f"unknown class or interface {name}") from None

    def cls(self, name: str) -> ClassDecl:
        d = self.lookup(name)
        if not isinstance(d, ClassDecl):
            raise LookupError_(f"{name} is an interface, not a class")
        return d

    def fields(self, name: str) -> list[tuple[Type, str]]:
        return [(p.type, p.name) for p in self.cls(name).fields]

    def cap_of(self, name: str) -> bool:
        d = self.lookup(name)
        return isinstance(d, ClassDecl) and d.is_capability

    def supertypes(self, name: str) -> set[str]:
        """``name`` plus every interface it transitively implements or extends."""
        seen = {name}
        todo = [name]
        while todo:
            d = self.table.get(todo.pop())
            if d is None:
                continue
            ups = d.implements if isinstance(d, ClassDecl) else d.extends
            for u in ups:
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        return seen

    def headers(self, name: str) -> dict[str, MethodHeader]:
        """All method headers visible on ``name`` (own first, then inherited)."""
        d = self.lookup(name)
        out: dict[str, MethodHeader] = {}
        if isinstance(d, ClassDecl):
            for m in d.methods:
                out.setdefault(m.name, m.header)
            return out
        for sup in [name, *sorted(self.supertypes(name) - {name})]:
            sd = self.table.get(sup)
            if isinstance(sd, InterfaceDecl):
                for h in sd.headers:
                    out.setdefault(h.name, h)
        return out


# ---------------------------------------------------------------- memory


@dataclass(frozen=True)
class Message:
    label: int
    head: Expr
    tail: Expr


@dataclass
class Record:
    """An object record; ``mailbox[0]`` is the message being processed, new ones are appended."""

    cls: str
    fields: list
    mailbox: list = field(default_factory=list)

    def copy(self) -> Record:
        return Record(self.cls, list(self.fields), list(self.mailbox))


Memory = dict  # int -> Record
