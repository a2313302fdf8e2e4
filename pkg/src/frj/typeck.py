"""Reference- and object-capability type checker.

Checking is bidirectional: ``synth`` computes the smallest type it can derive,
optionally guided by an expected type, and every premise of the declarative
rules becomes a subtype test. ``new`` receivers are the one place where two
incomparable typings exist (``imm C`` via newImm, ``mut C`` via new), so call
sites try both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .syntax import (
    Call, ClassDecl, Cond, Done, EmptySignal, Expr, FieldGet, FieldSet, Head, InterfaceDecl,
    Label, Let, LiftCall, Lit, Loc, LookupError_, MethodDecl, MethodHeader, Modifier, New,
    Program, SignalCons, Span, Tail, Type, Var, IMM, MUT, CAPSULE, READ,
)


class TypeDiagnostic(Exception):
    def __init__(self, code: str, rule: str, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.code = code
        self.rule = rule
        self.message = message
        self.span = span

    def render(self, filename: str = "<input>") -> str:
        line, col = (self.span.line, self.span.col) if self.span else (0, 0)
        return f"{filename}:{line}:{col}: error: ({self.rule}) {self.message} [{self.code}]"

    def __repr__(self) -> str:
        return f"TypeDiagnostic({self.code!r}, {self.message!r})"


# ---------------------------------------------------------------- modifier algebra


def mdf_leq(a: Modifier, b: Modifier) -> bool:
    return a is b or a is CAPSULE or b is READ


def subtype(prog: Program, a: Type, b: Type) -> bool:
    prog.lookup(a.name)
    prog.lookup(b.name)
    return a.depth == b.depth and mdf_leq(a.mdf, b.mdf) and b.name in prog.supertypes(a.name)


def compose(field_type: Type, recv: Modifier) -> Type:
    """Type of ``e.f`` for a field of ``field_type`` read through a ``recv`` reference."""
    if field_type.mdf not in (IMM, MUT):
        raise ValueError(f"field types are imm or mut, not {field_type.mdf}")
    if recv is IMM:
        return field_type.with_mdf(IMM)
    if recv in (MUT, CAPSULE):
        return field_type
    return field_type.with_mdf(READ if field_type.mdf is MUT else IMM)


def _swap(t: Type, mapping: dict) -> Type:
    return t.with_mdf(mapping.get(t.mdf, t.mdf))


@dataclass(frozen=True)
class MethodType:
    params: tuple  # receiver first
    ret: Type

    def swap(self, mapping: dict) -> MethodType:
        return MethodType(tuple(_swap(p, mapping) for p in self.params), _swap(self.ret, mapping))

    def __str__(self) -> str:
        return f"{', '.join(map(str, self.params))} -> {self.ret}"


PROMOTIONS = ({}, {MUT: CAPSULE}, {MUT: CAPSULE, READ: IMM})


def meth_types(prog: Program, recv: Type, name: str) -> list[MethodType]:
    """Declared type of ``recv.name`` followed by its promoted variants, duplicates removed."""
    if recv.depth:
        raise TypeDiagnostic("method-not-found", "mCall", f"signal {recv} has no method {name}")
    header = prog.headers(recv.name).get(name)
    if header is None:
        raise TypeDiagnostic("method-not-found", "mCall", f"{recv.name} has no method {name}")
    if not mdf_leq(recv.mdf, header.mdf):
        raise TypeDiagnostic(
            "receiver-capability", "mCall",
            f"{recv} cannot be the receiver of {header.mdf} method {recv.name}.{name}")
    base = MethodType((recv, *(p.type for p in header.params)), header.ret)
    out: list[MethodType] = []
    for mapping in PROMOTIONS:
        mt = base.swap(mapping)
        if mt not in out:
            out.append(mt)
    return out


def valid_actor(prog: Program, t: Type) -> bool:
    if t.depth == 0 and t.mdf is IMM:
        return True
    d = prog.lookup(t.name)
    return (t.depth == 0 and isinstance(d, ClassDecl) and d.is_capability
            and all(f.type.mdf is not MUT for f in d.fields))


# ---------------------------------------------------------------- environments


@dataclass(frozen=True)
class TypeEnv:
    gamma: dict = field(default_factory=dict)
    sigma: dict = field(default_factory=dict)  # Loc id -> Type (instrumented modifier)
    cap: bool = False
    hidden: frozenset = frozenset()

    def bind(self, name: str, t: Type) -> TypeEnv:
        return TypeEnv({**self.gamma, name: t}, self.sigma, self.cap, self.hidden - {name})

    def only_imm_capsule(self) -> TypeEnv:
        drop = {x for x, t in self.gamma.items() if t.mdf not in (IMM, CAPSULE)}
        keep = {x: t for x, t in self.gamma.items() if x not in drop}
        return TypeEnv(keep, self.sigma, self.cap, self.hidden | drop)


@dataclass
class Facts:
    """What the checker learned, for post-hoc properties and the harness."""

    lifted: dict = field(default_factory=dict)  # id(LiftCall) -> (node, receiver Type)
    news: dict = field(default_factory=dict)  # id(New) -> (node, rule, cap flag)
    captures: dict = field(default_factory=dict)  # id(SignalCons) -> (node, {var: Type})


class Checker:
    def __init__(self, prog: Program):
        self.prog = prog
        self.facts = Facts()
        self._memo: dict = {}

    # -- helpers
    def fail(self, code: str, rule: str, message: str, e: Expr):
        raise TypeDiagnostic(code, rule, message, getattr(e, "span", None))

    def known(self, t: Type, e: Expr) -> Type:
        if t.name not in self.prog.table:
            self.fail("unknown-class", "L", f"unknown class or interface {t.name}", e)
        return t

    def sub(self, a: Type, b: Type) -> bool:
        try:
            return subtype(self.prog, a, b)
        except LookupError_ as err:
            raise TypeDiagnostic("unknown-class", "sub", str(err)) from None

    def check(self, env: TypeEnv, e: Expr, expected: Type) -> Type:
        key = (id(e), expected, id(env))
        hit = self._memo.get(key)
        if hit is not None:
            t, err, _ = hit
            if err is not None:
                raise err
            return t
        try:
            t = self.synth(env, e, expected)
            if not self.sub(t, expected):
                self.fail("type-mismatch", "sub", f"expected {expected} but found {t}", e)
        except TypeDiagnostic as err:
            self._memo[key] = (None, err, (e, env))
            raise
        self._memo[key] = (t, None, (e, env))
        return t

    def receiver_types(self, env: TypeEnv, e: Expr) -> list[Type]:
        """Typings to try for a receiver: both rules for ``new``, otherwise the minimal one."""
        if not isinstance(e, New):
            return [self.synth(env, e)]
        out, first_err = [], None
        for mdf in (IMM, MUT):
            try:
                out.append(self.synth_new(env, e, mdf))
            except TypeDiagnostic as err:
                first_err = first_err or err
        if not out:
            raise first_err
        return out

    # -- synthesis
    def synth(self, env: TypeEnv, e: Expr, expected: Optional[Type] = None) -> Type:
        match e:
            case Var(name):
                if name in env.hidden:
                    self.fail("non-imm-capture", "fullSignal",
                              f"{name} is not imm or capsule and cannot be captured by a signal", e)
                if name not in env.gamma:
                    self.fail("unbound-variable", "x", f"unbound variable {name}", e)
                return env.gamma[name]
            case Lit(kind):
                return Type(0, IMM, kind)
            case Loc(i):
                if i not in env.sigma:
                    self.fail("unknown-location", "L", f"no type recorded for L{i}", e)
                return env.sigma[i]
            case Label(i):
                if ("S", i) not in env.sigma:
                    self.fail("unknown-location", "L", f"no type recorded for S{i}", e)
                return env.sigma[("S", i)]
            case Done(v, rest):
                hint = expected.element() if expected is not None and expected.depth else None
                tv = self.synth(env, v, hint)
                sig = Type(tv.depth + 1, IMM, tv.name)
                self.check(env, rest, sig)
                return sig
            case FieldGet(recv, name):
                return self.synth_field(env, e, recv, name)
            case FieldSet(recv, name, value):
                return self.synth_update(env, e, recv, name, value)
            case New():
                return self.synth_new_expected(env, e, expected)
            case Call(recv, meth, args):
                return self.synth_call(env, e, recv, meth, args)
            case LiftCall(recv, meth, args):
                return self.synth_lift(env, e, recv, meth, args)
            case SignalCons(h, t):
                return self.synth_signal(env, e, h, t, expected)
            case EmptySignal():
                if expected is None or expected.depth == 0:
                    self.fail("cannot-infer-signal", "emptySignal",
                              "cannot infer the element type of @[] here", e)
                return expected
            case Head(arg):
                hint = expected.lifted() if expected is not None else None
                t = self.synth(env, arg, hint)
                if t.depth == 0:
                    self.fail("not-a-signal", "head", f"head expects a signal but found {t}", e)
                return t.element()
            case Tail(arg):
                hint = expected if expected is not None and expected.depth else None
                t = self.synth(env, arg, hint)
                if t.depth == 0:
                    self.fail("not-a-signal", "tail", f"tail expects a signal but found {t}", e)
                return t
            case Let():
                return self.synth_body(env, e, expected, [])
            case Cond(test, then, other):
                self.check(env, test, Type(0, IMM, "Bool"))
                if expected is not None:
                    self.check(env, then, expected)
                    self.check(env, other, expected)
                    return expected
                ta, tb = self.synth(env, then), self.synth(env, other)
                if self.sub(ta, tb):
                    return tb
                if self.sub(tb, ta):
                    return ta
                self.fail("type-mismatch", "sub", f"branches have unrelated types {ta} and {tb}", e)
        self.fail("internal", "?", f"cannot type {type(e).__name__}", e)

    def synth_body(self, env: TypeEnv, e: Expr, expected: Optional[Type], errors: Optional[list]) -> Type:
        """Statement chain; with ``errors`` given, failed statements are recorded and skipped."""
        while isinstance(e, Let):
            try:
                if e.type is not None:
                    self.known(e.type, e)
                    self.check(env, e.init, e.type)
                else:
                    self.synth(env, e.init)
            except TypeDiagnostic as err:
                if errors is None:
                    raise
                errors.append(err)
            if e.name is not None:
                env = env.bind(e.name, e.type)
            e = e.body
        if errors is None:
            return self.check(env, e, expected) if expected is not None else self.synth(env, e)
        try:
            return self.check(env, e, expected) if expected is not None else self.synth(env, e)
        except TypeDiagnostic as err:
            errors.append(err)
            return expected

    def field_type(self, recv_t: Type, name: str, e: Expr, rule: str) -> Type:
        d = self.prog.table.get(recv_t.name)
        if recv_t.depth or not isinstance(d, ClassDecl):
            self.fail("unknown-field", rule, f"{recv_t} has no fields", e)
        for f in d.fields:
            if f.name == name:
                return f.type
        self.fail("unknown-field", rule, f"{recv_t.name} has no field {name}", e)

    def synth_field(self, env, e, recv, name) -> Type:
        t0 = self.receiver_types(env, recv)[0]
        return compose(self.field_type(t0, name, e, "fAccess"), t0.mdf)

    def synth_update(self, env, e, recv, name, value) -> Type:
        cands = self.receiver_types(env, recv)
        t0 = next((t for t in cands if mdf_leq(t.mdf, MUT)), None)
        if t0 is None:
            self.fail("field-update-on-non-mut", "fUpdate",
                      f"cannot update field {name} through a {cands[0].mdf} reference", e)
        ft = self.field_type(t0, name, e, "fUpdate")
        self.check(env, value, ft)
        return ft

    def synth_new_expected(self, env, e: New, expected: Optional[Type]) -> Type:
        imm_t = Type(0, IMM, e.cls)
        if expected is None or self.sub_safe(imm_t, expected):
            try:
                return self.synth_new(env, e, IMM)
            except TypeDiagnostic as err:
                try:
                    return self.synth_new(env, e, MUT)
                except TypeDiagnostic as err2:
                    raise (err2 if err2.code == "capability-instantiation" else err) from None
        return self.synth_new(env, e, MUT)

    def sub_safe(self, a: Type, b: Type) -> bool:
        try:
            return self.sub(a, b)
        except LookupError_:
            return False

    def synth_new(self, env: TypeEnv, e: New, mdf: Modifier) -> Type:
        """Rule newImm when ``mdf`` is imm, rule new when it is mut."""
        d = self.prog.table.get(e.cls)
        if not isinstance(d, ClassDecl):
            what = "an interface" if d is not None else "not declared"
            self.fail("unknown-class", "new", f"cannot instantiate {e.cls}: it is {what}", e)
        if d.builtin and d.name not in ("Object",) and not d.is_capability:
            self.fail("unknown-class", "new", f"{e.cls} values are written as literals", e)
        if len(e.args) != len(d.fields):
            self.fail("arity-mismatch", "new",
                      f"{e.cls} takes {len(d.fields)} arguments, got {len(e.args)}", e)
        rule = "newImm" if mdf is IMM else "new"
        for arg, f in zip(e.args, d.fields):
            self.check(env, arg, f.type.with_mdf(IMM) if mdf is IMM else f.type)
        if mdf is MUT and d.is_capability and not env.cap:
            self.fail("capability-instantiation", "new",
                      f"capability class {e.cls} can only be instantiated in main "
                      "or in a mut method of a capability class", e)
        self.facts.news[id(e)] = (e, rule, env.cap)
        return Type(0, mdf, e.cls)

    def _pick(self, env, e, recv, meth, args, lifted: bool) -> tuple[Type, MethodType]:
        """Try receiver typings and method types, most promoted first; first full match wins."""
        rule = "mCall@" if lifted else "mCall"
        recvs = self.receiver_types(env, recv)
        errors: list[TypeDiagnostic] = []
        deeper: list[TypeDiagnostic] = []  # failures past receiver acceptance
        for t0 in recvs:
            if lifted and not valid_actor(self.prog, t0):
                errors.append(TypeDiagnostic(
                    "invalid-actor-receiver", rule,
                    f"{t0} is not a valid actor: it must be imm, or a capability "
                    "class instance without mut fields", e.span))
                continue
            try:
                cands = meth_types(self.prog, t0, meth)
            except TypeDiagnostic as err:
                err.rule, err.span = rule, err.span or e.span
                errors.append(err)
                continue
            if len(cands[0].params) != len(args) + 1:
                errors.append(TypeDiagnostic(
                    "arity-mismatch", rule,
                    f"{t0.name}.{meth} takes {len(cands[0].params) - 1} arguments, got {len(args)}", e.span))
                continue
            for mt in reversed(cands):
                if not self.sub(t0, mt.params[0]):
                    continue
                if lifted and not mdf_leq(mt.ret.mdf, IMM):
                    deeper.append(TypeDiagnostic(
                        "lifted-result-not-imm", rule,
                        f"signal values must be imm but {t0.name}.{meth} returns {mt.ret}", e.span))
                    continue
                try:
                    for a, p in zip(args, mt.params[1:]):
                        self.check(env, a, p.lifted() if lifted else p)
                except TypeDiagnostic as err:
                    deeper.append(err)
                    continue
                return t0, mt
        errors = deeper or errors
        if not errors:
            self.fail("type-mismatch", rule, f"no method type of {meth} accepts these arguments", e)
        raise min(errors, key=_severity_rank)

    def synth_call(self, env, e, recv, meth, args) -> Type:
        _, mt = self._pick(env, e, recv, meth, args, lifted=False)
        return mt.ret

    def synth_lift(self, env, e, recv, meth, args) -> Type:
        t0, mt = self._pick(env, e, recv, meth, args, lifted=True)
        self.facts.lifted[id(e)] = (e, t0)
        return mt.ret.with_mdf(IMM).lifted()

    def synth_signal(self, env, e, h, t, expected) -> Type:
        inner = env.only_imm_capsule()
        if expected is not None and expected.depth:
            self.check(inner, h, expected.element())
            self.check(inner, t, expected)
            sig = expected
        else:
            th = self.synth(inner, h)
            if th.mdf not in (IMM, CAPSULE):
                self.fail("type-mismatch", "fullSignal", f"signal values must be imm, found {th}", h)
            sig = th.with_mdf(IMM).lifted()
            self.check(inner, t, sig)
        self.facts.captures[id(e)] = (e, dict(inner.gamma))
        return sig


# the most specific failure explains a rejected call best
_RANK = ["receiver-capability", "invalid-actor-receiver", "capability-instantiation",
         "non-imm-capture", "field-update-on-non-mut", "lifted-result-not-imm"]


def _severity_rank(err: TypeDiagnostic) -> int:
    return _RANK.index(err.code) if err.code in _RANK else len(_RANK)


# ---------------------------------------------------------------- declarations


def check_method(prog: Program, cls: ClassDecl, m: MethodDecl, checker: Optional[Checker] = None) -> list:
    checker = checker or Checker(prog)
    if m.body is None:
        return []
    h = m.header
    env = TypeEnv({"this": Type(0, h.mdf, cls.name)}, cap=cls.is_capability and h.mdf is MUT)
    errors: list[TypeDiagnostic] = []
    for p in h.params:
        if p.type.name not in prog.table:
            errors.append(TypeDiagnostic("unknown-class", "method",
                                         f"unknown type {p.type} for parameter {p.name}", p.span))
        env = env.bind(p.name, p.type)
    if h.ret.name not in prog.table:
        errors.append(TypeDiagnostic("unknown-class", "method", f"unknown return type {h.ret}", h.span))
        return errors
    if errors:
        return errors
    checker.synth_body(env, m.body, h.ret, errors)
    return errors


def _override_ok(prog: Program, owner: str, h: MethodHeader, other: MethodHeader, sup: str, span) -> list:
    if h.signature() != other.signature():
        return [TypeDiagnostic(
            "override-signature-mismatch", "class",
            f"{owner}.{h.name} has type {_sig(h)} but {sup}.{h.name} has type {_sig(other)}; "
            "they must be identical", span)]
    return []


def _sig(h: MethodHeader) -> str:
    return f"{h.mdf} ({', '.join(str(p.type) for p in h.params)}) -> {h.ret}"


def check_class_table(prog: Program, checker: Optional[Checker] = None) -> list:
    checker = checker or Checker(prog)
    errors: list[TypeDiagnostic] = []
    for d in prog.decls:
        if isinstance(d, ClassDecl):
            for f in d.fields:
                if f.type.name not in prog.table:
                    errors.append(TypeDiagnostic("unknown-class", "class",
                                                 f"unknown type {f.type} for field {d.name}.{f.name}", f.span))
            for m in d.methods:
                errors += check_method(prog, d, m, checker)
            own = {m.name: m for m in d.methods}
            for sup in sorted(prog.supertypes(d.name) - {d.name}):
                sd = prog.table.get(sup)
                if not isinstance(sd, InterfaceDecl):
                    continue
                for h in sd.headers:
                    mine = own.get(h.name)
                    if mine is None:
                        errors.append(TypeDiagnostic(
                            "missing-interface-method", "class",
                            f"{d.name} implements {sup} but does not define {h.name}", d.span))
                    else:
                        errors += _override_ok(prog, d.name, mine.header, h, sup, mine.header.span or d.span)
        else:
            for sup in sorted(prog.supertypes(d.name) - {d.name}):
                sd = prog.table.get(sup)
                if not isinstance(sd, InterfaceDecl):
                    continue
                theirs = {h.name: h for h in sd.headers}
                for h in d.headers:
                    if h.name in theirs:
                        errors += _override_ok(prog, d.name, h, theirs[h.name], sup, h.span or d.span)
    if prog.main is not None:
        checker.synth_body(TypeEnv(cap=True), prog.main, None, errors)
    return sorted(errors, key=lambda err: (err.span.line, err.span.col) if err.span else (0, 0))


def type_of(prog: Program, env: TypeEnv, e: Expr, expected: Optional[Type] = None) -> Type:
    checker = Checker(prog)
    return checker.check(env, e, expected) if expected is not None else checker.synth(env, e)


def main_type(prog: Program) -> tuple[Optional[Type], list, Checker]:
    """Type of the main body, the diagnostics for the whole program, and the checker's facts."""
    checker = Checker(prog)
    errors = check_class_table(prog, checker)
    t = None
    if prog.main is not None and not errors:
        t = checker.synth_body(TypeEnv(cap=True), prog.main, None, None)
    return t, errors, checker
