"""Primitive value classes, the predefined ``Object``, and scripted capability classes.

Primitives (Int, Float, Bool, Str) are inline literal values. Their methods are
native and take an ``imm`` receiver. ``Sensors``, ``AC`` and ``Console`` are
capability classes without fields; their cursor state and output logs live in a
host-side ``Host`` table keyed by location, so they stay valid actors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .syntax import (
    Call, ClassDecl, Done, EmptySignal, Expr, Head, InterfaceDecl, Label, Lit, Loc,
    MethodDecl, MethodHeader, Modifier, Param, SignalCons, T,
)

PRIMITIVES = ("Int", "Float", "Bool", "Str")

# binary operator -> builtin method name; `!x` is x.not(), `-x` is x.neg()
OPERATORS = {
    "||": "or", "&&": "and",
    "==": "eq", "!=": "neq",
    "<": "lt", "<=": "leq", ">": "gt", ">=": "geq",
    "+": "plus", "-": "minus",
    "*": "times", "/": "div",
}
PRECEDENCE = [("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/")]


def desugar_operator(op: str, lhs: Expr, rhs: Optional[Expr] = None, span=None) -> Expr:
    """``a + b`` becomes ``a.plus(b)``; unary ``!a`` / ``-a`` become ``a.not()`` / ``a.neg()``."""
    if rhs is None:
        return Call(lhs, {"!": "not", "-": "neg"}[op], (), span)
    return Call(lhs, OPERATORS[op], (rhs,), span)


# ---------------------------------------------------------------- declarations


def _m(mdf: str, ret: str, name: str, *params: str, native: str) -> MethodDecl:
    ps = tuple(Param(T(p), f"x{i}") for i, p in enumerate(params))
    return MethodDecl(MethodHeader(Modifier(mdf), T(ret), name, ps), None, native)


def _prim_methods(cls: str, ops: dict[str, tuple]) -> tuple:
    return tuple(_m("imm", ret, name, *params, native=f"{cls}.{name}") for name, (ret, *params) in ops.items())


_CMP = {n: ("Bool", None) for n in ("eq", "neq", "lt", "leq", "gt", "geq")}


def _with(ops: dict, arg: str) -> dict:
    return {k: (ret, arg) if p is None else (ret, p) for k, (ret, p) in ops.items()}


INT_OPS = {"plus": ("Int", "Int"), "minus": ("Int", "Int"), "times": ("Int", "Int"),
           "neg": ("Int",), "toFloat": ("Float",), "show": ("Str",), **_with(_CMP, "Int")}
FLOAT_OPS = {"plus": ("Float", "Float"), "minus": ("Float", "Float"), "times": ("Float", "Float"),
             "div": ("Float", "Float"), "neg": ("Float",), "show": ("Str",), **_with(_CMP, "Float")}
BOOL_OPS = {"and": ("Bool", "Bool"), "or": ("Bool", "Bool"), "not": ("Bool",),
            "eq": ("Bool", "Bool"), "neq": ("Bool", "Bool"), "show": ("Str",)}
STR_OPS = {"plus": ("Str", "Show"), "eq": ("Bool", "Str"), "neq": ("Bool", "Str"),
           "length": ("Int",), "show": ("Str",)}

SHOW = InterfaceDecl("Show", (), (MethodHeader(Modifier.IMM, T("Str"), "show", ()),), builtin=True)

PRELUDE: tuple = (
    ClassDecl("Object", builtin=True),
    SHOW,
    ClassDecl("Int", implements=("Show",), methods=_prim_methods("Int", INT_OPS), builtin=True),
    ClassDecl("Float", implements=("Show",), methods=_prim_methods("Float", FLOAT_OPS), builtin=True),
    ClassDecl("Bool", implements=("Show",), methods=_prim_methods("Bool", BOOL_OPS), builtin=True),
    ClassDecl("Str", implements=("Show",), methods=_prim_methods("Str", STR_OPS), builtin=True),
    ClassDecl("Sensors", is_capability=True, builtin=True, methods=(
        _m("mut", "@Bool", "clock", native="Sensors.clock"),
        _m("mut", "Float", "temp", "Bool", native="Sensors.temp"),
        _m("mut", "Float", "humidity", "Bool", native="Sensors.humidity"),
    )),
    ClassDecl("AC", is_capability=True, builtin=True, methods=(
        _m("mut", "Bool", "setPower", "Bool", native="AC.setPower"),
    )),
    ClassDecl("Console", is_capability=True, builtin=True, methods=(
        _m("mut", "Str", "print", "Str", native="Console.print"),
    )),
)

BUILTIN_NAMES = frozenset(d.name for d in PRELUDE)


# ---------------------------------------------------------------- scripts and host state


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class SensorScript:
    ticks: int = 0
    temps: tuple = ()
    humidities: tuple = ()

    @classmethod
    def parse(cls, text: str) -> SensorScript:
        """Line format: ``ticks N``, ``temps v1 v2 ...``, ``humidities v1 v2 ...``; ``#`` comments."""
        ticks, temps, hums = 0, (), ()
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            key, vals = line[0], line[1:]
            try:
                if key == "ticks":
                    if len(vals) != 1 or int(vals[0]) < 0:
                        raise ScriptError(f"line {n}: ticks takes one non-negative integer")
                    ticks = int(vals[0])
                elif key == "temps":
                    temps = tuple(float(v) for v in vals)
                elif key == "humidities":
                    hums = tuple(float(v) for v in vals)
                else:
                    raise ScriptError(f"line {n}: unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ScriptError):
                    raise
                raise ScriptError(f"line {n}: {exc}") from None
        return cls(ticks, temps, hums)

    def dump(self) -> str:
        def nums(vs):
            return " ".join(repr(float(v)) for v in vs)
        return f"ticks {self.ticks}\ntemps {nums(self.temps)}\nhumidities {nums(self.humidities)}\n"


@dataclass
class Host:
    """Side tables for scripted capabilities; part of a configuration's state."""

    script: SensorScript = field(default_factory=SensorScript)
    cursors: dict = field(default_factory=dict)  # (loc, channel) -> next index
    outputs: list = field(default_factory=list)  # (channel, text)
    echo: bool = False

    def copy(self) -> Host:
        return Host(self.script, dict(self.cursors), list(self.outputs), self.echo)

    def log(self, channel: str) -> list[str]:
        return [text for ch, text in self.outputs if ch == channel]


# ---------------------------------------------------------------- natives


class NativeError(RuntimeError):
    pass


def _int64(n: int) -> int:
    return (n + 2**63) % 2**64 - 2**63


def _fdiv(a: float, b: float) -> float:
    if b != 0.0:
        return a / b
    if a == 0.0 or math.isnan(a):
        return math.nan
    return math.copysign(math.inf, a) * math.copysign(1.0, b)


def render_prim(lit: Lit) -> str:
    """Text used by ``Str.plus`` and ``show``: floats as shortest round-trip decimals."""
    if lit.kind == "Bool":
        return "true" if lit.value else "false"
    if lit.kind == "Float":
        return repr(float(lit.value))
    return str(lit.value)


_ARITH: dict[str, Callable] = {
    "plus": lambda a, b: a + b, "minus": lambda a, b: a - b, "times": lambda a, b: a * b,
    "eq": lambda a, b: a == b, "neq": lambda a, b: a != b, "lt": lambda a, b: a < b,
    "leq": lambda a, b: a <= b, "gt": lambda a, b: a > b, "geq": lambda a, b: a >= b,
}


def call_primitive(recv: Lit, meth: str, args: tuple) -> Lit:
    kind, a = recv.kind, recv.value
    b = args[0].value if args else None
    if meth == "show":
        return Lit("Str", render_prim(recv))
    if kind == "Str":
        match meth:
            case "plus":
                return Lit("Str", a + render_prim(args[0]))
            case "eq" | "neq":
                return Lit("Bool", _ARITH[meth](a, b))
            case "length":
                return Lit("Int", len(a))
    elif kind == "Bool":
        match meth:
            case "and":
                return Lit("Bool", a and b)
            case "or":
                return Lit("Bool", a or b)
            case "not":
                return Lit("Bool", not a)
            case "eq" | "neq":
                return Lit("Bool", _ARITH[meth](a, b))
    elif kind == "Int":
        if meth == "neg":
            return Lit("Int", _int64(-a))
        if meth == "toFloat":
            return Lit("Float", float(a))
        if meth in ("plus", "minus", "times"):
            return Lit("Int", _int64(_ARITH[meth](a, b)))
        if meth in _ARITH:
            return Lit("Bool", _ARITH[meth](a, b))
    elif kind == "Float":
        if meth == "neg":
            return Lit("Float", -a)
        if meth == "div":
            return Lit("Float", _fdiv(a, b))
        if meth in ("plus", "minus", "times"):
            return Lit("Float", _ARITH[meth](a, b))
        if meth in _ARITH:
            return Lit("Bool", _ARITH[meth](a, b))
    raise NativeError(f"no builtin method {kind}.{meth}")


def _ticks(n: int) -> Expr:
    sig: Expr = EmptySignal()
    for _ in range(n):
        sig = SignalCons(Lit("Bool", True), sig)
    return sig


def _scripted(host: Host, loc: Loc, channel: str, values: tuple) -> Expr:
    key = (loc.id, channel)
    i = host.cursors.get(key, 0)
    if i >= len(values):
        # exhausted: inside a message this fires rule (Empty) and ends the signal
        return Head(EmptySignal())
    host.cursors[key] = i + 1
    return Lit("Float", float(values[i]))


def call_capability(host: Host, native: str, recv: Loc, args: tuple) -> Expr:
    """Reduct of a native capability method; may advance cursors and append outputs."""
    match native:
        case "Sensors.clock":
            return _ticks(host.script.ticks)
        case "Sensors.temp":
            return _scripted(host, recv, "temp", host.script.temps)
        case "Sensors.humidity":
            return _scripted(host, recv, "humidity", host.script.humidities)
        case "AC.setPower":
            on = bool(args[0].value)
            host.outputs.append(("ac", "on" if on else "off"))
            return args[0]
        case "Console.print":
            host.outputs.append(("console", args[0].value))
            if host.echo:
                print(args[0].value)
            return args[0]
    raise NativeError(f"unknown native {native}")


# ---------------------------------------------------------------- rendering


def render(e: Expr, mem: Optional[dict] = None, _seen: frozenset = frozenset()) -> str:
    """Location-independent text of a value, used for outputs and determinism checks."""
    from .pretty import show_lit

    match e:
        case Lit(kind, value):
            return show_lit(kind, value)
        case EmptySignal():
            return "@[]"
        case Done(v, rest):
            return f"[{render(v, mem, _seen)}; {render(rest, mem, _seen)}]"
        case Label():
            return "<pending>"
        case Loc(i):
            if mem is None or i not in mem:
                return "<object>"
            rec = mem[i]
            if i in _seen:
                return f"<cycle {rec.cls}>"
            inner = ", ".join(render(v, mem, _seen | {i}) for v in rec.fields)
            return f"{rec.cls}({inner})"
    from .pretty import show
    return show(e)
