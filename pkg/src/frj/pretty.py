"""Concrete-syntax printer. ``parse(show_program(p)) == p`` for source programs."""
from __future__ import annotations

from .syntax import (
    Call, ClassDecl, Cond, Done, EmptySignal, Expr, FieldGet, FieldSet, Head, InterfaceDecl,
    Label, Let, LiftCall, Lit, Loc, Memory, MethodHeader, New, Program, SignalCons, Tail, Var,
)

_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def show_lit(kind: str, value) -> str:
    if kind == "Bool":
        return "true" if value else "false"
    if kind == "Str":
        return '"' + "".join(_ESCAPES.get(ch, ch) for ch in value) + '"'
    return repr(value)


def _recv(e: Expr) -> str:
    text = show(e)
    if isinstance(e, (Lit, Cond, FieldSet, Let)):
        return f"({text})"
    return text


def _args(args) -> str:
    return ", ".join(show(a) for a in args)


def show(e: Expr) -> str:
    match e:
        case Var(n):
            return n
        case Lit(kind, value):
            return show_lit(kind, value)
        case Call(recv, m, args):
            return f"{_recv(recv)}.{m}({_args(args)})"
        case LiftCall(recv, m, args):
            return f"{_recv(recv)}.@{m}({_args(args)})"
        case FieldGet(recv, f):
            return f"{_recv(recv)}.{f}"
        case FieldSet(recv, f, v):
            return f"({_recv(recv)}.{f} = {show(v)})"
        case New(c, args):
            return f"new {c}({_args(args)})"
        case SignalCons(h, t):
            return f"@[{show(h)}; {show(t)}]"
        case EmptySignal():
            return "@[]"
        case Head(a):
            return f"head({show(a)})"
        case Tail(a):
            return f"tail({show(a)})"
        case Cond(a, b, c):
            return f"({show(a)} ? {show(b)} : {show(c)})"
        case Let():
            return "{ " + " ".join(body_lines(e)) + " }"
        case Loc(i):
            return f"L{i}"
        case Label(i):
            return f"S{i}"
        case Done(v, rest):
            return f"[{show(v)}; {show(rest)}]"
    raise TypeError(f"cannot print {e!r}")


def body_lines(e: Expr) -> list[str]:
    lines = []
    while isinstance(e, Let):
        init = show(e.init)
        if isinstance(e.init, FieldSet):
            init = init[1:-1]
        if e.name is None:
            lines.append(f"{init};")
        else:
            lines.append(f"{e.type} {e.name} = {init};")
        e = e.body
    lines.append(f"return {show(e)};")
    return lines


def show_header(h: MethodHeader) -> str:
    params = ", ".join(f"{p.type} {p.name}" for p in h.params)
    return f"{h.mdf} method {h.ret} {h.name}({params})"


def show_decl(d, indent: str = "  ") -> str:
    if isinstance(d, InterfaceDecl):
        ext = f" extends {', '.join(d.extends)}" if d.extends else ""
        lines = [f"interface {d.name}{ext} {{"]
        lines += [f"{indent}{show_header(h)};" for h in d.headers]
        lines.append("}")
        return "\n".join(lines)
    assert isinstance(d, ClassDecl)
    cap = "capability " if d.is_capability else ""
    impl = f" implements {', '.join(d.implements)}" if d.implements else ""
    lines = [f"{cap}class {d.name}{impl} {{"]
    lines += [f"{indent}{p.type} {p.name};" for p in d.fields]
    if d.ctor is not None:
        params = ", ".join(f"{p.type} {p.name}" for p in d.ctor)
        inits = " ".join(f"this.{p.name} = {p.name};" for p in d.ctor)
        lines.append(f"{indent}{d.name}({params}) {{ {inits} }}")
    for m in d.methods:
        body = " ".join(body_lines(m.body)) if m.body is not None else ""
        lines.append(f"{indent}{show_header(m.header)} {{ {body} }}")
    lines.append("}")
    return "\n".join(lines)


def show_program(p: Program) -> str:
    parts = [show_decl(d) for d in p.decls]
    if p.main is not None:
        parts.append("main {\n  " + "\n  ".join(body_lines(p.main)) + "\n}")
    return "\n\n".join(parts) + "\n"


def show_memory(mem: Memory) -> str:
    """Memory in the calculus' notation; the active message is printed last."""
    out = []
    for loc in sorted(mem):
        rec = mem[loc]
        vals = ", ".join(show(v) for v in rec.fields)
        msgs = " ".join(f"S{m.label}[{show(m.head)}; {show(m.tail)}]" for m in reversed(rec.mailbox))
        out.append(f"L{loc} -> {rec.cls}({vals}){' ' + msgs if msgs else ''}")
    return "\n".join(out)
