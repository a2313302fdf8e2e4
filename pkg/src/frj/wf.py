"""Well-formedness of class tables and of runtime configurations."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

from .syntax import (
    ClassDecl, Cond, Expr, InterfaceDecl, Let, Memory, Program, Span, Type, Var, IMM, MUT,
    CAPSULE, children, labels, locations, walk,
)

# bullet identifiers used in reports
UNIQUE_DECLS = "unique-decl-names"
UNIQUE_METHODS = "unique-method-names"
UNIQUE_FIELDS = "unique-field-names"
UNIQUE_PARAMS = "unique-param-names"
PARAM_THIS = "param-not-this"
CAPSULE_LINEAR = "capsule-linearity"
FIELD_MDF = "field-modifier"
SIGNAL_IMM = "signal-type-imm"
IMPLEMENTS = "implements-interfaces"
EXTENDS = "extends-interfaces"
CTOR_SHAPE = "constructor-mirrors-fields"
LOC_DANGLING = "locations-in-dom"
LABEL_UNBACKED = "usedS-in-domS"
LABEL_UNIQUE = "unique-message-labels"
EMPTY_LABEL = "empty-signal-not-label"


@dataclass(frozen=True)
class Violation:
    bullet: str
    entity: str
    message: str
    span: Optional[Span] = None

    def render(self, filename: str = "<input>") -> str:
        line, col = (self.span.line, self.span.col) if self.span else (0, 0)
        return f"{filename}:{line}:{col}: error: [{self.bullet}] {self.message}"


@dataclass
class WfReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, bullet: str, entity: str, message: str, span: Optional[Span] = None):
        self.violations.append(Violation(bullet, entity, message, span))

    def render(self, filename: str = "<input>") -> str:
        return "\n".join(v.render(filename) for v in self.violations)


def _dupes(names) -> list[str]:
    return [n for n, c in Counter(names).items() if c > 1]


def capsule_uses(e: Expr, x: str) -> int:
    """Syntactic uses of ``x``; the two ternary branches count as their maximum."""
    match e:
        case Var(n):
            return int(n == x)
        case Cond(test, then, other):
            return capsule_uses(test, x) + max(capsule_uses(then, x), capsule_uses(other, x))
        case Let(name, _, init, body):
            return capsule_uses(init, x) + (0 if name == x else capsule_uses(body, x))
    return sum(capsule_uses(k, x) for k in children(e))


def _local_types(e: Expr):
    for node in walk(e):
        if isinstance(node, Let) and node.type is not None:
            yield node.type, node.span


def _check_type(report: WfReport, ty: Type, where: str, span):
    if ty.depth > 0 and ty.mdf is not IMM:
        report.add(SIGNAL_IMM, where, f"signal type {ty} in {where} must have the imm modifier", span)


def check_program(p: Program) -> WfReport:
    report = WfReport()
    user = list(p.decls)
    builtin = {d.name for d in p.prelude}
    for d in user:
        if d.name in builtin:
            report.add(UNIQUE_DECLS, d.name, f"{d.name} redefines a predefined class", d.span)
    for name in _dupes(d.name for d in user):
        first = next(d for d in user if d.name == name)
        report.add(UNIQUE_DECLS, name, f"{name} is declared more than once", first.span)

    for d in user:
        if isinstance(d, ClassDecl):
            _check_class(report, p, d)
        else:
            _check_interface(report, p, d)
    if p.main is not None:
        for ty, span in _local_types(p.main):
            _check_type(report, ty, "main", span)
    return report


def _check_header_params(report: WfReport, owner: str, h, body: Optional[Expr]):
    where = f"{owner}.{h.name}"
    names = [q.name for q in h.params]
    for n in _dupes(names):
        report.add(UNIQUE_PARAMS, where, f"parameter {n} of {where} is declared more than once", h.span)
    if "this" in names:
        report.add(PARAM_THIS, where, f"{where} has a parameter named this", h.span)
    _check_type(report, h.ret, where, h.span)
    for q in h.params:
        _check_type(report, q.type, where, q.span)
        if body is not None and q.type.mdf is CAPSULE:
            uses = capsule_uses(body, q.name)
            if uses > 1:
                report.add(CAPSULE_LINEAR, where,
                           f"capsule parameter {q.name} of {where} is used {uses} times", q.span)
    if body is not None:
        for ty, span in _local_types(body):
            _check_type(report, ty, where, span)


def _check_class(report: WfReport, p: Program, d: ClassDecl):
    for n in _dupes(m.name for m in d.methods):
        report.add(UNIQUE_METHODS, d.name, f"method {n} is declared more than once in {d.name}", d.span)
    for n in _dupes(f.name for f in d.fields):
        report.add(UNIQUE_FIELDS, d.name, f"field {n} is declared more than once in {d.name}", d.span)
    for f in d.fields:
        if f.type.mdf not in (IMM, MUT):
            report.add(FIELD_MDF, d.name, f"field {d.name}.{f.name} has modifier {f.type.mdf}; "
                       "fields may only be imm or mut", f.span)
        _check_type(report, f.type, f"{d.name}.{f.name}", f.span)
    if d.ctor is not None:
        mirror = [(q.type, q.name) for q in d.ctor] == [(f.type, f.name) for f in d.fields]
        if not mirror:
            report.add(CTOR_SHAPE, d.name, f"constructor of {d.name} must take exactly its fields, "
                       "in order and with identical types", d.span)
    for m in d.methods:
        _check_header_params(report, d.name, m.header, m.body)
    for sup in d.implements:
        target = p.table.get(sup)
        if not isinstance(target, InterfaceDecl):
            what = "a class" if target is not None else "undeclared"
            report.add(IMPLEMENTS, d.name, f"{d.name} implements {sup}, which is {what}", d.span)


def _check_interface(report: WfReport, p: Program, d: InterfaceDecl):
    for n in _dupes(h.name for h in d.headers):
        report.add(UNIQUE_METHODS, d.name, f"method {n} is declared more than once in {d.name}", d.span)
    for h in d.headers:
        _check_header_params(report, d.name, h, None)
    for sup in d.extends:
        target = p.table.get(sup)
        if not isinstance(target, InterfaceDecl):
            what = "a class" if target is not None else "undeclared"
            report.add(EXTENDS, d.name, f"{d.name} extends {sup}, which is {what}", d.span)


# ---------------------------------------------------------------- configurations


def dom_s(mem: Memory) -> set[int]:
    return {m.label for rec in mem.values() for m in rec.mailbox}


def used_s(entity: Union[Expr, Memory]) -> set[int]:
    if isinstance(entity, dict):
        out: set[int] = set()
        for rec in entity.values():
            for v in rec.fields:
                out |= labels(v)
            for m in rec.mailbox:
                out |= labels(m.head) | labels(m.tail)
        return out
    return labels(entity)


def check_config(mem: Memory, e: Expr) -> WfReport:
    report = WfReport()
    for loc in sorted(locations(e) - mem.keys()):
        report.add(LOC_DANGLING, f"L{loc}", f"main expression refers to L{loc}, which is not in memory")
    all_labels = []
    for key, rec in mem.items():
        reach = set()
        for v in rec.fields:
            reach |= locations(v)
        for m in rec.mailbox:
            reach |= locations(m.head) | locations(m.tail)
            if not isinstance(m.label, int) or isinstance(m.label, bool):
                report.add(EMPTY_LABEL, f"L{key}", f"message on L{key} is labelled by {m.label!r}")
            all_labels.append(m.label)
        for loc in sorted(reach - mem.keys()):
            report.add(LOC_DANGLING, f"L{key}", f"record L{key} refers to L{loc}, which is not in memory")
    for s in _dupes(all_labels):
        report.add(LABEL_UNIQUE, f"S{s}", f"label S{s} labels more than one message")
    missing = (used_s(e) | used_s(mem)) - set(all_labels)
    for s in sorted(missing):
        report.add(LABEL_UNBACKED, f"S{s}", f"label S{s} is used but no pending message carries it")
    return report
