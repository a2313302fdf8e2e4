"""Lexer and recursive-descent parser for ``.frj`` source."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import builtins
from .syntax import (
    Call, ClassDecl, Cond, EmptySignal, Expr, FieldGet, FieldSet, Head, InterfaceDecl, Let,
    LiftCall, Lit, MethodDecl, MethodHeader, Modifier, New, Param, Program, SignalCons, Span,
    Tail, Type, Var, IMM,
)

KEYWORDS = {
    "class", "interface", "implements", "extends", "method", "capability", "return", "new",
    "head", "tail", "main", "mut", "imm", "read", "capsule", "this", "true", "false",
}
MODIFIERS = {"imm", "mut", "read", "capsule"}


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    span: Span
    code: str = "syntax"

    def render(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.span.line}:{self.span.col}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(d.render() for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, int, float, str, op, eof
    text: str
    span: Span
    value: object = None


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)? | \d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<op>==|!=|>=|<=|&&|\|\||[{}()\[\];,.@=<>+\-*/!?:])
""", re.VERBOSE)

_UNESCAPE = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


def lex(text: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            bad = text[pos]
            kind = "unterminated string literal" if bad == '"' else f"unexpected character {bad!r}"
            diags.append(Diagnostic("error", kind, Span(line, col, 1), "lexical"))
            if bad == '"':
                end = text.find("\n", pos)
                pos = len(text) if end < 0 else end
            else:
                pos += 1
            continue
        kind, lexeme = m.lastgroup, m.group()
        span = Span(line, col, len(lexeme))
        if kind == "int":
            tokens.append(Token("int", lexeme, span, int(lexeme)))
        elif kind == "float":
            tokens.append(Token("float", lexeme, span, float(lexeme)))
        elif kind == "ident":
            tokens.append(Token("keyword" if lexeme in KEYWORDS else "ident", lexeme, span))
        elif kind == "str":
            body = re.sub(r"\\(.)", lambda g: _UNESCAPE.get(g.group(1), g.group(1)), lexeme[1:-1])
            tokens.append(Token("str", lexeme, span, body))
        elif kind == "op":
            tokens.append(Token("op", lexeme, span))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", Span(line, pos - line_start + 1, 0)))
    return tokens, diags


class _Sync(Exception):
    pass


class Parser:
    def __init__(self, text: str):
        self.tokens, self.diags = lex(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.tok
        return t.kind in ("op", "keyword") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        self.diags.append(Diagnostic("error", message, tok.span))
        raise _Sync()

    def describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r} but found {self.describe(self.tok)}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            self.error(f"expected {what} but found {self.describe(self.tok)}")
        return self.advance()

    def skip_to(self, *stops: str, consume: bool = True):
        """Skip tokens up to one of ``stops`` at bracket depth zero."""
        depth = 0
        while self.tok.kind != "eof":
            if depth == 0 and any(self.at(s) for s in stops):
                if consume and not self.at("}"):
                    self.advance()
                return
            if self.tok.text in ("(", "[", "{") and self.tok.kind == "op":
                depth += 1
            elif self.tok.text in (")", "]", "}") and self.tok.kind == "op":
                if depth == 0:
                    return
                depth -= 1
            self.advance()

    def recover(self, before: int):
        self.skip_to(";", "}")
        if self.i == before:
            self.advance()

    # -- program structure
    def program(self) -> Program:
        decls = []
        main = None
        while self.tok.kind != "eof":
            start = self.i
            try:
                if self.at("main"):
                    main_tok = self.advance()
                    if main is not None:
                        self.error("duplicate main block", main_tok)
                    main = self.block()
                else:
                    decls.append(self.decl())
            except _Sync:
                self.skip_to("}", consume=False)
                if self.at("}"):
                    self.advance()
                if self.i == start:
                    self.advance()
        return Program(tuple(decls), main, builtins.PRELUDE)

    def decl(self):
        start = self.tok
        is_cap = False
        if self.at("capability"):
            self.advance()
            is_cap = True
        if self.at("interface") and not is_cap:
            return self.interface()
        self.expect("class")
        name = self.ident("class name")
        implements = ()
        if self.at("implements"):
            self.advance()
            implements = self.name_list()
        self.expect("{")
        fields, ctor, methods = [], None, []
        while not self.at("}") and self.tok.kind != "eof":
            before = self.i
            try:
                if self.tok.kind == "ident" and self.tok.text == name.text and self.at("(", 1):
                    if ctor is not None:
                        self.error(f"duplicate constructor for {name.text}")
                    ctor = self.constructor()
                elif self.at("method") or (self.tok.text in MODIFIERS and self.at("method", 1)):
                    methods.append(self.method())
                else:
                    ty = self.type_()
                    fname = self.ident("field name")
                    self.expect(";")
                    fields.append(Param(ty, fname.text, fname.span))
            except _Sync:
                self.recover(before)
        self.expect("}")
        return ClassDecl(name.text, is_cap, implements, tuple(fields), ctor, tuple(methods),
                         span=start.span)

    def name_list(self) -> tuple:
        names = [self.ident("interface name").text]
        while self.at(","):
            self.advance()
            names.append(self.ident("interface name").text)
        return tuple(names)

    def interface(self):
        start = self.expect("interface")
        name = self.ident("interface name")
        extends = ()
        if self.at("extends"):
            self.advance()
            extends = self.name_list()
        self.expect("{")
        headers = []
        while not self.at("}") and self.tok.kind != "eof":
            before = self.i
            try:
                headers.append(self.header())
                self.expect(";")
            except _Sync:
                self.recover(before)
        self.expect("}")
        return InterfaceDecl(name.text, extends, tuple(headers), span=start.span)

    def constructor(self) -> tuple:
        self.advance()
        params = self.params()
        self.expect("{")
        for p in params:
            self.expect("this")
            self.expect(".")
            f = self.ident("field name")
            self.expect("=")
            x = self.ident("parameter name")
            if f.text != p.name or x.text != p.name:
                self.error(f"constructor must assign this.{p.name} = {p.name}", f)
            self.expect(";")
        if not self.at("}"):
            self.error("constructor body may only assign each parameter to its field")
        self.expect("}")
        return params

    def header(self) -> MethodHeader:
        start = self.tok
        mdf = IMM
        if self.tok.text in MODIFIERS and self.tok.kind == "keyword":
            mdf = Modifier(self.advance().text)
        self.expect("method")
        ret = self.type_()
        name = self.ident("method name")
        return MethodHeader(mdf, ret, name.text, self.params(), span=start.span)

    def method(self) -> MethodDecl:
        h = self.header()
        return MethodDecl(h, self.block())

    def params(self) -> tuple:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                ty = self.type_()
                # `this` is accepted here so that the well-formedness check can reject it
                x = self.advance() if self.at("this") else self.ident("parameter name")
                out.append(Param(ty, x.text, x.span))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        return tuple(out)

    def type_(self) -> Type:
        depth = 0
        while self.at("@"):
            self.advance()
            depth += 1
        mdf = IMM
        if self.tok.kind == "keyword" and self.tok.text in MODIFIERS:
            mdf = Modifier(self.advance().text)
        name = self.ident("type name")
        return Type(depth, mdf, name.text)

    # -- bodies
    def block(self) -> Expr:
        """``{ stmt* result }`` where locals and expression statements nest as ``Let``."""
        self.expect("{")
        stmts: list[tuple] = []
        result: Optional[Expr] = None
        while not self.at("}") and self.tok.kind != "eof":
            before = self.i
            try:
                if result is not None:
                    self.error("unreachable code after the result expression")
                if self.at("return"):
                    self.advance()
                    result = self.expr()
                    self.expect(";")
                elif self.is_local_decl():
                    start = self.tok
                    ty = self.type_()
                    x = self.ident("variable name")
                    self.expect("=")
                    init = self.expr()
                    self.expect(";")
                    stmts.append((x.text, ty, init, start.span))
                else:
                    start = self.tok
                    e = self.expr()
                    if self.at("}"):
                        result = e
                    else:
                        self.expect(";")
                        if self.at("}"):
                            result = e
                        else:
                            stmts.append((None, None, e, start.span))
            except _Sync:
                self.recover(before)
        close = self.expect("}")
        if result is None and not any(d.span == close.span for d in self.diags):
            self.diags.append(Diagnostic("error", "body must end with an expression", close.span))
        if result is None:
            result = EmptySignal(close.span)
        for name, ty, init, span in reversed(stmts):
            result = Let(name, ty, init, result, span)
        return result

    def is_local_decl(self) -> bool:
        t = self.tok
        if t.kind == "keyword" and t.text in MODIFIERS:
            return True
        if self.at("@") and not self.at("[", 1):
            return True
        return t.kind == "ident" and self.peek(1).kind == "ident" and self.at("=", 2)

    # -- expressions
    def expr(self) -> Expr:
        start = self.tok
        lhs = self.ternary()
        if self.at("="):
            eq = self.advance()
            if not isinstance(lhs, FieldGet):
                self.error("left side of '=' must be a field access", eq)
            rhs = self.expr()
            return FieldSet(lhs.recv, lhs.name, rhs, start.span)
        return lhs

    def ternary(self) -> Expr:
        start = self.tok
        test = self.binary(0)
        if self.at("?"):
            self.advance()
            then = self.expr()
            self.expect(":")
            other = self.ternary()
            return Cond(test, then, other, start.span)
        return test

    def binary(self, level: int) -> Expr:
        if level == len(builtins.PRECEDENCE):
            return self.unary()
        ops = builtins.PRECEDENCE[level]
        lhs = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.advance()
            rhs = self.binary(level + 1)
            lhs = builtins.desugar_operator(op.text, lhs, rhs, op.span)
        return lhs

    def unary(self) -> Expr:
        if self.at("-"):
            op = self.advance()
            if self.tok.kind in ("int", "float") and not self.at(".", 1):
                t = self.advance()
                kind = "Int" if t.kind == "int" else "Float"
                return self.postfix(Lit(kind, -t.value, op.span))
            return builtins.desugar_operator("-", self.unary(), span=op.span)
        if self.at("!"):
            op = self.advance()
            return builtins.desugar_operator("!", self.unary(), span=op.span)
        return self.postfix(self.primary())

    def postfix(self, e: Expr) -> Expr:
        while self.at("."):
            dot = self.advance()
            if self.at("@"):
                self.advance()
                m = self.ident("method name")
                e = LiftCall(e, m.text, self.args(), dot.span)
            else:
                name = self.ident("field or method name")
                if self.at("("):
                    e = Call(e, name.text, self.args(), dot.span)
                else:
                    e = FieldGet(e, name.text, dot.span)
        return e

    def args(self) -> tuple:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                out.append(self.expr())
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        return tuple(out)

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "ident":
            self.advance()
            return Var(t.text, t.span)
        if t.kind == "int":
            self.advance()
            return Lit("Int", t.value, t.span)
        if t.kind == "float":
            self.advance()
            return Lit("Float", t.value, t.span)
        if t.kind == "str":
            self.advance()
            return Lit("Str", t.value, t.span)
        if self.at("true") or self.at("false"):
            self.advance()
            return Lit("Bool", t.text == "true", t.span)
        if self.at("this"):
            self.advance()
            return Var("this", t.span)
        if self.at("new"):
            self.advance()
            c = self.ident("class name")
            return New(c.text, self.args(), t.span)
        if self.at("head") or self.at("tail"):
            self.advance()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Head(arg, t.span) if t.text == "head" else Tail(arg, t.span)
        if self.at("@"):
            self.advance()
            self.expect("[")
            if self.at("]"):
                self.advance()
                return EmptySignal(t.span)
            h = self.expr()
            self.expect(";")
            tl = self.expr()
            self.expect("]")
            return SignalCons(h, tl, t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"expected an expression but found {self.describe(t)}")


def _sorted(diags: list[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=lambda d: (d.span.line, d.span.col))


def parse_program(text: str) -> Program:
    """Parse a whole ``.frj`` file; raises ``ParseError`` carrying every diagnostic."""
    p = Parser(text)
    prog = p.program()
    if p.diags:
        raise ParseError(_sorted(p.diags))
    return prog


def parse_expression(text: str) -> Expr:
    p = Parser(text)
    e = None
    try:
        e = p.expr()
        if p.tok.kind != "eof":
            p.error(f"unexpected {p.describe(p.tok)} after expression")
    except _Sync:
        pass
    if p.diags:
        raise ParseError(_sorted(p.diags))
    return e
