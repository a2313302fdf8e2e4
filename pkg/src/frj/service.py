"""HTTP service over the checker, interpreter and harness.

The ``handle_*`` functions are the whole API; the FastAPI routes only wrap
them, and the CLI calls them directly unless pointed at a server.
"""
from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import harness, runtime, typeck, wf
from .builtins import NativeError, ScriptError, SensorScript
from .parse import ParseError, parse_program
from .syntax import Program

VERSION = "0.1.0"


class ServiceError(Exception):
    """A bad request: malformed script, unknown scheduler, program without main."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


# ---------------------------------------------------------------- models


class DiagnosticOut(BaseModel):
    phase: str  # syntax | wf | type
    code: str
    message: str
    line: int
    col: int
    text: str  # rendered, ``file:line:col: error: ...``


class Source(BaseModel):
    source: str
    filename: str = "<input>"


class CheckRequest(Source):
    pass


class CheckResponse(BaseModel):
    ok: bool
    main_type: Optional[str] = None
    diagnostics: list[DiagnosticOut] = []


class RunRequest(Source):
    seed: int = 0
    scheduler: str = "random"
    workers: int = Field(4, ge=1, le=64)
    gc: str = "every"
    gc_every: int = Field(1024, ge=1)
    max_steps: int = Field(1_000_000, ge=1)
    script: Optional[str] = None  # sensor script text
    trace: bool = False
    debug_preserve: bool = False


class OutputLine(BaseModel):
    channel: str
    text: str


class RuntimeErrorOut(BaseModel):
    code: str
    message: str
    step: int


class RunResponse(BaseModel):
    ok: bool
    value: Optional[str] = None
    outputs: list[OutputLine] = []
    stats: dict = {}
    trace: list[str] = []
    races: int = 0
    diagnostics: list[DiagnosticOut] = []
    error: Optional[RuntimeErrorOut] = None


class VerifyRequest(Source):
    seeds: int = Field(20, ge=1, le=10_000)
    workers: int = Field(4, ge=1, le=64)
    race_runs: int = Field(10, ge=0)
    enumerate: bool = False
    depth: int = Field(200, ge=1)
    max_steps: int = Field(1_000_000, ge=1)
    script: Optional[str] = None


class VerifyResponse(BaseModel):
    ok: bool
    diagnostics: list[DiagnosticOut] = []
    report: Optional[dict] = None


# ---------------------------------------------------------------- front end


def _diag(phase: str, code: str, message: str, span, text: str) -> DiagnosticOut:
    line, col = (span.line, span.col) if span else (0, 0)
    return DiagnosticOut(phase=phase, code=code, message=message, line=line, col=col, text=text)


def front_end(source: str, filename: str) -> tuple[Optional[Program], list[DiagnosticOut], Optional[str]]:
    """Parse, check well-formedness, type-check; stops at the first failing phase."""
    try:
        prog = parse_program(source)
    except ParseError as exc:
        return None, [_diag("syntax", d.code, d.message, d.span, d.render(filename))
                      for d in exc.diagnostics], None
    report = wf.check_program(prog)
    if not report.ok:
        return None, [_diag("wf", v.bullet, v.message, v.span, v.render(filename))
                      for v in report.violations], None
    ty, errors, _ = typeck.main_type(prog)
    if errors:
        return None, [_diag("type", e.code, e.message, e.span, e.render(filename)) for e in errors], None
    return prog, [], str(ty) if ty is not None else None


def _script(text: Optional[str]) -> Optional[SensorScript]:
    if text is None:
        return None
    try:
        return SensorScript.parse(text)
    except ScriptError as exc:
        raise ServiceError("bad-script", f"sensor script: {exc}") from None


def _runnable(req: Source) -> tuple[Optional[Program], list[DiagnosticOut]]:
    prog, diags, _ = front_end(req.source, req.filename)
    if prog is not None and prog.main is None:
        raise ServiceError("no-main", f"{req.filename} has no main block")
    return prog, diags


# ---------------------------------------------------------------- handlers


def handle_check(req: CheckRequest) -> CheckResponse:
    prog, diags, ty = front_end(req.source, req.filename)
    return CheckResponse(ok=prog is not None, main_type=ty, diagnostics=diags)


def handle_run(req: RunRequest) -> RunResponse:
    prog, diags = _runnable(req)
    if prog is None:
        return RunResponse(ok=False, diagnostics=diags)
    script = _script(req.script)
    try:
        gc = runtime.GcPolicy.parse(req.gc, req.gc_every)
    except ValueError as exc:
        raise ServiceError("bad-gc-policy", str(exc)) from None
    opts = dict(max_steps=req.max_steps, gc=gc, script=script, trace=req.trace,
                debug_preserve=req.debug_preserve)
    try:
        if req.scheduler == "parallel":
            res = runtime.run_parallel(prog, req.workers, req.seed, **opts)
        else:
            try:
                sched = runtime.make_scheduler(req.scheduler, req.seed)
            except ValueError as exc:
                raise ServiceError("bad-scheduler", str(exc)) from None
            res = runtime.run(prog, sched, **opts)
    except runtime.RuntimeFault as exc:
        step = exc.config.step_count if exc.config else 0
        return RunResponse(ok=False, error=RuntimeErrorOut(code=exc.code, message=str(exc), step=step))
    except NativeError as exc:
        return RunResponse(ok=False, error=RuntimeErrorOut(code="native", message=str(exc), step=0))
    return RunResponse(
        ok=True, value=res.rendered,
        outputs=[OutputLine(channel=ch, text=t) for ch, t in res.outputs],
        stats=res.stats.as_dict(), trace=res.trace, races=len(res.races))


def handle_verify(req: VerifyRequest) -> VerifyResponse:
    prog, diags = _runnable(req)
    if prog is None:
        return VerifyResponse(ok=False, diagnostics=diags)
    report = harness.verify(prog, seeds=req.seeds, enumerate_depth=req.depth if req.enumerate else None,
                            race_runs=req.race_runs, workers=req.workers, script=_script(req.script),
                            max_steps=req.max_steps, name=req.filename)
    return VerifyResponse(ok=report.ok, report=report.as_dict())


# ---------------------------------------------------------------- app


def create_app() -> FastAPI:
    app = FastAPI(title="frj", version=VERSION)

    def guarded(fn, req):
        try:
            return fn(req)
        except ServiceError as exc:
            raise HTTPException(status_code=400, detail={"code": exc.code, "message": exc.message})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": VERSION}

    @app.post("/check", response_model=CheckResponse)
    def check(req: CheckRequest):
        return guarded(handle_check, req)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        return guarded(handle_run, req)

    @app.post("/trace", response_model=RunResponse)
    def trace(req: RunRequest):
        return guarded(handle_run, req.model_copy(update={"trace": True}))

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest):
        return guarded(handle_verify, req)

    return app


app = create_app()
