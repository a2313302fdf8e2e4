"""``frjc``: check, run, trace and verify FRJ programs.

Requests go through the service handlers in-process, or to a running
service with ``--server URL``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import service
from .runtime import SCHEDULERS

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_RUNTIME, EXIT_HARNESS, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_steps() -> int:
    raw = os.environ.get("FRJC_MAX_STEPS")
    if raw is None:
        return 1_000_000
    if not raw.isdigit() or int(raw) < 1:
        raise UsageError(f"FRJC_MAX_STEPS must be a positive integer, got {raw!r}")
    return int(raw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="frjc", description="Type checker and interpreter for FRJ programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("file", help="source file (.frj)")
        sp.add_argument("--json", action="store_true", help="print the structured response")
        sp.add_argument("--server", metavar="URL", help="send the request to a running service")

    def execution(sp):
        sp.add_argument("--script", metavar="FILE", help="sensor script for Sensors capabilities")
        sp.add_argument("--max-steps", type=int, default=None,
                        help="step budget (default 1000000, or $FRJC_MAX_STEPS)")
        sp.add_argument("--workers", type=int, default=4, help="workers for parallel mode")

    common(sub.add_parser("check", help="parse, check well-formedness and types"))

    for name, text in (("run", "evaluate main and print its value"),
                       ("trace", "run and print one line per reduction step")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        execution(sp)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--scheduler", choices=SCHEDULERS, default="random")
        sp.add_argument("--gc", default="every", help="never | every | every-K | terminal")
        sp.add_argument("--gc-every", type=int, default=1024, metavar="K")
        sp.add_argument("--out", metavar="FILE", help="write the AC power log, one state per line")
        sp.add_argument("--trace", action="store_true", default=name == "trace")
        sp.add_argument("--debug-preserve", action="store_true",
                        help="check configuration well-formedness after every step")

    sp = sub.add_parser("verify", help="replay under many seeds, log races, enumerate schedules")
    common(sp)
    execution(sp)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--race-runs", type=int, default=10)
    sp.add_argument("--enumerate", action="store_true", help="also explore every schedule")
    sp.add_argument("--depth", type=int, default=200, help="depth bound for --enumerate")

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


# ---------------------------------------------------------------- transport


def _call(server: Optional[str], endpoint: str, req, response_model):
    handler = {"check": service.handle_check, "run": service.handle_run, "trace": service.handle_run,
               "verify": service.handle_verify}[endpoint]
    if server is None:
        return handler(req)
    import httpx

    try:
        r = httpx.post(f"{server.rstrip('/')}/{endpoint}", json=req.model_dump(), timeout=None)
    except httpx.HTTPError as exc:
        raise ConnectionError(f"cannot reach {server}: {exc}") from None
    if r.status_code == 400:
        detail = r.json().get("detail", {})
        raise service.ServiceError(detail.get("code", "bad-request"), detail.get("message", r.text))
    if r.status_code == 422:
        raise UsageError(f"server rejected the request: {r.text}")
    r.raise_for_status()
    return response_model.model_validate(r.json())


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _print_diagnostics(diags) -> None:
    for d in diags:
        print(d.text, file=sys.stderr)


def _emit_json(resp) -> None:
    print(json.dumps(resp.model_dump(), indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_check(args) -> int:
    req = service.CheckRequest(source=_read(args.file), filename=args.file)
    resp = _call(args.server, "check", req, service.CheckResponse)
    if args.json:
        _emit_json(resp)
    else:
        _print_diagnostics(resp.diagnostics)
        if resp.ok:
            print(f"{args.file}: ok" + (f" (main : {resp.main_type})" if resp.main_type else ""))
    return EXIT_OK if resp.ok else EXIT_DIAGNOSTICS


def cmd_run(args) -> int:
    req = service.RunRequest(
        source=_read(args.file), filename=args.file, seed=args.seed, scheduler=args.scheduler,
        workers=args.workers, gc=args.gc, gc_every=args.gc_every,
        max_steps=args.max_steps or _env_steps(),
        script=_read(args.script) if args.script else None, trace=args.trace,
        debug_preserve=args.debug_preserve)
    resp = _call(args.server, "trace" if args.trace else "run", req, service.RunResponse)
    if args.out and resp.ok:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.writelines(f"{o.text}\n" for o in resp.outputs if o.channel == "ac")
    if args.json:
        _emit_json(resp)
    else:
        _print_diagnostics(resp.diagnostics)
        for line in resp.trace:
            print(line)
        for o in resp.outputs:
            if o.channel == "console":
                print(o.text)
        if resp.error:
            print(f"{args.file}: runtime error [{resp.error.code}] after {resp.error.step} steps: "
                  f"{resp.error.message}", file=sys.stderr)
        if resp.ok:
            print(resp.value)
    if resp.diagnostics:
        return EXIT_DIAGNOSTICS
    return EXIT_OK if resp.ok else EXIT_RUNTIME


def cmd_verify(args) -> int:
    req = service.VerifyRequest(
        source=_read(args.file), filename=args.file, seeds=args.seeds, workers=args.workers,
        race_runs=args.race_runs, enumerate=args.enumerate, depth=args.depth,
        max_steps=args.max_steps or _env_steps(),
        script=_read(args.script) if args.script else None)
    resp = _call(args.server, "verify", req, service.VerifyResponse)
    if args.json:
        _emit_json(resp)
    elif resp.diagnostics:
        _print_diagnostics(resp.diagnostics)
    else:
        rep = resp.report
        replay = rep["replay"]
        print(f"program: {rep['program']}")
        print(f"expected: {'deterministic' if rep['expected_deterministic'] else 'may be nondeterministic'}")
        print(f"replay: {replay['verdict']} over {len(replay['seeds'])} seeds + parallel, "
              f"{len(replay['distinct'])} distinct outcome(s)")
        for v in replay["distinct"]:
            print(f"  outcome: {v}")
        races = rep["races"]
        print(f"races: {len(races['overlaps'])} overlaps in {races['updates']} field updates "
              f"over {races['runs']} parallel runs")
        if rep["enumeration"]:
            en = rep["enumeration"]
            print(f"enumeration: {len(en['values'])} value(s) over {en['states']} states"
                  + ("" if en["complete"] else " (bound hit)"))
            for v in en["values"]:
                print(f"  value: {v}")
        for f in rep["failures"]:
            print(f"FAIL: {f}")
        print("verdict: " + ("ok" if resp.ok else "failed"))
    if resp.diagnostics:
        return EXIT_DIAGNOSTICS
    return EXIT_OK if resp.ok else EXIT_HARNESS


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run(service.app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    commands = {"check": cmd_check, "run": cmd_run, "trace": cmd_run, "verify": cmd_verify,
                "serve": cmd_serve}
    try:
        return commands[args.command](args)
    except UsageError as exc:
        print(f"frjc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except service.ServiceError as exc:
        print(f"frjc: error: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except ConnectionError as exc:
        print(f"frjc: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
