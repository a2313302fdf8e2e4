import math

import pytest
from hypothesis import given, settings, strategies as st

from frj.builtins import (
    Host, NativeError, ScriptError, SensorScript, call_capability, call_primitive, desugar_operator,
    render, render_prim,
)
from frj.parse import parse_program
from frj.runtime import MainFirst, run
from frj.syntax import Call, Done, EmptySignal, Head, Label, Lit, Loc, Record, SignalCons, Var

from conftest import source


def prim(kind, a, meth, *args):
    return call_primitive(Lit(kind, a), meth, tuple(Lit(k, v) for k, v in args)).value


def test_int_arithmetic_wraps_at_64_bits():
    assert prim("Int", 2**63 - 1, "plus", ("Int", 1)) == -2**63
    assert prim("Int", -2**63, "neg") == -2**63
    assert prim("Int", 7, "minus", ("Int", 9)) == -2
    assert prim("Int", 3, "times", ("Int", -4)) == -12
    assert prim("Int", 3, "toFloat") == 3.0


def test_float_division_follows_ieee():
    assert prim("Float", 1.0, "div", ("Float", 0.0)) == math.inf
    assert prim("Float", -1.0, "div", ("Float", 0.0)) == -math.inf
    assert prim("Float", 1.0, "div", ("Float", -0.0)) == -math.inf
    assert math.isnan(prim("Float", 0.0, "div", ("Float", 0.0)))
    assert prim("Float", 3.0, "div", ("Float", 2.0)) == 1.5


@pytest.mark.parametrize("meth, a, b, expected", [
    ("lt", 1, 2, True), ("leq", 2, 2, True), ("gt", 1, 2, False), ("geq", 3, 2, True),
    ("eq", 1, 1, True), ("neq", 1, 1, False),
])
def test_comparisons(meth, a, b, expected):
    assert prim("Int", a, meth, ("Int", b)) is expected
    assert prim("Float", float(a), meth, ("Float", float(b))) is expected


def test_bool_and_string_methods():
    assert prim("Bool", True, "and", ("Bool", False)) is False
    assert prim("Bool", False, "or", ("Bool", True)) is True
    assert prim("Bool", True, "not") is False
    assert prim("Str", "Bob", "plus", ("Str", ":")) == "Bob:"
    assert prim("Str", "n=", "plus", ("Int", 24)) == "n=24"
    assert prim("Str", "", "plus", ("Float", 0.1)) == "0.1"
    assert prim("Str", "", "plus", ("Bool", True)) == "true"
    assert prim("Str", "abc", "length") == 3
    assert prim("Int", 5, "show") == "5"


def test_unknown_primitive_method():
    with pytest.raises(NativeError):
        prim("Int", 1, "frobnicate")


def test_operator_desugaring():
    assert desugar_operator("+", Var("a"), Var("b")) == Call(Var("a"), "plus", (Var("b"),))
    assert desugar_operator("!", Var("a")) == Call(Var("a"), "not")
    assert desugar_operator("-", Var("a")) == Call(Var("a"), "neg")


def test_render_prim_floats_are_round_trip_decimals():
    assert render_prim(Lit("Float", 82.883)) == "82.883"
    assert render_prim(Lit("Float", 1e300)) == "1e+300"


def test_render_values():
    mem = {1: Record("Box", [Lit("Int", 1), Loc(2)]), 2: Record("F", [])}
    assert render(Loc(1), mem) == "Box(1, F())"
    assert render(Done(Lit("Str", "a"), EmptySignal())) == '["a"; @[]]'
    assert render(Label(4)) == "<pending>"


# ---- scripts

def test_script_parse_and_errors():
    s = SensorScript.parse("# warm\nticks 2\ntemps 30 31  # c\nhumidities 70 70.5\n")
    assert s == SensorScript(2, (30.0, 31.0), (70.0, 70.5))
    for bad in ("ticks -1", "ticks", "temps x", "wind 3"):
        with pytest.raises(ScriptError):
            SensorScript.parse(bad)


@given(st.integers(0, 50), st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=5),
       st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=5))
def test_script_dump_round_trip(ticks, temps, hums):
    s = SensorScript(ticks, tuple(temps), tuple(hums))
    assert SensorScript.parse(s.dump()) == s


def test_capabilities():
    host = Host(SensorScript(2, (30.0,), ()))
    assert call_capability(host, "Sensors.clock", Loc(1), ()) == SignalCons(Lit("Bool", True), SignalCons(Lit("Bool", True), EmptySignal()))
    assert call_capability(host, "Sensors.temp", Loc(1), (Lit("Bool", True),)) == Lit("Float", 30.0)
    # exhausted input ends the signal through rule (Empty)
    assert call_capability(host, "Sensors.temp", Loc(1), (Lit("Bool", True),)) == Head(EmptySignal())
    assert call_capability(host, "Sensors.humidity", Loc(1), (Lit("Bool", True),)) == Head(EmptySignal())
    call_capability(host, "AC.setPower", Loc(2), (Lit("Bool", True),))
    call_capability(host, "AC.setPower", Loc(2), (Lit("Bool", False),))
    call_capability(host, "Console.print", Loc(3), (Lit("Str", "hi"),))
    assert host.log("ac") == ["on", "off"] and host.log("console") == ["hi"]


def test_console_program():
    p = parse_program('main { mut Console c = new Console(); return c.print("x" + 1); }')
    res = run(p, MainFirst())
    assert res.rendered == '"x1"' and res.log("console") == ["x1"]


# ---- AC hysteresis against an independent simulation

def discomfort(t: float, h: float) -> float:
    return 0.81 * t + 0.01 * h * (0.99 * t - 14.3) + 46.3


def oracle_log(temps, hums) -> list[str]:
    on, out = False, []
    for t, h in zip(temps, hums):
        on = discomfort(t, h) >= 75.0 + (-0.5 if on else 0.5)
        out.append("on" if on else "off")
    return out


AC = parse_program(source("ac_controller"))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(10, 40), st.floats(10, 100)), min_size=1, max_size=5))
def test_hysteresis_matches_oracle(readings):
    temps, hums = zip(*readings)
    script = SensorScript(len(readings), temps, hums)
    res = run(AC, MainFirst(), script=script)
    assert res.log("ac") == oracle_log(temps, hums)


def test_hysteresis_band():
    # discomfort 75.2 switches on only if already on
    t = 28.0
    h = (75.2 - 46.3 - 0.81 * t) / (0.01 * (0.99 * t - 14.3))
    assert oracle_log([t, t], [h, h]) == ["off", "off"]
    hot = 40.0
    res = run(AC, MainFirst(), script=SensorScript(2, (hot, t), (80.0, h)))
    assert res.log("ac") == ["on", "on"]


def test_shorter_input_ends_pipeline_early():
    res = run(AC, MainFirst(), script=SensorScript(3, (30.0,), (70.0, 70.0)))
    assert res.log("ac") == ["on"] and res.rendered == "[true; @[]]"
