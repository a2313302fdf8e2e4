from pathlib import Path

import pytest

from frj.builtins import SensorScript
from frj.parse import parse_program

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"
SCRIPTS = ROOT / "scripts"

POSITIVE = ["person_call", "person_frp", "person_actor", "fork_join", "box_promotion",
            "person_caps", "ac_controller"]
PURE = ["person_call", "person_frp", "person_actor", "fork_join", "box_promotion", "person_caps"]
EXPECTED = {
    "person_call": '"Bob:24"',
    "person_frp": '"Bob:24"',
    "person_actor": '["Bob:24"; @[]]',
    "fork_join": "3",
    "box_promotion": "F()",
    "person_caps": "49",
    "ac_controller": "[true; [true; [true; @[]]]]",
}


def source(name: str) -> str:
    path = CORPUS / (name if name.endswith(".frj") else f"{name}.frj")
    return path.read_text()


def load(name: str):
    return parse_program(source(name))


def warm3() -> SensorScript:
    return SensorScript.parse((SCRIPTS / "warm3.sensors").read_text())


def script_for(name: str):
    return warm3() if name == "ac_controller" else None


@pytest.fixture
def script():
    return warm3()
