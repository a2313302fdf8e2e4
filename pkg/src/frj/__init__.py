"""FRJ: a calculus joining reactive signals, actors and reference capabilities."""

from .parse import ParseError, parse_expression, parse_program
from .runtime import run, run_parallel

__version__ = "0.1.0"
__all__ = ["ParseError", "parse_expression", "parse_program", "run", "run_parallel"]
