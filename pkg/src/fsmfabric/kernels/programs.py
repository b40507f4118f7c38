"""Shipped orchestrator programs (text lives in fsmfabric/programs)."""

from functools import lru_cache
from importlib import resources

from ..microcode import FsmProgram, parse_program, assemble

SHIPPED = ("spmm_buffered", "spmm_register", "sddmm")


def program_text(name: str) -> str:
    if name not in SHIPPED:
        raise KeyError(f"no shipped program {name!r}; have {', '.join(SHIPPED)}")
    return resources.files("fsmfabric").joinpath("programs", f"{name}.fsm").read_text()


@lru_cache(maxsize=None)
def _base(name):
    return parse_program(program_text(name))


def load_program(name: str, **consts) -> FsmProgram:
    p = _base(name)
    return p.with_consts(**consts) if consts else p


_lut_cache = {}


def lut_for(prog: FsmProgram):
    """Assembled bitstream, memoized on the program text and constants
    (the LUT itself does not depend on constants, only the taps do)."""
    key = prog.text
    if key not in _lut_cache:
        _lut_cache[key] = assemble(prog)
    return _lut_cache[key]
