"""Cycle-accurate simulator of an FSM-orchestrated, time-lapsed SIMD PE array."""

from .isa import Instruction, Opcode, Dir, pack_instruction, unpack_instruction, decode_address
from .pe import PE, vector_alu, SimError, RendezvousViolation, RouterConflict
from .microcode import FsmProgram, parse_program, assemble, interpret_step, verify_equivalence
from .orchestrator import Orchestrator, Token, OrchMessage
from .fabric import Fabric, FabricConfig, Metrics

__version__ = "0.1.0"
