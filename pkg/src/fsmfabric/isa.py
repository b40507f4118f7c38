"""Instruction word, opcodes and the unified PE address space.

Address map (16-bit raw addresses):

    0x0000-0x0FFF  data memory, byte offset
    0x1000-0x103F  scratchpad, byte offset (entry e lives at 4*e)
    0x1100-0x1103  router ports N, E, S, W
    0x1200-0x1203  vector registers 0-3
    0x1300         immediate (the streamed operand carried in the word)
    0xFFFF         null (reads zero, writes are dropped)

Everything else decodes to ``RegionKind.INVALID``.

Packed word (88 bits, MSB first): op byte | op1 | op2 | res | imm.
The op byte holds the opcode in its low nibble plus three flags:
bit 4 bypass (router N->S pass-through), bit 5 drain (clear register /
scratchpad sources at commit), bit 6 spill (VReg0 refills the scratchpad
source, VReg0 cleared).  Bit 7 marks a bubble (valid = 0).
"""

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property


DMEM_BASE = 0x0000
DMEM_BYTES = 4096
SPAD_BASE = 0x1000
SPAD_BYTES = 64
SPAD_ENTRY_BYTES = 4
PORT_BASE = 0x1100
VREG_BASE = 0x1200
NUM_VREGS = 4
IMM_ADDR = 0x1300
NULL_ADDR = 0xFFFF

WORD_BITS = 88
HEX_DIGITS = WORD_BITS // 4


class MalformedInstruction(ValueError):
    pass


class Opcode(IntEnum):
    NOP = 0
    SVMAC = 1   # res <- res + scalar(op1) * op2
    VVMAC = 2   # res <- res + op1 * op2 (lane-wise)
    VVADD = 3   # res <- op1 + op2
    VSUM = 4    # res <- (sum(op1), 0, 0, 0)
    MOV = 5     # res <- op1
    HOLD = 6    # spatial mode: keep re-executing the latched instruction


MAC_OPS = (Opcode.SVMAC, Opcode.VVMAC)


class Dir(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3


OPPOSITE = {Dir.N: Dir.S, Dir.S: Dir.N, Dir.E: Dir.W, Dir.W: Dir.E}


class RegionKind(IntEnum):
    DMEM = 0
    SPAD = 1
    PORT = 2
    VREG = 3
    IMM = 4
    NULL = 5
    INVALID = 6


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    offset: int = 0

    def __str__(self):
        k = self.kind
        if k == RegionKind.PORT:
            return Dir(self.offset).name
        if k == RegionKind.VREG:
            return f"VREG{self.offset}"
        if k in (RegionKind.DMEM, RegionKind.SPAD):
            return f"{k.name}[{self.offset}]"
        return k.name


def decode_address(raw: int) -> Region:
    """Total decode: unmapped values give an INVALID region, never raise."""
    if not 0 <= raw <= 0xFFFF:
        return Region(RegionKind.INVALID, raw)
    if raw < DMEM_BASE + DMEM_BYTES:
        return Region(RegionKind.DMEM, raw - DMEM_BASE)
    if SPAD_BASE <= raw < SPAD_BASE + SPAD_BYTES:
        return Region(RegionKind.SPAD, raw - SPAD_BASE)
    if PORT_BASE <= raw < PORT_BASE + 4:
        return Region(RegionKind.PORT, raw - PORT_BASE)
    if VREG_BASE <= raw < VREG_BASE + NUM_VREGS:
        return Region(RegionKind.VREG, raw - VREG_BASE)
    if raw == IMM_ADDR:
        return Region(RegionKind.IMM)
    if raw == NULL_ADDR:
        return Region(RegionKind.NULL)
    return Region(RegionKind.INVALID, raw)


_BASES = {
    RegionKind.DMEM: (DMEM_BASE, DMEM_BYTES),
    RegionKind.SPAD: (SPAD_BASE, SPAD_BYTES),
    RegionKind.PORT: (PORT_BASE, 4),
    RegionKind.VREG: (VREG_BASE, NUM_VREGS),
    RegionKind.IMM: (IMM_ADDR, 1),
    RegionKind.NULL: (NULL_ADDR, 1),
}


def encode_address(kind: RegionKind, offset: int = 0) -> int:
    if kind not in _BASES:
        raise ValueError(f"cannot encode region {kind!r}")
    base, size = _BASES[kind]
    if not 0 <= offset < size:
        raise ValueError(f"offset {offset} out of range for {kind.name}")
    return base + offset


# shorthand constructors used all over the kernels
def dmem(off: int) -> int:
    return encode_address(RegionKind.DMEM, off)


def spad(entry: int) -> int:
    return encode_address(RegionKind.SPAD, entry * SPAD_ENTRY_BYTES)


def port(d: Dir) -> int:
    return PORT_BASE + int(d)


def vreg(i: int) -> int:
    return encode_address(RegionKind.VREG, i)


IMM = IMM_ADDR
NULL = NULL_ADDR
N, E, S, W = (PORT_BASE + d for d in range(4))
VREG0 = VREG_BASE


def _to_i32(v: int) -> int:
    return ((v + (1 << 31)) & 0xFFFFFFFF) - (1 << 31)


@dataclass(frozen=True)
class Instruction:
    op: Opcode = Opcode.NOP
    op1: int = NULL_ADDR
    op2: int = NULL_ADDR
    res: int = NULL_ADDR
    imm: int = 0
    bypass: bool = False
    drain: bool = False
    spill: bool = False
    valid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "op", Opcode(self.op))
        object.__setattr__(self, "imm", _to_i32(self.imm))

    @cached_property
    def regions(self):
        return decode_address(self.op1), decode_address(self.op2), decode_address(self.res)

    @property
    def is_nop(self):
        return self.op == Opcode.NOP and not self.bypass

    def __str__(self):
        if not self.valid:
            return "BUBBLE"
        r1, r2, rr = self.regions
        flags = "".join(f" +{n}" for n in ("bypass", "drain", "spill") if getattr(self, n))
        return f"{self.op.name} {r1} {r2} -> {rr} imm={self.imm}{flags}"


NOP = Instruction()


def pack_instruction(inst: Instruction) -> int:
    ob = int(inst.op) | inst.bypass << 4 | inst.drain << 5 | inst.spill << 6 | (not inst.valid) << 7
    for a in (inst.op1, inst.op2, inst.res):
        assert 0 <= a <= 0xFFFF, a
    return (ob << 80) | (inst.op1 << 64) | (inst.op2 << 48) | (inst.res << 32) | (inst.imm & 0xFFFFFFFF)


def unpack_instruction(word: int) -> Instruction:
    if not 0 <= word < (1 << WORD_BITS):
        raise MalformedInstruction(f"word out of range: {word:#x}")
    ob = word >> 80
    code = ob & 0xF
    if code >= len(Opcode):
        raise MalformedInstruction(f"opcode field {code:#x} exceeds opcode count")
    return Instruction(
        op=Opcode(code),
        op1=(word >> 64) & 0xFFFF,
        op2=(word >> 48) & 0xFFFF,
        res=(word >> 32) & 0xFFFF,
        imm=word & 0xFFFFFFFF,
        bypass=bool(ob & 0x10),
        drain=bool(ob & 0x20),
        spill=bool(ob & 0x40),
        valid=not ob & 0x80,
    )


def format_word(word: int) -> str:
    return f"{word:0{HEX_DIGITS}x}"


def parse_word(text: str) -> int:
    text = text.strip()
    if len(text) != HEX_DIGITS:
        raise MalformedInstruction(f"expected {HEX_DIGITS} hex digits, got {len(text)}")
    return int(text, 16)


# --- static checks -------------------------------------------------------

_READABLE = {RegionKind.DMEM, RegionKind.SPAD, RegionKind.PORT, RegionKind.VREG,
             RegionKind.IMM, RegionKind.NULL}
_WRITABLE = {RegionKind.DMEM, RegionKind.SPAD, RegionKind.PORT, RegionKind.VREG,
             RegionKind.NULL}
_STORAGE = {RegionKind.DMEM, RegionKind.SPAD, RegionKind.VREG}


def _aligned(r: Region) -> bool:
    if r.kind == RegionKind.SPAD:
        return r.offset % SPAD_ENTRY_BYTES == 0
    if r.kind == RegionKind.DMEM:
        return r.offset + 4 <= DMEM_BYTES
    return True


def _sources(inst: Instruction):
    """Regions read at LOAD, in operand order."""
    r1, r2, rr = inst.regions
    op = inst.op
    if op in (Opcode.NOP, Opcode.HOLD):
        return []
    if op in (Opcode.MOV, Opcode.VSUM):
        return [r1]
    srcs = [r1, r2]
    if op in MAC_OPS:
        srcs.append(rr)  # accumulator
    return srcs


def port_reads(inst: Instruction) -> set:
    dirs = {Dir(r.offset) for r in _sources(inst) if r.kind == RegionKind.PORT}
    if inst.bypass:
        dirs.add(Dir.N)
    return dirs


def port_writes(inst: Instruction) -> set:
    rr = inst.regions[2]
    dirs = set()
    if inst.op not in (Opcode.NOP, Opcode.HOLD) and rr.kind == RegionKind.PORT:
        dirs.add(Dir(rr.offset))
    if inst.bypass:
        dirs.add(Dir.S)
    return dirs


def spad_sources(inst: Instruction):
    return [r for r in _sources(inst)[:2] if r.kind == RegionKind.SPAD]


def violations(inst: Instruction) -> list:
    """Every static rule the instruction breaks (empty list = legal).

    Pure function of the instruction; no simulator state is consulted.
    """
    out = []
    if not inst.valid:
        return out
    r1, r2, rr = inst.regions
    op = inst.op
    srcs = _sources(inst)
    for r in srcs:
        if r.kind not in _READABLE:
            out.append(f"unreadable source {r}")
        elif not _aligned(r):
            out.append(f"misaligned source {r}")
    if op not in (Opcode.NOP, Opcode.HOLD):
        if rr.kind not in _WRITABLE:
            out.append(f"unwritable result {rr}")
        elif not _aligned(rr):
            out.append(f"misaligned result {rr}")
    if op in MAC_OPS and rr.kind not in _STORAGE:
        out.append("MAC accumulator must live in a register or memory")
    if op == Opcode.SVMAC and r1.kind != RegionKind.IMM:
        out.append("SVMAC scalar operand must be the immediate")
    if op == Opcode.SVMAC and r2.kind == RegionKind.IMM:
        out.append("SVMAC vector operand cannot be the immediate")
    # same router direction read and written
    both = port_reads(inst) & port_writes(inst)
    if both:
        out.append("reads and writes port " + ",".join(d.name for d in sorted(both)))
    if inst.bypass and op not in (Opcode.NOP, Opcode.HOLD) and rr.kind == RegionKind.PORT and rr.offset == Dir.S:
        out.append("bypass and result both drive S")
    # commit exclusivity on the scratchpad
    sp = spad_sources(inst)
    writes = int(rr.kind == RegionKind.SPAD and op not in (Opcode.NOP, Opcode.HOLD))
    if inst.drain:
        writes += sum(1 for r in sp if r != rr)
    if inst.spill:
        if len(sp) != 1:
            out.append("spill needs exactly one scratchpad source")
        if rr.kind == RegionKind.VREG and rr.offset == 0:
            out.append("spill clears VREG0, which is also the result")
        writes += 1
    if writes > 1:
        out.append("more than one scratchpad write")
    return out


def check_instruction(inst: Instruction) -> Instruction:
    bad = violations(inst)
    if bad:
        raise MalformedInstruction(f"{inst}: " + "; ".join(bad))
    return inst
