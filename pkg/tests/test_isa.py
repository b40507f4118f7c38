import random

import pytest
from hypothesis import given, strategies as st

from fsmfabric import isa
from fsmfabric.isa import (Instruction, Opcode, Dir, RegionKind, decode_address, encode_address,
                           pack_instruction, unpack_instruction, format_word, parse_word,
                           violations, check_instruction, MalformedInstruction, port_reads,
                           port_writes, NOP)


# -- address map ---------------------------------------------------------------

@pytest.mark.parametrize("raw, kind, off", [
    (0x0000, RegionKind.DMEM, 0),
    (0x0FFF, RegionKind.DMEM, 4095),
    (0x1000, RegionKind.SPAD, 0),
    (0x103C, RegionKind.SPAD, 60),
    (0x1100, RegionKind.PORT, Dir.N),
    (0x1103, RegionKind.PORT, Dir.W),
    (0x1200, RegionKind.VREG, 0),
    (0x1300, RegionKind.IMM, 0),
    (0xFFFF, RegionKind.NULL, 0),
])
def test_decode_examples(raw, kind, off):
    r = decode_address(raw)
    assert r.kind == kind and r.offset == off


@pytest.mark.parametrize("raw", [0x1040, 0x1104, 0x1204, 0x1301, 0x8000, -1, 0x10000])
def test_unmapped_addresses_are_invalid(raw):
    assert decode_address(raw).kind == RegionKind.INVALID


def test_regions_do_not_overlap():
    # every 16-bit value lands in exactly one region; the mapped ones round-trip
    counts = {}
    for raw in range(0x10000):
        r = decode_address(raw)
        counts[r.kind] = counts.get(r.kind, 0) + 1
        if r.kind != RegionKind.INVALID:
            assert encode_address(r.kind, r.offset) == raw
    assert counts[RegionKind.DMEM] == 4096
    assert counts[RegionKind.SPAD] == 64
    assert counts[RegionKind.PORT] == 4
    assert counts[RegionKind.VREG] == 4
    assert counts[RegionKind.IMM] == counts[RegionKind.NULL] == 1


def test_shorthands():
    assert isa.spad(3) == 0x100C
    assert isa.port(Dir.S) == isa.S == 0x1102
    assert isa.vreg(2) == 0x1202
    with pytest.raises(ValueError):
        isa.dmem(4096)


# -- encoding ------------------------------------------------------------------

def test_pack_layout():
    inst = Instruction(Opcode.SVMAC, isa.IMM, isa.dmem(8), isa.VREG0, imm=-3)
    w = pack_instruction(inst)
    assert w >> 80 == 1
    assert (w >> 64) & 0xFFFF == 0x1300
    assert (w >> 48) & 0xFFFF == 8
    assert (w >> 32) & 0xFFFF == 0x1200
    assert w & 0xFFFFFFFF == 0xFFFFFFFD
    assert format_word(w) == "01130000081200fffffffd"
    assert unpack_instruction(parse_word(format_word(w))) == inst


def test_flag_bits():
    inst = Instruction(Opcode.MOV, isa.spad(0), isa.NULL, isa.S, bypass=True, drain=True, spill=True)
    assert pack_instruction(inst) >> 80 == 0x75
    assert pack_instruction(Instruction(valid=False)) >> 80 == 0x80


def test_opcode_ff_is_malformed():
    with pytest.raises(MalformedInstruction):
        unpack_instruction(0xFF << 80)


def test_word_out_of_range():
    with pytest.raises(MalformedInstruction):
        unpack_instruction(1 << 88)
    with pytest.raises(MalformedInstruction):
        parse_word("00")


def test_imm_wraps_to_int32():
    assert Instruction(imm=2**31).imm == -2**31
    assert Instruction(imm=-1).imm == -1


addr = st.integers(0, 0xFFFF)
insts = st.builds(Instruction, st.sampled_from(list(Opcode)), addr, addr, addr,
                  st.integers(-2**31, 2**31 - 1), st.booleans(), st.booleans(), st.booleans(),
                  st.booleans())


@given(insts)
def test_pack_roundtrip(inst):
    assert unpack_instruction(pack_instruction(inst)) == inst


def test_pack_roundtrip_random_words():
    rng = random.Random(11)
    for _ in range(10_000):
        w = rng.getrandbits(88)
        ob = w >> 80
        if ob & 0xF >= len(Opcode):
            with pytest.raises(MalformedInstruction):
                unpack_instruction(w)
        else:
            assert pack_instruction(unpack_instruction(w)) == w


# -- static checks -------------------------------------------------------------

def test_legal_examples():
    for inst in (NOP,
                 Instruction(Opcode.SVMAC, isa.IMM, isa.dmem(4), isa.VREG0),
                 Instruction(Opcode.VVADD, isa.N, isa.VREG0, isa.S, drain=True),
                 Instruction(Opcode.MOV, isa.spad(1), isa.NULL, isa.S, spill=True),
                 Instruction(Opcode.NOP, bypass=True)):
        assert violations(inst) == [], inst
        assert check_instruction(inst) is inst


@pytest.mark.parametrize("inst, why", [
    (Instruction(Opcode.VVADD, isa.N, isa.VREG0, isa.N), "reads and writes port N"),
    (Instruction(Opcode.SVMAC, isa.dmem(0), isa.dmem(4), isa.VREG0), "scalar operand"),
    (Instruction(Opcode.VVMAC, isa.dmem(0), isa.dmem(4), isa.S), "accumulator"),
    (Instruction(Opcode.MOV, isa.dmem(4094), isa.NULL, isa.VREG0), "misaligned"),
    (Instruction(Opcode.MOV, 0x1002, isa.NULL, isa.VREG0), "misaligned"),
    (Instruction(Opcode.MOV, 0x1204, isa.NULL, isa.VREG0), "unreadable"),
    (Instruction(Opcode.MOV, isa.VREG0, isa.NULL, isa.S, bypass=True), "both drive S"),
    (Instruction(Opcode.MOV, isa.spad(0), isa.NULL, isa.spad(1), drain=True), "more than one scratchpad write"),
    (Instruction(Opcode.MOV, isa.VREG0, isa.NULL, isa.S, spill=True), "spill needs"),
])
def test_illegal_examples(inst, why):
    v = violations(inst)
    assert any(why in s for s in v), v
    with pytest.raises(MalformedInstruction):
        check_instruction(inst)


@given(insts)
def test_conflict_predicate(inst):
    # an instruction touching the same port for read and write is always rejected
    both = port_reads(inst) & port_writes(inst)
    if both and inst.valid:
        assert any("reads and writes port" in s for s in violations(inst))


@given(insts)
def test_violations_is_pure(inst):
    assert violations(inst) == violations(inst)
