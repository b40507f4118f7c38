"""One processing element: LOAD / COMPUTE / COMMIT pipeline around a
4-lane INT8-in, INT32-accumulate vector unit, a 4 KB data memory and a
16-entry scratchpad.

Tick order inside a cycle is COMMIT, COMPUTE, LOAD.  LOAD sees memory
after this cycle's commit and forwards from the instruction sitting in
COMPUTE, so an instruction stream behaves as if executed in order.
"""

import struct
from dataclasses import dataclass, replace

from .isa import (Dir, Instruction, Opcode, RegionKind, NOP, MAC_OPS,
                  SPAD_ENTRY_BYTES, DMEM_BYTES)

V = 4
ZERO = (0, 0, 0, 0)
_VEC = struct.Struct("<4b")
_IMM = struct.Struct("<i")


class SimError(RuntimeError):
    """Base for errors raised while stepping the fabric."""

    def __init__(self, msg, cycle=None, where=None):
        self.cycle = cycle
        self.where = where
        loc = ""
        if cycle is not None:
            loc = f" [cycle {cycle}" + (f" at {where}" if where is not None else "") + "]"
        super().__init__(msg + loc)


class RendezvousViolation(SimError):
    pass


class RouterConflict(SimError):
    pass


class OperandShape(ValueError):
    pass


class BufferFull(RuntimeError):
    pass


class BufferEmpty(RuntimeError):
    pass


def wrap32(v: int) -> int:
    return ((v + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def imm_vector(imm: int):
    return _VEC.unpack(_IMM.pack(imm))


def _is_vec(v):
    return isinstance(v, tuple) and len(v) == V


def vector_alu(op, a, b=ZERO, acc=ZERO):
    """Pure lane arithmetic.  Returns a 4-tuple, or an int for VSUM."""
    op = Opcode(op)
    if op == Opcode.SVMAC:
        if not isinstance(a, int) or not _is_vec(b) or not _is_vec(acc):
            raise OperandShape("SVMAC takes (scalar, vector, vector)")
        return tuple(wrap32(c + a * x) for c, x in zip(acc, b))
    if op == Opcode.VSUM:
        if not _is_vec(a):
            raise OperandShape("VSUM takes a vector")
        return wrap32(sum(a))
    if op in (Opcode.NOP, Opcode.MOV, Opcode.HOLD):
        return a
    if not _is_vec(a) or not _is_vec(b):
        raise OperandShape(f"{op.name} takes vectors")
    if op == Opcode.VVMAC:
        if not _is_vec(acc):
            raise OperandShape("VVMAC accumulator must be a vector")
        return tuple(wrap32(c + x * y) for c, x, y in zip(acc, a, b))
    if op == Opcode.VVADD:
        return tuple(wrap32(x + y) for x, y in zip(a, b))
    raise OperandShape(f"unknown opcode {op}")


@dataclass
class FifoMeta:
    """Circular FIFO bookkeeping for row-indexed entries."""
    cap: int = 16
    rid_start: int = 0
    head: int = 0
    length: int = 0

    @property
    def full(self):
        return self.length >= self.cap

    @property
    def empty(self):
        return self.length == 0

    def push(self) -> int:
        if self.full:
            raise BufferFull(f"push on full buffer (cap {self.cap})")
        slot = (self.head + self.length) % self.cap
        self.length += 1
        return slot

    def pop(self) -> int:
        if self.empty:
            raise BufferEmpty("pop on empty buffer")
        slot = self.head
        self.head = (self.head + 1) % self.cap
        self.length -= 1
        self.rid_start += 1
        return slot

    def is_managing(self, rid: int) -> bool:
        return self.rid_start <= rid < self.rid_start + self.length

    def index_of(self, rid: int):
        if not self.is_managing(rid):
            return None
        return (self.head + rid - self.rid_start) % self.cap


class Scratchpad:
    """Scratchpad storage plus its FIFO view (used by buffer-managing programs)."""

    def __init__(self, entries=16, cap=None):
        self.entries = [ZERO] * entries
        self.meta = FifoMeta(cap=cap or entries)

    def push(self, vec):
        self.entries[self.meta.push()] = vec

    def pop(self):
        slot = self.meta.pop()
        v = self.entries[slot]
        self.entries[slot] = ZERO
        return v

    def peek(self):
        if self.meta.empty:
            raise BufferEmpty("peek on empty buffer")
        return self.entries[self.meta.head]

    def index_of(self, rid):
        return self.meta.index_of(rid)

    def is_managing(self, rid):
        return self.meta.is_managing(rid)


# operand kinds after decoding
K_NULL, K_IMM, K_PORT, K_VREG, K_SPAD, K_DMEM = range(6)
_KIND = {RegionKind.NULL: K_NULL, RegionKind.IMM: K_IMM, RegionKind.PORT: K_PORT,
         RegionKind.VREG: K_VREG, RegionKind.SPAD: K_SPAD, RegionKind.DMEM: K_DMEM}

def _plan(inst: Instruction):
    """Decoded form: (op, srcs, res, drain_locs, spill_loc, lanes)."""
    p = inst.__dict__.get("_plan")
    if p is not None:
        return p
    regs = inst.regions
    locs = []
    for r in regs:
        k = _KIND.get(r.kind)
        if k is None:
            raise OperandShape(f"invalid address in {inst}")
        idx = r.offset // SPAD_ENTRY_BYTES if k == K_SPAD else r.offset
        locs.append((k, idx))
    op = inst.op
    if op in (Opcode.NOP, Opcode.HOLD):
        srcs = ()
    elif op in (Opcode.MOV, Opcode.VSUM):
        srcs = (locs[0],)
    elif op in MAC_OPS:
        srcs = (locs[0], locs[1], locs[2])
    else:
        srcs = (locs[0], locs[1])
    res = locs[2] if op not in (Opcode.NOP, Opcode.HOLD) else (K_NULL, 0)
    drains = ()
    if inst.drain:
        drains = tuple(l for l in srcs[:2] if l[0] in (K_VREG, K_SPAD) and l != res)
    spill = None
    if inst.spill:
        spill = next(l for l in srcs[:2] if l[0] == K_SPAD)
    lanes = V if op in MAC_OPS else 0
    p = (op, srcs, res, drains, spill, lanes)
    inst.__dict__["_plan"] = p   # instructions are immutable; memoise on the object
    return p


@dataclass
class PeCounters:
    active_lanes: int = 0
    issued: int = 0          # non-NOP instructions loaded
    dmem_reads: int = 0
    dmem_writes: int = 0
    spad_reads: int = 0
    spad_writes: int = 0
    noc_transfers: int = 0
    vsum_ops: int = 0


class PE:
    """Single PE; ``tick`` advances it one cycle."""

    def __init__(self, x=0, y=0, spad_entries=16, dmem_bytes=DMEM_BYTES):
        self.x, self.y = x, y
        self.vregs = [ZERO] * 4
        self.dmem = bytearray(dmem_bytes)
        self.spad = Scratchpad(spad_entries)
        self.s1 = None      # (inst, values) waiting for COMPUTE
        self.s2 = None      # (inst, writes) waiting for COMMIT
        self.fwd = [NOP, NOP, NOP]
        self.fwd_i = 0
        self.cnt = PeCounters()
        self.trace = None   # list of (cycle, Instruction) when enabled
        self.config = NOP   # spatial-mode latch
        self.holding = False
        self.consumed = [False] * 4

    # -- storage helpers ------------------------------------------------
    def load_vec(self, off, vec):
        for i, v in enumerate(vec):
            self.dmem[off + i] = v & 0xFF

    def read_dmem(self, off):
        return _VEC.unpack_from(self.dmem, off)

    @property
    def idle(self):
        return self.s1 is None and self.s2 is None

    # -- pipeline ----------------------------------------------------------
    def tick(self, cycle, inst, ports):
        """Advance one cycle.

        ``ports`` is a 4-list of input values (None = not driven).  Returns
        (out, forwarded): out is a 4-list of values driven this cycle,
        forwarded is the instruction handed to the east neighbour.
        """
        out = [None, None, None, None]
        s2 = self.s2
        if s2 is not None:
            self._commit(cycle, s2, out)
        s1 = self.s1
        self.s2 = self._compute(s1) if s1 is not None else None
        fi = self.fwd_i
        forwarded = self.fwd[fi]
        self.fwd[fi] = inst
        self.fwd_i = (fi + 1) % 3
        run = inst
        if inst.op == Opcode.HOLD:
            self.holding = True
            run = self.config
        elif not inst.valid:
            self.config = replace(inst, valid=True)
            self.holding = False
            run = NOP
        else:
            self.holding = False
        self.consumed = c = [False, False, False, False]
        if run.op == Opcode.NOP and not run.bypass:
            self.s1 = None
        else:
            self.s1 = self._load(cycle, run, ports, c)
        return out, forwarded

    def _load(self, cycle, inst, ports, consumed):
        if self.trace is not None:
            self.trace.append((cycle, inst))
        cnt = self.cnt
        cnt.issued += 1
        plan = _plan(inst)
        op, srcs, res, drains, spill, lanes = plan
        s2 = self.s2
        fwd = s2[2] if s2 is not None else None
        try:
            vals = []
            n = 0
            for loc in srcs:
                k, i = loc
                if fwd and loc in fwd:
                    v = fwd[loc]
                elif k == K_VREG:
                    v = self.vregs[i]
                elif k == K_DMEM:
                    cnt.dmem_reads += 1
                    v = _VEC.unpack_from(self.dmem, i)
                elif k == K_SPAD:
                    cnt.spad_reads += 1
                    v = self.spad.entries[i]
                elif k == K_PORT:
                    v = ports[i]
                    if v is None:
                        raise _Undriven(i)
                    consumed[i] = True
                elif k == K_IMM:
                    v = inst.imm if (n == 0 and op == Opcode.SVMAC) else imm_vector(inst.imm)
                else:
                    v = ZERO
                vals.append(v)
                n += 1
            byp = None
            if inst.bypass:
                byp = ports[Dir.N]
                if byp is None:
                    raise _Undriven(Dir.N)
                consumed[Dir.N] = True
            sv = None
            if spill is not None:
                sv = fwd[(K_VREG, 0)] if fwd and (K_VREG, 0) in fwd else self.vregs[0]
        except _Undriven as u:
            if self.holding:
                # spatial mode fires only on valid data
                return None
            raise RendezvousViolation(
                f"LOAD from undriven port {Dir(u.args[0]).name} by {inst}",
                cycle, (self.x, self.y)) from None
        return (plan, vals, byp, sv)

    def _compute(self, s1):
        plan, vals, byp, sv = s1
        op, srcs, res, drains, spill, lanes = plan
        # lanes wrap to int32: ((v + 2**31) & (2**32 - 1)) - 2**31
        if op == Opcode.SVMAC:
            a, b, acc = vals
            r = (((acc[0] + a * b[0] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[1] + a * b[1] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[2] + a * b[2] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[3] + a * b[3] + 0x80000000) & 0xFFFFFFFF) - 0x80000000)
        elif op == Opcode.VVMAC:
            a, b, acc = vals
            r = (((acc[0] + a[0] * b[0] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[1] + a[1] * b[1] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[2] + a[2] * b[2] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((acc[3] + a[3] * b[3] + 0x80000000) & 0xFFFFFFFF) - 0x80000000)
        elif op == Opcode.VVADD:
            a, b = vals
            r = (((a[0] + b[0] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((a[1] + b[1] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((a[2] + b[2] + 0x80000000) & 0xFFFFFFFF) - 0x80000000,
                 ((a[3] + b[3] + 0x80000000) & 0xFFFFFFFF) - 0x80000000)
        elif op == Opcode.VSUM:
            r = (wrap32(sum(vals[0])), 0, 0, 0)
            self.cnt.vsum_ops += 1
        elif op == Opcode.MOV:
            r = vals[0]
        else:
            r = None
        if lanes:
            self.cnt.active_lanes += lanes
        # storage writes, in commit order; later entries win on forwarding
        fw = {}
        for loc in drains:
            fw[loc] = ZERO
        if spill is not None:
            fw[spill] = sv
            fw[(K_VREG, 0)] = ZERO
        if r is not None:
            k = res[0]
            if k == K_VREG or k == K_SPAD:
                fw[res] = r
            elif k == K_DMEM:
                fw[res] = tuple(((v + 128) & 0xFF) - 128 for v in r)
        return (res, r, fw, byp)

    def _commit(self, cycle, s2, out):
        res, r, fw, byp = s2
        if fw:
            spad_w = 0
            for (k, i), v in fw.items():
                if k == K_VREG:
                    self.vregs[i] = v
                elif k == K_SPAD:
                    self.spad.entries[i] = v
                    spad_w += 1
                else:
                    self.load_vec(i, v)
                    self.cnt.dmem_writes += 1
            if spad_w > 1:
                raise RouterConflict("more than one scratchpad write in a cycle", cycle, (self.x, self.y))
            self.cnt.spad_writes += spad_w
        if res[0] == K_PORT and r is not None:
            out[res[1]] = r
            self.cnt.noc_transfers += 1
        if byp is not None:
            if out[2] is not None:
                raise RouterConflict("two commits to S", cycle, (self.x, self.y))
            out[2] = byp
            self.cnt.noc_transfers += 1


class _Undriven(Exception):
    pass
