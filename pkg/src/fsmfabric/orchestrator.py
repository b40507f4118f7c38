"""Per-row FSM orchestrator: registers, the static condition unit, the
static address taps and the LUT-driven instruction/message generator.

A message emitted at cycle t travels with the instruction's COMMIT at the
row's first PE (t+2) and reaches the south orchestrator one cycle later, so
the receiver reacts at t+3 -- the same cycle the psum written to S by
PE(0, y) shows up on PE(0, y+1)'s north port.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from . import isa
from .isa import Instruction, Opcode, check_instruction, NOP
from .microcode import (FsmProgram, LutOutput, IllegalTransition, Sel, assemble,
                        decode_entry, lut_index, AGM_BYPASS, AGM_DRAIN, AGM_SPILL,
                        AGM_WFEED, PAY_ZERO, PAY_TOKEN_RID, PAY_TOKEN_CID, PAY_MSG_RID)

MSG_LATENCY = 3  # issue -> reaction cycle in the south orchestrator


class MalformedStream(ValueError):
    pass


Token = namedtuple("Token", "tag value rid cid")
NO_TOKEN = Token(0, 0, -1, -1)

OrchMessage = namedtuple("OrchMessage", "id rid")


@dataclass
class OrchRegisters:
    state: int = 0
    meta: list = None
    token: Token = NO_TOKEN
    msg: OrchMessage = None

    @property
    def msg_id(self):
        return 0 if self.msg is None else self.msg.id


_SEL_ADDR = {Sel.NULL: isa.NULL, Sel.IMM: isa.IMM, Sel.N: isa.N, Sel.E: isa.E,
             Sel.S: isa.S, Sel.W: isa.W, Sel.VREG0: isa.vreg(0), Sel.VREG1: isa.vreg(1),
             Sel.VREG2: isa.vreg(2), Sel.VREG3: isa.vreg(3)}


def _source_value(src, regs, meta_idx):
    if src == "token.rid":
        return regs.token.rid
    if src == "token.cid":
        return regs.token.cid
    if src == "msg.rid":
        return regs.msg.rid if regs.msg is not None else -1
    if src == "zero":
        return 0
    if src.startswith("meta."):
        return regs.meta[meta_idx[src[5:]]]
    raise ValueError(f"unknown source {src!r}")


def eval_conditions(regs: OrchRegisters, prog: FsmProgram, meta_idx=None) -> int:
    """Both static predicates, packed as c1<<1 | c0.  Pure."""
    if meta_idx is None:
        meta_idx = {n: i for i, n in enumerate(prog.meta)}
    bits = 0
    for k, pred in enumerate(prog.conds):
        a = pred.args
        kind = pred.kind
        if kind == "false":
            v = False
        elif kind == "managing":
            if a[0] == "msg.rid" and regs.msg is None:
                v = False
            else:
                r = _source_value(a[0], regs, meta_idx)
                lo = regs.meta[meta_idx[a[1]]]
                v = lo <= r <= lo + regs.meta[meta_idx[a[2]]]
        elif kind == "ge":
            v = regs.meta[meta_idx[a[0]]] >= prog.const(a[1])
        elif kind == "lt":
            v = _source_value(a[0], regs, meta_idx) < regs.meta[meta_idx[a[1]]]
        elif kind == "eq":
            v = _source_value(a[0], regs, meta_idx) == _source_value(a[1], regs, meta_idx)
        else:
            raise ValueError(f"unknown predicate {kind!r}")
        bits |= int(bool(v)) << k
    return bits


_tables = {}


def _decoded(lut):
    key = lut.tobytes()
    t = _tables.get(key)
    if t is None:
        t = _tables[key] = [decode_entry(w) for w in lut]
    return t


# built instructions are immutable, so every orchestrator shares them
_INST_CACHE = {}


class Orchestrator:
    """One row's orchestrator.  ``lut`` defaults to assembling ``program``."""

    def __init__(self, program: FsmProgram, stream=(), start=0, lut=None, row=0):
        self.prog = program
        self.row = row
        lut = assemble(program) if lut is None else np.asarray(lut, dtype=np.uint64)
        self.table = _decoded(lut)
        self.meta_idx = {n: i for i, n in enumerate(program.meta)}
        self.regs = OrchRegisters(meta=[0] * len(program.meta))
        self.stream = list(stream)
        self.pos = 0
        self.start = start
        self.transitions = 0
        self.issued = 0
        self.messages = 0
        self.received = 0           # messages reacted to
        self.forwarded = 0          # of those, passed on south (bypass)
        self.inbox = {}             # cycle -> OrchMessage to react to
        self.outbox = None          # (cycle, OrchMessage) emitted this step
        self.out_log = []           # (cycle, inst, token) for port-writing issues
        self.msg_log = []           # (cycle, OrchMessage) emitted
        self._cache = _INST_CACHE
        self._taps = [self._compile_tap(t) for t in program.taps]
        self._actions = [self._compile_action(a) for a in program.actions]

    # -- static units ------------------------------------------------------
    def _compile_tap(self, tap):
        C = self.prog.const(tap.modulus)
        if C <= 0:
            raise ValueError(f"tap {tap.name}: modulus must be positive")
        live = self.meta_idx.get(tap.live) if tap.live else None
        return (tap.mode, tap.source, C, tap.scale, tap.base, live)

    def _tap_addr(self, k, regs):
        mode, src, C, scale, base, live = self._taps[k]
        v = _source_value(src, regs, self.meta_idx)
        if mode == "dmem":
            return isa.dmem(base + (v % C) * scale)
        if mode == "spad":
            return isa.spad(v % C)
        if mode == "psum":
            if v == regs.meta[live]:
                return isa.VREG0
            return isa.spad(v % C)
        raise ValueError(f"unknown tap mode {mode!r}")

    def _compile_action(self, act):
        ups = []
        for u in act.updates:
            i = self.meta_idx[u.field]
            if u.value in ("token.rid", "token.cid", "msg.rid"):
                ups.append((i, u.op, None, u.value))
            else:
                ups.append((i, u.op, self.prog.const(u.value), None))
        return act.consume, ups

    def _addr(self, sel, regs):
        if sel >= Sel.TAP0:
            return self._tap_addr(sel - Sel.TAP0, regs)
        return _SEL_ADDR[Sel(sel)]

    # -- stepping ----------------------------------------------------------
    @property
    def done(self):
        return self.pos >= len(self.stream)

    def head_token(self, cycle):
        if cycle >= self.start and self.pos < len(self.stream):
            return self.stream[self.pos]
        return NO_TOKEN

    def step(self, cycle, msg=None):
        """One cycle: returns (instruction, west_feed_value_or_None)."""
        regs = self.regs
        regs.token = tok = self.head_token(cycle)
        regs.msg = msg
        cond = eval_conditions(regs, self.prog, self.meta_idx)
        idx = lut_index(regs.state, tok.tag, regs.msg_id, cond)
        out = self.table[idx]
        if not out.valid:
            p = self.prog
            raise IllegalTransition(
                f"{p.name} row {self.row} cycle {cycle}: state={p.states[regs.state] if regs.state < len(p.states) else regs.state} "
                f"tag={p.tags[tok.tag] if tok.tag < len(p.tags) else tok.tag} "
                f"msg={regs.msg_id} cond={cond:02b}")
        inst = self._build(out, regs, tok)
        if msg is not None:
            self.received += 1
            if inst.bypass:
                self.forwarded += 1
        wfeed = None
        if out.addr_gen_mode & AGM_WFEED:
            from .pe import imm_vector
            wfeed = imm_vector(inst.imm)
        if out.msg_out_id:
            m = OrchMessage(out.msg_out_id, self._payload(out.msg_payload_sel, regs))
            self.outbox = (cycle + MSG_LATENCY, m)
            self.msg_log.append((cycle, m))
            self.messages += 1
        if out.meta_action:
            consume, ups = self._actions[out.meta_action]
            meta = regs.meta
            for i, op, c, src in ups:
                v = c if src is None else _source_value(src, regs, self.meta_idx)
                if op == "+=":
                    meta[i] += v
                elif op == "-=":
                    meta[i] -= v
                else:
                    meta[i] = v
            if consume:
                self.pos += 1
        if out.next_state != regs.state:
            self.transitions += 1
            regs.state = out.next_state
        if inst is not NOP:
            self.issued += 1
            if inst.res in (isa.S, isa.E) or inst.bypass:
                self.out_log.append((cycle, inst, tok))
        return inst, wfeed

    def take_message(self, cycle):
        return self.inbox.pop(cycle, None)

    def _payload(self, sel, regs):
        if sel == PAY_ZERO:
            return 0
        if sel == PAY_TOKEN_RID:
            return regs.token.rid
        if sel == PAY_TOKEN_CID:
            return regs.token.cid
        if sel == PAY_MSG_RID:
            return regs.msg.rid if regs.msg is not None else -1
        return regs.meta[sel - 4]

    def _build(self, out: LutOutput, regs, tok):
        agm = out.addr_gen_mode
        if out.opcode == 0 and not agm & (AGM_BYPASS | AGM_DRAIN | AGM_SPILL):
            return NOP
        a1 = self._addr(out.op1_sel, regs)
        a2 = self._addr(out.op2_sel, regs)
        ar = self._addr(out.res_sel, regs)
        key = (out.opcode, a1, a2, ar, tok.value, agm)
        inst = self._cache.get(key)
        if inst is None:
            inst = check_instruction(Instruction(
                Opcode(out.opcode), a1, a2, ar, tok.value,
                bypass=bool(agm & AGM_BYPASS), drain=bool(agm & AGM_DRAIN),
                spill=bool(agm & AGM_SPILL)))
            self._cache[key] = inst
        return inst


def orchestrator_step(regs: OrchRegisters, token: Token, north, prog: FsmProgram, lut=None):
    """Functional single step over explicit registers.

    Returns (instruction, south message or None, new registers).  Does not
    touch any stream; ``token`` is whatever the stream presents this cycle.
    """
    o = Orchestrator(prog, [token] if token.tag else [], lut=lut)
    o.regs = OrchRegisters(state=regs.state, meta=list(regs.meta), token=token, msg=north)
    inst, _ = o.step(0, north)
    south = o.msg_log[0][1] if o.msg_log else None
    new = OrchRegisters(state=o.regs.state, meta=list(o.regs.meta))
    return inst, south, new, bool(o.pos)
