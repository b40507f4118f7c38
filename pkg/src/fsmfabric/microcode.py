"""Orchestrator microcode: symbolic FSM programs, the LUT assembler, a rule
interpreter used as its oracle, and the equivalence checker.

LUT index (10 bits): state(3) | tag(3) | msg_id(2) | cond(2), cond = c1<<1 | c0.

LUT entry (48 bits, MSB first):
    next_state(3) opcode(4) op1_sel(4) op2_sel(4) res_sel(4) addr_gen_mode(4)
    msg_out_id(2) msg_payload_sel(3) meta_action(4) valid(1) reserved(15)

Everything that is not per-entry (condition predicates, address taps, the
meta-action table, constants) is static program configuration and lives
next to the LUT rather than inside it.

Program text is line oriented, '#' starts a comment::

    program spmm_register
    states RUN MAC ACC FLUSH BYPASS
    tags NONE NNZ ROWEND DRAIN
    msgs NONE PSUM
    meta rid_start len
    const H 2
    cond0 managing msg.rid rid_start len
    cond1 ge len 1
    tap B dmem token.cid mod H scale 4
    action close : consume; rid_start += 1
    rule * NNZ NONE xx -> SVMAC IMM B VREG0 act close next MAC
    unreachable * DRAIN * xx
"""

import re
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .isa import Opcode

LUT_ENTRIES = 1024
ENTRY_BITS = 48
MAX_STATES = 8
MAX_TAGS = 8
MAX_MSGS = 4
MAX_ACTIONS = 16
MAX_TAPS = 4


class ProgramError(ValueError):
    pass


class TooManyStates(ProgramError):
    pass


class AmbiguousRules(ProgramError):
    pass


class IllegalTransition(RuntimeError):
    pass


class Sel(IntEnum):
    NULL = 0
    IMM = 1
    N = 2
    E = 3
    S = 4
    W = 5
    VREG0 = 6
    VREG1 = 7
    VREG2 = 8
    VREG3 = 9
    TAP0 = 10
    TAP1 = 11
    TAP2 = 12
    TAP3 = 13


# addr_gen_mode flag bits
AGM_BYPASS = 1
AGM_DRAIN = 2
AGM_SPILL = 4
AGM_WFEED = 8   # drive the row's west edge with the immediate as a vector
_FLAGS = {"bypass": AGM_BYPASS, "drain": AGM_DRAIN, "spill": AGM_SPILL, "wfeed": AGM_WFEED}

# message payload selectors; 4..7 pick meta registers 0..3
PAY_ZERO, PAY_TOKEN_RID, PAY_TOKEN_CID, PAY_MSG_RID = range(4)
_PAYLOAD = {"zero": PAY_ZERO, "token.rid": PAY_TOKEN_RID, "token.cid": PAY_TOKEN_CID,
            "msg.rid": PAY_MSG_RID}

_FIELDS = (  # (name, width) MSB first
    ("next_state", 3), ("opcode", 4), ("op1_sel", 4), ("op2_sel", 4), ("res_sel", 4),
    ("addr_gen_mode", 4), ("msg_out_id", 2), ("msg_payload_sel", 3), ("meta_action", 4),
    ("valid", 1), ("reserved", 15),
)


@dataclass(frozen=True)
class LutOutput:
    next_state: int = 0
    opcode: int = 0
    op1_sel: int = 0
    op2_sel: int = 0
    res_sel: int = 0
    addr_gen_mode: int = 0
    msg_out_id: int = 0
    msg_payload_sel: int = 0
    meta_action: int = 0
    valid: int = 1
    reserved: int = 0

    def encode(self) -> int:
        w = 0
        for name, bits in _FIELDS:
            v = getattr(self, name)
            if not 0 <= v < (1 << bits):
                raise ProgramError(f"field {name}={v} does not fit in {bits} bits")
            w = (w << bits) | v
        return w

    @classmethod
    def decode(cls, word: int) -> "LutOutput":
        vals = {}
        for name, bits in reversed(_FIELDS):
            vals[name] = word & ((1 << bits) - 1)
            word >>= bits
        return cls(**vals)


ILLEGAL = LutOutput(valid=0)


def lut_index(state: int, tag: int, msg: int, cond: int) -> int:
    return (state << 7) | (tag << 4) | (msg << 2) | cond


def split_index(i: int):
    return (i >> 7) & 7, (i >> 4) & 7, (i >> 2) & 3, i & 3


# --- static configuration pieces -----------------------------------------

@dataclass(frozen=True)
class Tap:
    """Static address unit: region(source mod C) with an optional scale."""
    name: str
    mode: str           # dmem | spad | psum
    source: str         # token.rid | token.cid | msg.rid | meta.<f> | zero
    modulus: str        # int literal or const name
    scale: int = 4
    base: int = 0
    live: str = ""      # psum mode: meta field naming the row held in VREG0


@dataclass(frozen=True)
class Predicate:
    kind: str           # managing | ge | lt | eq | false
    args: tuple = ()


@dataclass(frozen=True)
class Update:
    field: str
    op: str             # '+=', '-=', '='
    value: str


@dataclass(frozen=True)
class Action:
    name: str
    consume: bool = False
    updates: tuple = ()


@dataclass(frozen=True)
class Rule:
    state: str
    tag: str
    msg: str
    cond: str           # two chars c0 c1 over {0,1,x}
    out: dict = field(hash=False, compare=False)
    prio: int = 0
    line: int = 0


@dataclass
class FsmProgram:
    name: str = "anon"
    states: list = field(default_factory=lambda: ["S0"])
    tags: list = field(default_factory=lambda: ["NONE"])
    msgs: list = field(default_factory=lambda: ["NONE"])
    meta: list = field(default_factory=list)
    consts: dict = field(default_factory=dict)
    conds: list = field(default_factory=lambda: [Predicate("false"), Predicate("false")])
    taps: list = field(default_factory=list)
    actions: list = field(default_factory=lambda: [Action("none")])
    rules: list = field(default_factory=list)
    unreachable: list = field(default_factory=list)
    text: str = ""

    # lookups
    def state_id(self, n):
        return self.states.index(n)

    def tag_id(self, n):
        return self.tags.index(n)

    def msg_id(self, n):
        return self.msgs.index(n)

    def const(self, v):
        if isinstance(v, int):
            return v
        if re.fullmatch(r"-?\d+", v):
            return int(v)
        if v not in self.consts:
            raise ProgramError(f"{self.name}: unknown constant {v!r}")
        return self.consts[v]

    def with_consts(self, **kw) -> "FsmProgram":
        from dataclasses import replace
        c = dict(self.consts)
        for k, v in kw.items():
            if k not in c:
                raise ProgramError(f"{self.name}: no constant {k}")
            c[k] = int(v)
        return replace(self, consts=c)

    def validate(self):
        if len(self.states) > MAX_STATES:
            raise TooManyStates(f"{len(self.states)} states, the state field holds {MAX_STATES}")
        if len(self.tags) > MAX_TAGS:
            raise ProgramError(f"{len(self.tags)} input tags exceed {MAX_TAGS}")
        if len(self.msgs) > MAX_MSGS:
            raise ProgramError(f"{len(self.msgs)} message ids exceed {MAX_MSGS}")
        if len(self.actions) > MAX_ACTIONS:
            raise ProgramError(f"{len(self.actions)} meta actions exceed {MAX_ACTIONS}")
        if len(self.taps) > MAX_TAPS:
            raise ProgramError(f"{len(self.taps)} taps exceed {MAX_TAPS}")
        if self.tags[0] != "NONE" or self.msgs[0] != "NONE":
            raise ProgramError("tag 0 and message 0 must be NONE")
        return self


# --- parser ---------------------------------------------------------------

_RULE_RE = re.compile(r"^rule\s+(\S+)\s+(\S+)\s+(\S+)\s+([01x]{2})(?:\s+prio\s+(-?\d+))?\s*->\s*(.+)$")
_UNREACH_RE = re.compile(r"^unreachable\s+(\S+)\s+(\S+)\s+(\S+)\s+([01x]{2})$")
_UPD_RE = re.compile(r"^(\w+)\s*(\+=|-=|=)\s*(\S+)$")


def _sel_value(prog, tok):
    tok = tok.upper() if tok.upper() in Sel.__members__ else tok
    if tok in Sel.__members__:
        return int(Sel[tok])
    names = [t.name for t in prog.taps]
    if tok in names:
        return int(Sel.TAP0) + names.index(tok)
    raise ProgramError(f"{prog.name}: unknown operand {tok!r}")


def _parse_out(prog, text, lineno):
    words = text.split()
    if len(words) < 4:
        raise ProgramError(f"line {lineno}: rule needs OPCODE op1 op2 res")
    try:
        opc = Opcode[words[0].upper()]
    except KeyError:
        raise ProgramError(f"line {lineno}: unknown opcode {words[0]!r}") from None
    out = {"opcode": int(opc), "op1_sel": _sel_value(prog, words[1]),
           "op2_sel": _sel_value(prog, words[2]), "res_sel": _sel_value(prog, words[3]),
           "addr_gen_mode": 0, "msg_out_id": 0, "msg_payload_sel": 0,
           "meta_action": 0, "next": "same"}
    i = 4
    while i < len(words):
        w = words[i]
        if w in _FLAGS:
            out["addr_gen_mode"] |= _FLAGS[w]
            i += 1
        elif w == "msg":
            mid, pay = words[i + 1], words[i + 2]
            if mid not in prog.msgs:
                raise ProgramError(f"line {lineno}: unknown message {mid!r}")
            out["msg_out_id"] = prog.msgs.index(mid)
            if pay in _PAYLOAD:
                out["msg_payload_sel"] = _PAYLOAD[pay]
            elif pay.startswith("meta.") and pay[5:] in prog.meta[:4]:
                out["msg_payload_sel"] = 4 + prog.meta.index(pay[5:])
            else:
                raise ProgramError(f"line {lineno}: bad payload {pay!r}")
            i += 3
        elif w == "act":
            names = [a.name for a in prog.actions]
            if words[i + 1] not in names:
                raise ProgramError(f"line {lineno}: unknown action {words[i + 1]!r}")
            out["meta_action"] = names.index(words[i + 1])
            i += 2
        elif w == "next":
            out["next"] = words[i + 1]
            i += 2
        else:
            raise ProgramError(f"line {lineno}: unexpected {w!r}")
    return out


def parse_program(text: str) -> FsmProgram:
    p = FsmProgram(text=text)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        args = rest.split()
        if head == "program":
            p.name = rest
        elif head == "states":
            p.states = args
        elif head == "tags":
            p.tags = args
        elif head == "msgs":
            p.msgs = args
        elif head == "meta":
            p.meta = args
        elif head == "const":
            p.consts[args[0]] = int(args[1])
        elif head in ("cond0", "cond1"):
            p.conds[int(head[-1])] = Predicate(args[0], tuple(args[1:]))
        elif head == "tap":
            name, mode, src = args[0], args[1], args[2]
            kw = dict(zip(args[3::2], args[4::2]))
            if "mod" not in kw:
                raise ProgramError(f"line {lineno}: tap needs 'mod'")
            p.taps.append(Tap(name, mode, src, kw["mod"], int(kw.get("scale", 4)),
                              int(kw.get("base", 0)), kw.get("live", "")))
        elif head == "action":
            name, _, body = rest.partition(":")
            consume, ups = False, []
            for part in body.split(";"):
                part = part.strip()
                if not part:
                    continue
                if part == "consume":
                    consume = True
                    continue
                m = _UPD_RE.match(part)
                if not m:
                    raise ProgramError(f"line {lineno}: bad update {part!r}")
                ups.append(Update(*m.groups()))
            p.actions.append(Action(name.strip(), consume, tuple(ups)))
        elif head == "rule":
            m = _RULE_RE.match(line)
            if not m:
                raise ProgramError(f"line {lineno}: cannot parse rule")
            st, tg, ms, cd, prio, body = m.groups()
            p.rules.append(Rule(st, tg, ms, cd, _parse_out(p, body, lineno), int(prio or 0), lineno))
        elif head == "unreachable":
            m = _UNREACH_RE.match(line)
            if not m:
                raise ProgramError(f"line {lineno}: cannot parse unreachable")
            p.unreachable.append(m.groups())
        else:
            raise ProgramError(f"line {lineno}: unknown directive {head!r}")
    p.validate()
    for r in p.rules:
        for nm, pool in ((r.state, p.states), (r.tag, p.tags), (r.msg, p.msgs)):
            if nm != "*" and nm not in pool:
                raise ProgramError(f"line {r.line}: unknown name {nm!r}")
        nxt = r.out["next"]
        if nxt != "same" and nxt not in p.states:
            raise ProgramError(f"line {r.line}: unknown next state {nxt!r}")
    return p


# --- rule matching (the interpreter) ---------------------------------------

def _matches(prog, rule, s, t, m, c):
    if rule.state != "*" and prog.states.index(rule.state) != s:
        return False
    if rule.tag != "*" and prog.tags.index(rule.tag) != t:
        return False
    if rule.msg != "*" and prog.msgs.index(rule.msg) != m:
        return False
    for bit, ch in enumerate(rule.cond):
        if ch != "x" and int(ch) != (c >> bit) & 1:
            return False
    return True


def _resolve(prog, s, t, m, c):
    if s >= len(prog.states) or t >= len(prog.tags) or m >= len(prog.msgs):
        return None
    hits = [r for r in prog.rules if _matches(prog, r, s, t, m, c)]
    if not hits:
        return None
    top = max(r.prio for r in hits)
    best = [r for r in hits if r.prio == top]
    if len(best) > 1:
        lines = ", ".join(str(r.line) for r in best)
        raise AmbiguousRules(f"{prog.name}: rules on lines {lines} overlap at "
                             f"state={s} tag={t} msg={m} cond={c:02b}")
    return best[0]


def _rule_output(prog, rule, s):
    o = dict(rule.out)
    nxt = o.pop("next")
    o["next_state"] = s if nxt == "same" else prog.states.index(nxt)
    return LutOutput(valid=1, **o)


def interpret_step(prog: FsmProgram, state: int, tag: int, msg: int, cond: int) -> LutOutput:
    rule = _resolve(prog, state, tag, msg, cond)
    if rule is None:
        raise IllegalTransition(f"{prog.name}: no rule for state={state} tag={tag} "
                                f"msg={msg} cond={cond:02b}")
    return _rule_output(prog, rule, state)


def uncovered(prog: FsmProgram) -> list:
    """(state, tag, msg, cond) tuples with neither a rule nor an
    ``unreachable`` declaration, over the declared name ranges."""
    marks = [Rule(*u, out={}) for u in prog.unreachable]
    gaps = []
    for s in range(len(prog.states)):
        for t in range(len(prog.tags)):
            for m in range(len(prog.msgs)):
                for c in range(4):
                    if _resolve(prog, s, t, m, c) is not None:
                        continue
                    if not any(_matches(prog, u, s, t, m, c) for u in marks):
                        gaps.append((s, t, m, c))
    return gaps


# --- assembler --------------------------------------------------------------

def assemble(prog: FsmProgram) -> np.ndarray:
    """Program -> 1024 x uint64 LUT (low 48 bits significant)."""
    prog.validate()
    lut = np.zeros(LUT_ENTRIES, dtype=np.uint64)
    for i in range(LUT_ENTRIES):
        s, t, m, c = split_index(i)
        rule = _resolve(prog, s, t, m, c)
        out = ILLEGAL if rule is None else _rule_output(prog, rule, s)
        lut[i] = out.encode()
    return lut


def decode_entry(word) -> LutOutput:
    return LutOutput.decode(int(word))


def verify_equivalence(prog: FsmProgram, lut) -> list:
    """Indices where the bitstream disagrees with the interpreter."""
    bad = []
    lut = np.asarray(lut, dtype=np.uint64)
    if lut.shape != (LUT_ENTRIES,):
        return list(range(LUT_ENTRIES))
    for i in range(LUT_ENTRIES):
        s, t, m, c = split_index(i)
        try:
            want = interpret_step(prog, s, t, m, c)
        except IllegalTransition:
            want = ILLEGAL
        if int(lut[i]) >> ENTRY_BITS or decode_entry(lut[i]) != want:
            bad.append(i)
    return bad


def write_bitstream(lut, path):
    arr = np.asarray(lut, dtype="<u8")
    if arr.shape != (LUT_ENTRIES,):
        raise ProgramError("bitstream must have 1024 entries")
    arr.tofile(path)


def read_bitstream(path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<u8")
    if raw.shape != (LUT_ENTRIES,):
        raise ProgramError(f"{path}: expected {LUT_ENTRIES} entries, found {raw.shape[0]}")
    if np.any(raw >> np.uint64(ENTRY_BITS)):
        raise ProgramError(f"{path}: bits above 48 set")
    return raw.astype(np.uint64)


def _name(pool, i):
    return pool[i] if i < len(pool) else f"#{i}"


def disassemble(prog: FsmProgram, lut) -> str:
    """One line per valid entry; mostly for eyeballing bitstreams.  Fields
    the program has no name for print as #n."""
    lines = []
    acts = [a.name for a in prog.actions]
    for i, w in enumerate(np.asarray(lut, dtype=np.uint64)):
        o = decode_entry(w)
        if not o.valid:
            continue
        s, t, m, c = split_index(i)
        op = Opcode(o.opcode).name if o.opcode < len(Opcode) else f"#{o.opcode}"
        sels = [Sel(v).name if v in Sel._value2member_map_ else f"#{v}"
                for v in (o.op1_sel, o.op2_sel, o.res_sel)]
        lines.append(f"{i:4d} {_name(prog.states, s):>8} {_name(prog.tags, t):>8} "
                     f"{_name(prog.msgs, m):>5} {c:02b} -> {op} {' '.join(sels)} "
                     f"agm={o.addr_gen_mode:04b} msg={o.msg_out_id}/{o.msg_payload_sel} "
                     f"act={_name(acts, o.meta_action)} next={_name(prog.states, o.next_state)}")
    return "\n".join(lines)
