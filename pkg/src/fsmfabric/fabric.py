"""X x Y PE array with per-row orchestrators, the circuit-switched data
links, the staggered instruction network and the global cycle engine.

Link timing: a value committed to a port in cycle c sits on the link and is
visible to the neighbour's LOAD in cycle c+1 only.  Values reaching the
bottom edge (S of the last row) or the east edge (E of the last column)
land in edge collectors; any other edge write is an error.
"""

from dataclasses import dataclass, field, asdict

from .isa import Dir, Instruction, Opcode, NOP, check_instruction, pack_instruction, format_word
from .pe import PE, RendezvousViolation, RouterConflict, SimError
from .orchestrator import Orchestrator


class ConfigError(ValueError):
    pass


@dataclass
class FabricConfig:
    x_dim: int = 8
    y_dim: int = 8
    simd_width: int = 4
    dmem_bytes: int = 4096
    spad_entries: int = 16
    pipeline_depth: int = 3
    offchip_bw_bytes_per_cycle: int = 17

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"{k} must be a positive integer, got {v!r}")
        if self.spad_entries > 16:
            raise ConfigError("spad_entries must be <= 16")
        if self.simd_width != 4:
            raise ConfigError("only V=4 lanes are modelled")
        if self.pipeline_depth != 3:
            raise ConfigError("only the 3-stage pipeline is modelled")
        if self.dmem_bytes > 4096:
            raise ConfigError("dmem_bytes must fit the 12-bit data-memory region")

    @property
    def lanes(self):
        return self.x_dim * self.y_dim * self.simd_width


@dataclass
class Metrics:
    cycles: int = 0
    active_lane_cycles: int = 0
    total_lane_cycles: int = 0
    spad_reads: int = 0
    spad_writes: int = 0
    dmem_reads: int = 0
    dmem_writes: int = 0
    noc_transfers: int = 0
    fsm_transitions: int = 0
    offchip_bytes: int = 0
    instructions: int = 0
    messages: int = 0
    vsum_ops: int = 0

    @property
    def utilization(self):
        return self.active_lane_cycles / self.total_lane_cycles if self.total_lane_cycles else 0.0

    def __add__(self, other):
        return Metrics(**{k: getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__})

    def as_dict(self):
        d = asdict(self)
        d["utilization"] = self.utilization
        return d


class Fabric:
    """Synchronous cycle engine.

    ``feeder`` (optional) models the north edge: ``feeder.step(cycle, fabric)``
    returns (message for row 0 or None, {column: value driven on its N port}).
    """

    def __init__(self, cfg: FabricConfig = None, programs=None, streams=None, starts=None,
                 luts=None, feeder=None, record_traces=True, log=None):
        self.cfg = cfg = cfg or FabricConfig()
        X, Y = cfg.x_dim, cfg.y_dim
        self.pes = [[PE(x, y, cfg.spad_entries, cfg.dmem_bytes) for x in range(X)] for y in range(Y)]
        if record_traces:
            for row in self.pes:
                for pe in row:
                    pe.trace = []
        self.orchs = [None] * Y
        if programs is not None:
            for y in range(Y):
                prog = programs[y] if isinstance(programs, (list, tuple)) else programs
                st = streams[y] if streams is not None else ()
                s0 = starts[y] if starts is not None else 0
                lut = luts[y] if isinstance(luts, (list, tuple)) else luts
                self.orchs[y] = Orchestrator(prog, st, start=s0, lut=lut, row=y)
        self.feeder = feeder
        self.cycle = 0
        self.links = [[[None] * 4 for _ in range(X)] for _ in range(Y)]
        self.bottom = [[] for _ in range(X)]   # (cycle, vec) exiting S of the last row
        self.east = [[] for _ in range(Y)]     # (cycle, vec) exiting E of the last column
        self.bottom_msgs = []                  # (cycle, OrchMessage) leaving the last row
        self.log = log                         # list of text lines when verbose
        self.hold = False   # spatial mode: HOLD broadcast to every PE

    # -- helpers -----------------------------------------------------------
    def pe(self, x, y):
        return self.pes[y][x]

    def _row_inst(self, y, cycle):
        o = self.orchs[y]
        if o is None:
            return NOP, None
        msg = o.take_message(cycle)
        inst, wfeed = o.step(cycle, msg)
        if self.log is not None and (inst is not NOP or msg is not None):
            self.log.append(f"{cycle} orch{y} {inst}" + (f" msg_in={tuple(msg)}" if msg else ""))
        return inst, wfeed

    def quiescent(self):
        if any(o is not None and (not o.done or o.inbox) for o in self.orchs):
            return False
        if self.feeder is not None and not self.feeder.done:
            return False
        for y, row in enumerate(self.pes):
            for x, pe in enumerate(row):
                if pe.s1 is not None or pe.s2 is not None:
                    return False
                f = pe.fwd
                if f[0] is not NOP or f[1] is not NOP or f[2] is not NOP:
                    return False
                if any(v is not None for v in self.links[y][x]):
                    return False
        return True

    # -- one cycle ----------------------------------------------------------
    def tick(self):
        c = self.cycle
        X, Y = self.cfg.x_dim, self.cfg.y_dim
        nxt = [[[None] * 4 for _ in range(X)] for _ in range(Y)]
        top_msg, top_vals = (None, {})
        if self.feeder is not None:
            top_msg, top_vals = self.feeder.step(c, self)
            if top_msg is not None:
                self.orchs[0].inbox[c] = top_msg
            for x, v in top_vals.items():
                self.links[0][x][Dir.N] = v
        hold = self.hold
        for y in range(Y):
            inst, wfeed = self._row_inst(y, c)
            if wfeed is not None:
                self.links[y][0][Dir.W] = wfeed
            o = self.orchs[y]
            if o is not None and o.outbox is not None:
                when, m = o.outbox
                o.outbox = None
                if y + 1 < Y and self.orchs[y + 1] is not None:
                    self.orchs[y + 1].inbox[when] = m
                else:
                    self.bottom_msgs.append((c, m))
            row = self.pes[y]
            links = self.links[y]
            for x in range(X):
                pe = row[x]
                ins = links[x]
                if hold:
                    inst = HOLD
                if (inst is NOP and pe.s1 is None and pe.s2 is None and pe.fwd[0] is NOP
                        and pe.fwd[1] is NOP and pe.fwd[2] is NOP and not pe.holding
                        and ins[0] is None and ins[1] is None and ins[2] is None and ins[3] is None):
                    continue  # nothing can happen in this PE this cycle
                out, inst = pe.tick(c, inst, ins)
                cons = pe.consumed
                for d in range(4):
                    if ins[d] is not None and not cons[d]:
                        raise RendezvousViolation(f"value on {Dir(d).name} port never consumed", c, (x, y))
                if out[0] is not None:
                    if y == 0:
                        raise RouterConflict("write off the north edge", c, (x, y))
                    nxt[y - 1][x][Dir.S] = out[0]
                if out[1] is not None:
                    if x == X - 1:
                        self.east[y].append((c, out[1]))
                    else:
                        nxt[y][x + 1][Dir.W] = out[1]
                if out[2] is not None:
                    if y == Y - 1:
                        self.bottom[x].append((c, out[2]))
                    else:
                        nxt[y + 1][x][Dir.N] = out[2]
                if out[3] is not None:
                    if x == 0:
                        raise RouterConflict("write off the west edge", c, (x, y))
                    nxt[y][x - 1][Dir.E] = out[3]
        self.links = nxt
        self.cycle += 1

    def run(self, max_cycles=10_000_000):
        while not self.quiescent():
            if self.cycle >= max_cycles:
                raise SimError(f"no quiescence after {max_cycles} cycles", self.cycle)
            self.tick()
        return self.metrics()

    # -- reporting -----------------------------------------------------------
    def metrics(self) -> Metrics:
        m = Metrics(cycles=self.cycle)
        for row in self.pes:
            for pe in row:
                k = pe.cnt
                m.active_lane_cycles += k.active_lanes
                m.spad_reads += k.spad_reads
                m.spad_writes += k.spad_writes
                m.dmem_reads += k.dmem_reads
                m.dmem_writes += k.dmem_writes
                m.noc_transfers += k.noc_transfers
                m.vsum_ops += k.vsum_ops
        for o in self.orchs:
            if o is not None:
                m.fsm_transitions += o.transitions
                m.instructions += o.issued
                m.messages += o.messages
        m.total_lane_cycles = self.cycle * self.cfg.lanes
        return m

    def staggered_trace(self, row, x):
        return list(self.pes[row][x].trace or ())


def staggered_violations(fab: Fabric, depth=3):
    """(row, x) pairs whose trace is not the west neighbour's shifted by ``depth``."""
    bad = []
    for y, row in enumerate(fab.pes):
        for x in range(1, len(row)):
            a = row[x - 1].trace
            b = row[x].trace
            if a is None or b is None:
                continue
            if len(a) != len(b) or any(cb != ca + depth or ib is not ia for (ca, ia), (cb, ib) in zip(a, b)):
                bad.append((y, x))
    return bad


def dump_trace(trace, fh):
    for cyc, inst in trace:
        fh.write(f"{cyc} {format_word(pack_instruction(inst))}\n")


# --- spatial execution mode --------------------------------------------------

HOLD = Instruction(Opcode.HOLD)


def _as_bubble(inst):
    return Instruction(inst.op, inst.op1, inst.op2, inst.res, inst.imm,
                       inst.bypass, inst.drain, inst.spill, valid=False)


class SpatialFeed:
    """Row controller for spatial mode: the configuration bubbles, then the
    west-edge data stream (one vector per cycle) while HOLD is asserted."""

    def __init__(self, insts, data=()):
        self.seq = [_as_bubble(insts[i]) for i in reversed(range(len(insts))) for _ in range(3)]
        self.data = list(data)
        self.start = len(self.seq)
        self.inbox = {}
        self.outbox = None
        self.transitions = self.issued = self.messages = 0

    @property
    def done(self):
        return True

    def take_message(self, cycle):
        return None

    def step(self, cycle, msg):
        if cycle < len(self.seq):
            return self.seq[cycle], None
        k = cycle - self.start
        return NOP, (self.data[k] if 0 <= k < len(self.data) else None)


def spatial_configure(fab: Fabric, per_pe, data=None):
    """Preload per_pe[y][x] into each PE and assert HOLD.

    Returns the configuration latency in cycles (3 per column).  ``data[y]``
    optionally lists vectors to feed row y's west port once HOLD is up;
    call ``fab.tick()`` / ``run_spatial`` afterwards to execute.
    """
    X, Y = fab.cfg.x_dim, fab.cfg.y_dim
    for row in per_pe:
        for inst in row:
            check_instruction(inst)
    if len(per_pe) != Y or any(len(r) != X for r in per_pe):
        raise ConfigError(f"need {Y} rows of {X} instructions")
    for y in range(Y):
        fab.orchs[y] = SpatialFeed(per_pe[y], data[y] if data else ())
    start = fab.cycle
    for _ in range(3 * X):
        fab.tick()
    for y in range(Y):
        for x in range(X):
            want, got = per_pe[y][x], fab.pes[y][x].config
            if pack_instruction(want) != pack_instruction(got):
                raise ConfigError(f"PE({x},{y}) latched {got}, expected {want}")
    fab.hold = True
    return fab.cycle - start


def run_spatial(fab: Fabric, cycles):
    for _ in range(cycles):
        fab.tick()
    return fab.metrics()
