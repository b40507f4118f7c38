"""Masked dense x dense (SDDMM) and its sliding-window special case.

K is split over the columns (W vectors of V lanes per PE), N over the rows
(H output columns per PE row), B stays put.  A rows come in from the north
edge: a feeder drives one vector per cycle per column and tells row 0 via
an orchestrator message.  Every row copies the vector into its scratchpad
and passes it south.  Per masked output the row issues W VVMACs and one
VVADD that chains the per-column partial vectors eastwards; the east edge
reduces the chained vector to a scalar.
"""

import numpy as np

from ..fabric import Fabric, FabricConfig
from ..isa import E
from ..orchestrator import OrchMessage, Token
from ..pe import SimError, wrap32
from .patterns import Window
from .plan import plan_sddmm, MappingPlan
from .programs import load_program, lut_for
from .spmm import KernelResult, as_int8, check_staggered

TAG_VEC, TAG_REDUCE, TAG_POP = 1, 2, 3
MSG_AVEC = 1


def window_mask(width, seq_len):
    return Window(width, seq_len).mask()


class NorthFeeder:
    """Streams A vectors into the top row under credit control.

    Vector s may be sent once every row has released vector s - DEPTH.
    Each row's release counter reaches the feeder y + 1 cycles late.
    """

    def __init__(self, A_pad, plan: MappingPlan, pop_index):
        self.A = A_pad
        self.W, self.V, self.X, self.Y = plan.W, plan.V, plan.x_dim, plan.y_dim
        self.D = plan.spad_depth
        self.total = A_pad.shape[0] * self.W
        self.next = 0
        self.sent = {}          # cycle -> vector id
        self.last = None
        self.pop_index = pop_index
        self.hist = [[] for _ in range(self.Y)]

    @property
    def done(self):
        return self.next >= self.total and (self.last is None or self._cycle > self.last + 3 * (self.X - 1))

    def _released(self, y, c):
        h = self.hist[y]
        i = c - (y + 1)
        return h[i] if 0 <= i < len(h) else 0

    def step(self, c, fab):
        self._cycle = c
        for y, o in enumerate(fab.orchs):
            self.hist[y].append(o.regs.meta[self.pop_index])
        msg = None
        if self.next < self.total:
            s = self.next
            if all(s < self._released(y, c) + self.D for y in range(self.Y)):
                msg = OrchMessage(MSG_AVEC, s)
                self.sent[c] = s
                self.last = c
                self.next += 1
        vals = {}
        for x in range(self.X):
            s = self.sent.get(c - 3 * x)
            if s is not None:
                m, w = divmod(s, self.W)
                k = (x * self.W + w) * self.V
                vals[x] = tuple(int(v) for v in self.A[m, k:k + self.V])
        return msg, vals


def sddmm_streams(mask, plan: MappingPlan):
    M, N = mask.shape
    W, H = plan.W, plan.H
    streams = []
    for y in range(plan.y_dim):
        n0, n1 = y * H, min((y + 1) * H, N)
        toks = []
        for m in range(M):
            for n in range(n0, n1):
                if mask[m, n]:
                    h = n - n0
                    toks.extend(Token(TAG_VEC, 0, m * W + w, h * W + w) for w in range(W))
                    toks.append(Token(TAG_REDUCE, 0, m, n))
            toks.append(Token(TAG_POP, 0, m, -1))
        streams.append(toks)
    return streams


def _load_b(fab, Bp, plan):
    W, V, H = plan.W, plan.V, plan.H
    for y in range(plan.y_dim):
        for x in range(plan.x_dim):
            buf = bytearray()
            for h in range(H):
                for w in range(W):
                    k = (x * W + w) * V
                    buf += Bp[k:k + V, y * H + h].astype(np.int8).tobytes()
            fab.pes[y][x].dmem[:len(buf)] = buf


def run_sddmm(A, B, mask, cfg: FabricConfig = None, keep_traces=False, log=None) -> KernelResult:
    """C = mask * (A @ B); ``mask`` is a boolean array or a Window pattern."""
    cfg = cfg or FabricConfig()
    A = as_int8(A, "A")
    B = as_int8(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    M, K = A.shape
    N = B.shape[1]
    if isinstance(mask, Window):
        mask = mask.mask()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (M, N):
        raise ValueError(f"mask shape {mask.shape} does not match output {(M, N)}")
    plan = plan_sddmm(M, K, N, cfg)
    _, Kp, Np = plan.padded
    Ap = np.zeros((M, Kp), dtype=np.int64)
    Ap[:, :K] = A
    Bp = np.zeros((Kp, Np), dtype=np.int64)
    Bp[:K, :N] = B
    prog = load_program(plan.program, **plan.consts)
    streams = sddmm_streams(mask, plan)
    feeder = NorthFeeder(Ap, plan, prog.meta.index("pop"))
    fab = Fabric(cfg, programs=prog, streams=streams, starts=plan.starts,
                 luts=lut_for(prog), feeder=feeder, log=log)
    _load_b(fab, Bp, plan)
    fab.run()
    check_staggered(fab)

    # east edge: one chained vector per REDUCE, reduced to a scalar there;
    # the reduction is booked on the last column
    C = np.zeros((M, N), dtype=np.int64)
    X = plan.x_dim
    for y, o in enumerate(fab.orchs):
        issued = [(c, t) for c, inst, t in o.out_log if inst.res == E]
        got = fab.east[y]
        if len(got) != len(issued):
            raise SimError(f"row {y}: {len(got)} east outputs for {len(issued)} reductions")
        for (c, vec), (ic, t) in zip(got, issued):
            if c != ic + 2 + 3 * (X - 1):
                raise SimError(f"row {y}: output ({t.rid},{t.cid}) at {c}, expected {ic + 2 + 3 * (X - 1)}")
            C[t.rid, t.cid] = wrap32(sum(vec))
        fab.pes[y][X - 1].cnt.vsum_ops += len(got)
    met = fab.metrics()
    if met.dmem_writes:
        raise SimError("B was rewritten during the run")
    outs = int(mask.sum())
    met.offchip_bytes = M * K + K * N + outs
    logical = outs * K / met.total_lane_cycles if met.total_lane_cycles else 0.0
    traces = []
    if keep_traces:
        traces.append({(x, y): fab.pes[y][x].trace for y in range(plan.y_dim) for x in range(X)})
    info = {"outputs": outs, "b_reloads": met.dmem_writes, "a_vectors": feeder.total}
    return KernelResult(C, met, plan, logical, traces, info)


def run_window_sddmm(A, B, width, seq_len, cfg: FabricConfig = None, keep_traces=False, log=None):
    """Banded attention scores: each query row needs ``width`` keys."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[0] != seq_len or B.shape[1] != seq_len:
        raise ValueError(f"window SDDMM expects {seq_len} x K and K x {seq_len} operands")
    return run_sddmm(A, B, Window(width, seq_len), cfg, keep_traces, log)
