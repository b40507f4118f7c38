"""Row-wise (Gustavson) SpMM on the array, plus GEMM and N:M as special
streams over the same path.

PE row y owns B rows [y*H, (y+1)*H); column x owns V output columns per
pass.  Every PE row sees every row of A restricted to its K slice, builds
a partial output row, and hands it south; the bottom edge collects them.
"""

from dataclasses import dataclass, field

import numpy as np

from ..fabric import Fabric, FabricConfig, Metrics, staggered_violations
from ..orchestrator import Token, MalformedStream
from ..pe import SimError
from .. import memsys
from .plan import MappingPlan, plan_spmm
from .patterns import NM, Unstructured
from .programs import load_program, lut_for

TAG_NNZ, TAG_ROWEND, TAG_DRAIN = 1, 2, 3


@dataclass
class KernelResult:
    C: np.ndarray
    metrics: Metrics
    plan: MappingPlan
    logical_utilization: float = 0.0
    traces: list = field(default_factory=list)    # per pass: {(x, y): [(cycle, inst)]}
    info: dict = field(default_factory=dict)


def as_int8(a, name):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and (a.min() < -128 or a.max() > 127):
        raise ValueError(f"{name} has values outside the INT8 range")
    return a.astype(np.int64)


def spmm_streams(A, plan: MappingPlan):
    """Per PE row: NNZ tokens in CID order then RowEnd, for every row of A."""
    M, K = A.shape
    H = plan.H
    streams = []
    for y in range(plan.y_dim):
        k0, k1 = y * H, min((y + 1) * H, K)
        toks = []
        blk = A[:, k0:k1] if k0 < K else np.zeros((M, 0), dtype=A.dtype)
        for m in range(M):
            row = blk[m]
            for j in np.flatnonzero(row):
                toks.append(Token(TAG_NNZ, int(row[j]), m, k0 + int(j)))
            toks.append(Token(TAG_ROWEND, 0, m, -1))
        toks.extend([Token(TAG_DRAIN, 0, -1, -1)] * plan.drain_tokens)
        streams.append(toks)
    return streams


def validate_stream(tokens, k_lo=None, k_hi=None):
    """Row order, CID order and RowEnd placement; raises MalformedStream."""
    expect = 0
    last_cid = -1
    draining = False
    for i, t in enumerate(tokens):
        if t.tag == TAG_DRAIN:
            draining = True
            continue
        if draining:
            raise MalformedStream(f"token {i}: {t} after drain began")
        if t.tag == TAG_NNZ:
            if t.rid != expect:
                raise MalformedStream(f"token {i}: NNZ for row {t.rid} while row {expect} is open")
            if t.cid <= last_cid:
                raise MalformedStream(f"token {i}: column {t.cid} not ascending")
            if k_lo is not None and not k_lo <= t.cid < k_hi:
                raise MalformedStream(f"token {i}: column {t.cid} outside [{k_lo}, {k_hi})")
            last_cid = t.cid
        elif t.tag == TAG_ROWEND:
            if t.rid != expect:
                raise MalformedStream(f"token {i}: RowEnd({t.rid}) out of order, expected {expect}")
            expect += 1
            last_cid = -1
        else:
            raise MalformedStream(f"token {i}: unknown tag {t.tag}")
    return expect


def load_b(fab: Fabric, Bp, plan: MappingPlan, col0):
    """Place B[y*H + h, col0 + 4x : +4] at dmem offset 4h of PE(x, y)."""
    V, H = plan.V, plan.H
    for y in range(plan.y_dim):
        for x in range(plan.x_dim):
            pe = fab.pes[y][x]
            c = col0 + x * V
            blk = Bp[y * H:(y + 1) * H, c:c + V]
            pe.dmem[:blk.size] = blk.astype(np.int8).tobytes()


def check_staggered(fab):
    bad = staggered_violations(fab)
    if bad:
        raise SimError(f"staggered-issue law broken in rows/cols {bad[:4]}", fab.cycle)


def collect_bottom(fab: Fabric, C, col0, V):
    """Match bottom-edge vectors to the psum messages leaving the last row."""
    msgs = fab.bottom_msgs
    for x, col in enumerate(fab.bottom):
        if len(col) != len(msgs):
            raise SimError(f"column {x}: {len(col)} vectors for {len(msgs)} psum messages")
        for (c, vec), (mc, m) in zip(col, msgs):
            if c != mc + 2 + 3 * x:
                raise SimError(f"column {x}: psum {m.rid} left at {c}, expected {mc + 2 + 3 * x}")
            C[m.rid, col0 + x * V: col0 + (x + 1) * V] += vec
    return len(msgs)


def simulate_spmm(plan: MappingPlan, streams, B, cfg: FabricConfig, keep_traces=False, log=None):
    """Run every column pass; returns (C_padded, Metrics, traces, info)."""
    M = plan.shape[0]
    _, Kp, Np = plan.padded
    for y, s in enumerate(streams):
        validate_stream(s, y * plan.H, (y + 1) * plan.H)
    Bp = np.zeros((Kp, Np), dtype=np.int64)
    Bp[:B.shape[0], :B.shape[1]] = B
    prog = load_program(plan.program, **plan.consts)
    lut = lut_for(prog)
    C = np.zeros((M, Np), dtype=np.int64)
    total = Metrics()
    traces = []
    info = {"merged": 0, "collected": 0, "psums": 0}
    for p in range(plan.passes):
        fab = Fabric(cfg, programs=prog, streams=streams, starts=plan.starts, luts=lut, log=log)
        col0 = p * plan.x_dim * plan.V
        load_b(fab, Bp, plan, col0)
        fab.run()
        check_staggered(fab)
        collected = collect_bottom(fab, C, col0, plan.V)
        merged = sum(o.received - o.forwarded for o in fab.orchs)
        if merged + collected != plan.y_dim * M:
            raise SimError(f"psum conservation: {merged} merged + {collected} collected "
                           f"!= {plan.y_dim * M} produced")
        info["merged"] += merged
        info["collected"] += collected
        info["psums"] += plan.y_dim * M
        total = total + fab.metrics()
        if keep_traces:
            traces.append({(x, y): fab.pes[y][x].trace for y in range(plan.y_dim)
                           for x in range(plan.x_dim)})
    return C, total, traces, info


def _offchip(A, plan, cfg):
    # B of one pass is resident in the distributed data memories
    M, K, N = plan.shape
    sram = cfg.x_dim * cfg.y_dim * cfg.dmem_bytes
    try:
        sch = memsys.plan_tiles(M, K, N, int(np.count_nonzero(A)), sram)
    except memsys.InfeasibleTiling:
        return 0
    return memsys.offchip_traffic(sch).total


def run_spmm(A, B, cfg: FabricConfig = None, pattern=None, keep_traces=False, log=None) -> KernelResult:
    """C = A @ B with A streamed as sparse tokens.

    ``pattern`` None / Unstructured uses the buffered program; NM(n, m)
    checks the structure and uses the unbuffered one.
    """
    cfg = cfg or FabricConfig()
    A = as_int8(A, "A")
    B = as_int8(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    buffered = not isinstance(pattern, NM)
    if isinstance(pattern, NM) and not pattern.holds(A):
        raise ValueError(f"A does not satisfy {pattern.n}:{pattern.m} sparsity")
    if pattern is not None and not isinstance(pattern, (NM, Unstructured)):
        raise TypeError(f"SpMM takes Unstructured or NM patterns, not {type(pattern).__name__}")
    M, K = A.shape
    N = B.shape[1]
    plan = plan_spmm(M, K, N, cfg, buffered=buffered)
    streams = spmm_streams(A, plan)
    C, met, traces, info = simulate_spmm(plan, streams, B, cfg, keep_traces, log)
    met.offchip_bytes = _offchip(A, plan, cfg)
    nnz = int(np.count_nonzero(A))
    logical = nnz * N * 1.0 / met.total_lane_cycles if met.total_lane_cycles else 0.0
    info["nnz"] = nnz
    return KernelResult(C[:, :N], met, plan, logical, traces, info)


def run_gemm(A, B, cfg: FabricConfig = None, keep_traces=False, log=None) -> KernelResult:
    """Dense A streamed with every column present; no buffering."""
    cfg = cfg or FabricConfig()
    A = as_int8(A, "A")
    B = as_int8(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    M, K = A.shape
    N = B.shape[1]
    plan = plan_spmm(M, K, N, cfg, buffered=False)
    plan.kernel = "gemm"
    # zeros are issued like any other element: the stream is fully dense
    streams = []
    for y in range(plan.y_dim):
        k0, k1 = y * plan.H, min((y + 1) * plan.H, K)
        toks = []
        for m in range(M):
            toks.extend(Token(TAG_NNZ, int(A[m, k]), m, k) for k in range(k0, k1))
            toks.append(Token(TAG_ROWEND, 0, m, -1))
        streams.append(toks)
    C, met, traces, info = simulate_spmm(plan, streams, B, cfg, keep_traces, log)
    met.offchip_bytes = _offchip(np.ones_like(A), plan, cfg)
    logical = M * K * N * 1.0 / met.total_lane_cycles if met.total_lane_cycles else 0.0
    return KernelResult(C[:, :N], met, plan, logical, traces, info)
