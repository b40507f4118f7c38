"""Dense-stationary tiling, off-chip traffic accounting and the
max(compute, traffic / bandwidth) runtime model.

B is split into column slabs that fit the on-chip SRAM.  Each phase keeps
one slab resident and replays the whole A token stream against it, so the
C columns of a phase are final when the phase ends.
"""

from dataclasses import dataclass, field
from enum import Enum
from math import ceil

VALUE_BYTES = 1
COORD_BYTES = 2
ROWEND_BYTES = 2


class InfeasibleTiling(ValueError):
    pass


class Bound(str, Enum):
    COMPUTE = "compute"
    BANDWIDTH = "bandwidth"


def stream_bytes(nnz: int, rows: int) -> int:
    """Wire size of a sparse token stream: value + coordinate per nonzero,
    one RowEnd marker per row."""
    return nnz * (VALUE_BYTES + COORD_BYTES) + rows * ROWEND_BYTES


@dataclass
class Phase:
    b_cols: tuple            # resident B columns [start, stop)
    bytes_A: int
    bytes_B: int
    bytes_C: int


@dataclass
class TileSchedule:
    M: int
    K: int
    N: int
    nnz: int
    sram_bytes: int
    element_bytes: int
    phases: list = field(default_factory=list)

    @property
    def n_phases(self):
        return len(self.phases)


def plan_tiles(M, K, N, nnz_A, sram_bytes, element_bytes=1) -> TileSchedule:
    for d in (M, K, N):
        if d <= 0:
            raise ValueError(f"dimensions must be positive, got {(M, K, N)}")
    col = K * element_bytes
    if sram_bytes < col:
        raise InfeasibleTiling(f"{sram_bytes} B of SRAM cannot hold one B column ({col} B)")
    per = min(N, sram_bytes // col)
    a = stream_bytes(nnz_A, M)
    sched = TileSchedule(M, K, N, nnz_A, sram_bytes, element_bytes)
    for c0 in range(0, N, per):
        c1 = min(N, c0 + per)
        w = c1 - c0
        sched.phases.append(Phase((c0, c1), a, K * w * element_bytes, M * w * element_bytes))
    return sched


@dataclass
class TrafficReport:
    bytes_in_A: int = 0
    bytes_in_B: int = 0
    bytes_out_C: int = 0
    compute_cycles: int = 0
    bandwidth_bound_cycles: int = 0
    cycles: int = 0
    bound: Bound = Bound.COMPUTE

    @property
    def total(self):
        return self.bytes_in_A + self.bytes_in_B + self.bytes_out_C


def offchip_traffic(schedule: TileSchedule, element_bytes=None) -> TrafficReport:
    # element_bytes is fixed by the schedule; the argument only guards misuse
    if element_bytes is not None and element_bytes != schedule.element_bytes:
        raise ValueError("element size differs from the one the schedule was built for")
    r = TrafficReport()
    for ph in schedule.phases:
        r.bytes_in_A += ph.bytes_A
        r.bytes_in_B += ph.bytes_B
        r.bytes_out_C += ph.bytes_C
    return r


def bandwidth_bound_runtime(report: TrafficReport, compute_cycles: int, bw_bytes_per_cycle: float):
    """Returns (cycles, bound) and fills the runtime fields of ``report``."""
    if bw_bytes_per_cycle <= 0:
        raise ValueError("bandwidth must be positive")
    mem = ceil(report.total / bw_bytes_per_cycle)
    cycles = max(compute_cycles, mem)
    bound = Bound.BANDWIDTH if mem > compute_cycles else Bound.COMPUTE
    report.compute_cycles = compute_cycles
    report.bandwidth_bound_cycles = mem
    report.cycles = cycles
    report.bound = bound
    return cycles, bound


def arithmetic_intensity(macs: int, report: TrafficReport) -> float:
    return macs / report.total if report.total else float("inf")


def sram_sweep(M, K, N, nnz_A, srams, compute_cycles, bw_bytes_per_cycle=17, element_bytes=1):
    """One row per SRAM size: phases, traffic split, runtime and bound."""
    rows = []
    for s in srams:
        sch = plan_tiles(M, K, N, nnz_A, s, element_bytes)
        rep = offchip_traffic(sch)
        cyc, bound = bandwidth_bound_runtime(rep, compute_cycles, bw_bytes_per_cycle)
        rows.append({"sram_bytes": s, "phases": sch.n_phases, "bytes_A": rep.bytes_in_A,
                     "bytes_B": rep.bytes_in_B, "bytes_C": rep.bytes_out_C,
                     "total_bytes": rep.total, "cycles": cyc, "bound": bound.value})
    return rows
