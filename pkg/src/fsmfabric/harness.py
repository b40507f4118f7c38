"""Experiment runner: expands a config into runs, checks every run against
its oracle, and writes one report row per run.

Config (YAML or JSON)::

    name: spad_sweep
    kernel: spmm          # spmm | spmm_nm | gemm | sddmm | window_sddmm
    array: 8x8
    shapes: [[128, 64, 32]]
    sparsity: [0.6, 0.8, 0.95]   # A sparsity (spmm), mask sparsity (sddmm)
    nm: [[2, 4]]                 # spmm_nm only
    window: [4]                  # window_sddmm only; seq_len = M = N
    spad_depth: [1, 2, 4, 8, 16]
    seeds: [0, 1, 2]
    sram_bytes: [262144]         # optional; defaults to the array's data memory
    bw_bytes_per_cycle: 17       # scalar or list

SRAM size and bandwidth only enter the analytic traffic model, so runs that
differ only in those share one simulation.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import yaml

from . import memsys
from .fabric import FabricConfig
from .kernels import run_spmm, run_gemm, run_sddmm, run_window_sddmm, NM, Window
from .oracles import oracle_spmm, oracle_sddmm
from .workloads import gen_matrix, gen_dense, gen_mask, SparsitySpec, UniformRandom

log = logging.getLogger(__name__)

KERNELS = ("spmm", "spmm_nm", "gemm", "sddmm", "window_sddmm")

COLUMNS = (
    "row", "kernel", "M", "K", "N", "pattern", "sparsity", "spad_depth", "array", "seed",
    "cycles", "active_lane_cycles", "total_lane_cycles", "utilization", "logical_utilization",
    "spad_reads", "spad_writes", "dmem_reads", "dmem_writes", "noc_transfers",
    "fsm_transitions", "instructions", "messages", "vsum_ops", "offchip_bytes",
    "sram_bytes", "bw_bytes_per_cycle", "runtime_cycles", "bound", "oracle_match", "error",
)


@dataclass(frozen=True)
class RunSpec:
    row: int
    kernel: str
    shape: tuple
    pattern: str
    sparsity: float
    spad_depth: int
    array: tuple
    seed: int
    sram_bytes: int = 0
    bw: float = 17


def parse_array(text):
    try:
        x, y = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ValueError(f"array must look like 8x8, got {text!r}") from None
    return x, y


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return cfg


def expand(cfg: dict, seed=None, spad_depth=None, array=None) -> list:
    """Config -> ordered RunSpecs.  Overrides replace the config's grids."""
    kernel = cfg.get("kernel", "spmm")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {', '.join(KERNELS)}")
    shapes = cfg.get("shapes") or [cfg.get("shape", [64, 64, 64])]
    arr = parse_array(array or cfg.get("array", "8x8"))
    seeds = [seed] if seed is not None else list(cfg.get("seeds", [0]))
    depths = [spad_depth] if spad_depth is not None else list(cfg.get("spad_depth", [16]))
    srams = list(cfg.get("sram_bytes", [0]))
    bws = cfg.get("bw_bytes_per_cycle", 17)
    bws = list(bws) if isinstance(bws, (list, tuple)) else [bws]
    if kernel == "spmm_nm":
        pats = [(f"nm{n}:{m}", 1 - n / m) for n, m in cfg.get("nm", [[2, 4]])]
    elif kernel == "window_sddmm":
        pats = [(f"window{w}", None) for w in cfg.get("window", [4])]
    elif kernel == "gemm":
        pats = [("dense", 0.0)]
    else:
        pats = [("uniform", float(r)) for r in cfg.get("sparsity", [0.0])]
    out = []
    for shape, (pname, rate), d, s, sram, bw in product(shapes, pats, depths, seeds, srams, bws):
        out.append(RunSpec(len(out), kernel, tuple(int(v) for v in shape), pname, rate,
                           int(d), arr, int(s), int(sram), bw))
    return out


def _inputs(spec: RunSpec):
    M, K, N = spec.shape
    base = spec.seed * 1_000_003 + M * 8191 + K * 127 + N
    if spec.kernel in ("spmm", "spmm_nm"):
        if spec.pattern.startswith("nm"):
            n, m = (int(v) for v in spec.pattern[2:].split(":"))
            kind = NM(n, m)
        else:
            kind = UniformRandom(spec.sparsity)
        A = gen_matrix(M, K, SparsitySpec(kind, base))
        return A, gen_dense(K, N, base + 1), kind
    if spec.kernel == "gemm":
        return gen_dense(M, K, base), gen_dense(K, N, base + 1), None
    if spec.kernel == "window_sddmm":
        w = int(spec.pattern[len("window"):])
        return gen_dense(M, K, base), gen_dense(K, N, base + 1), Window(w, M)
    mask = gen_mask(M, N, spec.sparsity, base + 2)
    return gen_dense(M, K, base), gen_dense(K, N, base + 1), mask


def _sim_key(spec: RunSpec):
    # SRAM size and bandwidth only feed the analytic traffic model, never the simulation
    return (spec.kernel, spec.shape, spec.pattern, spec.sparsity, spec.spad_depth,
            spec.array, spec.seed)


def _simulate(spec: RunSpec, keep_traces=False, verbose_log=None):
    """Returns (KernelResult, oracle match, A)."""
    cfg = FabricConfig(x_dim=spec.array[0], y_dim=spec.array[1], spad_entries=spec.spad_depth)
    A, B, extra = _inputs(spec)
    if spec.kernel == "gemm":
        res = run_gemm(A, B, cfg, keep_traces=keep_traces, log=verbose_log)
        ref = oracle_spmm(A, B)
    elif spec.kernel in ("spmm", "spmm_nm"):
        res = run_spmm(A, B, cfg, pattern=extra if isinstance(extra, NM) else None,
                       keep_traces=keep_traces, log=verbose_log)
        ref = oracle_spmm(A, B)
    elif spec.kernel == "window_sddmm":
        res = run_window_sddmm(A, B, extra.width, extra.seq_len, cfg, keep_traces, verbose_log)
        ref = oracle_sddmm(A, B, extra.mask())
    else:
        res = run_sddmm(A, B, extra, cfg, keep_traces=keep_traces, log=verbose_log)
        ref = oracle_sddmm(A, B, extra)
    return res, bool(np.array_equal(res.C, ref)), A


def execute(spec: RunSpec, keep_traces=False, verbose_log=None, cache=None):
    """Run one spec; returns (report row, KernelResult or None).

    ``cache`` (a dict) lets specs that differ only in SRAM size or
    bandwidth share one simulation.
    """
    M, K, N = spec.shape
    row = {c: "" for c in COLUMNS}
    row.update(row=spec.row, kernel=spec.kernel, M=M, K=K, N=N, pattern=spec.pattern,
               sparsity="" if spec.sparsity is None else round(spec.sparsity, 6),
               spad_depth=spec.spad_depth, array=f"{spec.array[0]}x{spec.array[1]}",
               seed=spec.seed, oracle_match=False)
    res = None
    try:
        key = _sim_key(spec)
        if cache is not None and key in cache:
            res, match, A = cache[key]
        else:
            res, match, A = _simulate(spec, keep_traces, verbose_log)
            if cache is not None:
                cache[key] = (res, match, A)
        met = res.metrics
        d = met.as_dict()
        for k in COLUMNS:
            if k in d:
                row[k] = d[k]
        row["logical_utilization"] = res.logical_utilization
        sram = spec.sram_bytes or spec.array[0] * spec.array[1] * FabricConfig().dmem_bytes
        row["sram_bytes"] = sram
        row["bw_bytes_per_cycle"] = spec.bw
        if spec.kernel in ("sddmm", "window_sddmm"):
            # operands stream once, only masked outputs leave
            rep = memsys.TrafficReport(M * K, K * N, res.info["outputs"])
        else:
            nnz = M * K if spec.kernel == "gemm" else int(np.count_nonzero(A))
            rep = memsys.offchip_traffic(memsys.plan_tiles(M, K, N, nnz, sram))
        cyc, bound = memsys.bandwidth_bound_runtime(rep, met.cycles, spec.bw)
        row["offchip_bytes"] = rep.total
        row["runtime_cycles"] = cyc
        row["bound"] = bound.value
        row["oracle_match"] = match
    except Exception as e:  # a failing run becomes an error row, the sweep goes on
        log.warning("row %d failed: %s", spec.row, e)
        row["error"] = f"{type(e).__name__}: {e}"
        row["oracle_match"] = False
    return row, res


def _execute_group(specs):
    cache = {}
    return [execute(s, cache=cache)[0] for s in specs]


def run_experiment(config, seed=None, spad_depth=None, array=None, jobs=1) -> list:
    """config: path or dict.  Rows come back in row order whatever ``jobs`` is."""
    cfg = load_config(config) if not isinstance(config, dict) else config
    specs = expand(cfg, seed, spad_depth, array)
    groups = {}
    for s in specs:
        groups.setdefault(_sim_key(s), []).append(s)
    groups = list(groups.values())
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_execute_group, groups))
    else:
        done = [_execute_group(g) for g in groups]
    return sorted((r for rows in done for r in rows), key=lambda r: r["row"])


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def format_rows(rows, fmt="csv") -> str:
    if fmt == "json":
        return json.dumps([{c: r[c] for c in COLUMNS} for r in rows], indent=1) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in COLUMNS])
    return buf.getvalue()


def write_rows(rows, path, fmt="csv"):
    with open(path, "w") as fh:
        fh.write(format_rows(rows, fmt))


def all_match(rows) -> bool:
    return bool(rows) and all(r["oracle_match"] is True and not r["error"] for r in rows)
