"""Spatial execution example: every PE latches one instruction and fires it
whenever its west input carries data.

The example kernel is a bias chain: PE(x, y) adds its resident VREG1 to the
vector arriving from the west and passes the sum east, so row y returns
input + sum of its biases at the east edge, one result per cycle.
"""

import numpy as np

from ..fabric import Fabric, FabricConfig, spatial_configure, run_spatial
from ..isa import Instruction, Opcode, W, E, vreg


def bias_chain_program(cfg: FabricConfig):
    inst = Instruction(Opcode.VVADD, W, vreg(1), E)
    return [[inst] * cfg.x_dim for _ in range(cfg.y_dim)]


def run_bias_chain(data, biases, cfg: FabricConfig = None):
    """data: (Y, T, V) vectors per row; biases: (Y, X, V).

    Returns (outputs (Y, T, V), configuration cycles, Metrics, fabric).
    """
    cfg = cfg or FabricConfig()
    data = np.asarray(data, dtype=np.int64)
    biases = np.asarray(biases, dtype=np.int64)
    X, Y, V = cfg.x_dim, cfg.y_dim, cfg.simd_width
    if data.ndim != 3 or data.shape[0] != Y or data.shape[2] != V:
        raise ValueError(f"data must be ({Y}, T, {V})")
    if biases.shape != (Y, X, V):
        raise ValueError(f"biases must be ({Y}, {X}, {V})")
    fab = Fabric(cfg)
    for y in range(Y):
        for x in range(X):
            fab.pes[y][x].vregs[1] = tuple(int(v) for v in biases[y, x])
    feed = [[tuple(int(v) for v in vec) for vec in data[y]] for y in range(Y)]
    ncfg = spatial_configure(fab, bias_chain_program(cfg), feed)
    T = data.shape[1]
    met = run_spatial(fab, T + 3 * X)
    out = np.zeros_like(data)
    for y in range(Y):
        if len(fab.east[y]) != T:
            raise RuntimeError(f"row {y}: {len(fab.east[y])} outputs for {T} inputs")
        for t, (_, vec) in enumerate(fab.east[y]):
            out[y, t] = vec
    return out, ncfg, met, fab
