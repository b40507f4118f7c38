"""Mapping plans: tiling, padding, B placement and the per-row control
setup, serialisable as a small YAML record for inspection."""

from dataclasses import dataclass, field, asdict
from math import ceil

import yaml

from ..fabric import FabricConfig, ConfigError


class DegenerateShape(ValueError):
    pass


@dataclass
class MappingPlan:
    kernel: str
    shape: tuple                 # logical (M, K, N)
    padded: tuple                # padded (M, K, N)
    x_dim: int
    y_dim: int
    V: int
    W: int                       # SpMM: B columns per PE; SDDMM: vectors of K per PE
    H: int                       # SpMM: B rows per PE;  SDDMM: B columns per PE row
    passes: int = 1              # column passes (SpMM: W / V)
    program: str = ""
    consts: dict = field(default_factory=dict)
    starts: list = field(default_factory=list)
    spad_depth: int = 16
    drain_tokens: int = 0

    # --- the three views ------------------------------------------------
    def placement(self, x, y):
        """B elements resident in PE(x, y) for pass 0 as (k-range, n-range)."""
        if self.kernel == "sddmm":
            k0 = x * self.W * self.V
            return (k0, k0 + self.W * self.V), (y * self.H, (y + 1) * self.H)
        n0 = x * self.V
        return (y * self.H, (y + 1) * self.H), (n0, n0 + self.V)

    def as_record(self):
        d = asdict(self)
        d["shape"] = list(self.shape)
        d["padded"] = list(self.padded)
        return {
            "kernel": self.kernel,
            "data_provision": {
                "shape": d["shape"], "padded": d["padded"],
                "stream": "north edge A vectors" if self.kernel == "sddmm" else "row-major A tokens per PE row",
            },
            "placement": {
                "array": [self.x_dim, self.y_dim], "V": self.V, "W": self.W, "H": self.H,
                "passes": self.passes,
                "pe": {f"{x},{y}": [list(r) for r in self.placement(x, y)]
                       for y in range(self.y_dim) for x in range(self.x_dim)},
            },
            "control": {
                "program": self.program, "consts": dict(self.consts),
                "row_start_cycles": list(self.starts), "spad_depth": self.spad_depth,
                "drain_tokens": self.drain_tokens,
            },
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.as_record(), sort_keys=False)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())


def _check_dims(*dims):
    for d in dims:
        if not isinstance(d, (int,)) or d <= 0:
            raise DegenerateShape(f"dimensions must be positive integers, got {dims}")


def plan_spmm(M, K, N, cfg: FabricConfig = None, buffered=True) -> MappingPlan:
    """Row-wise SpMM: Y*H = K (B rows split over PE rows), X*W = N."""
    cfg = cfg or FabricConfig()
    _check_dims(M, K, N)
    X, Y, V = cfg.x_dim, cfg.y_dim, cfg.simd_width
    H = ceil(K / Y)
    if H * V > cfg.dmem_bytes:
        raise ConfigError(f"{H} B rows per PE do not fit {cfg.dmem_bytes} B of data memory")
    passes = ceil(N / (X * V))
    D = cfg.spad_entries
    prog = "spmm_buffered" if buffered else "spmm_register"
    consts = {"H": H, "DEPTH": D} if buffered else {"H": H}
    return MappingPlan(
        kernel="spmm", shape=(M, K, N), padded=(M, Y * H, passes * X * V),
        x_dim=X, y_dim=Y, V=V, W=passes * V, H=H, passes=passes,
        program=prog, consts=consts, starts=[3 * y for y in range(Y)],
        spad_depth=D, drain_tokens=min(M, D) if buffered else 0)


def plan_sddmm(M, K, N, cfg: FabricConfig = None) -> MappingPlan:
    """Inner-product SDDMM: W*X*V = K (K split over columns), Y*H = N."""
    cfg = cfg or FabricConfig()
    _check_dims(M, K, N)
    X, Y, V = cfg.x_dim, cfg.y_dim, cfg.simd_width
    W = ceil(K / (X * V))
    H = ceil(N / Y)
    D = cfg.spad_entries
    if D < W:
        raise ConfigError(f"SDDMM keeps a whole A row chunk resident: needs {W} scratchpad entries, have {D}")
    if H * W * V > cfg.dmem_bytes:
        raise ConfigError(f"B slice of {H * W * V} B does not fit data memory")
    return MappingPlan(
        kernel="sddmm", shape=(M, K, N), padded=(M, X * W * V, Y * H),
        x_dim=X, y_dim=Y, V=V, W=W, H=H, passes=1,
        program="sddmm", consts={"HW": H * W, "DEPTH": D, "W": W},
        starts=[0] * Y, spad_depth=D)
