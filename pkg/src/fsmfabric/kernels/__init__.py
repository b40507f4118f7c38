"""Kernel mappings: plans, shipped programs and the run_* entry points."""

from .plan import MappingPlan, DegenerateShape, plan_spmm, plan_sddmm
from .patterns import Unstructured, NM, Window
from .spmm import run_spmm, run_gemm, KernelResult
from .sddmm import run_sddmm, run_window_sddmm, window_mask
from .affine import AccessFunction, check_affine_mappability
from .spatial import run_bias_chain
