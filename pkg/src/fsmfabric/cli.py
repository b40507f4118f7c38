"""Command line entry point: run / asm / oracle / trace."""

import argparse
import logging
import os
import sys

import numpy as np

from . import harness, microcode
from .fabric import dump_trace
from .kernels.programs import SHIPPED, program_text
from .oracles import oracle_spmm, oracle_sddmm
from .workloads import read_matrix, write_dense


def _common(p):
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--spad-depth", type=int, help="override the scratchpad depth grid")
    p.add_argument("--array", help="array size as XxY, e.g. 8x8")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--verbose", "-v", action="store_true")


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_program(arg):
    if os.path.exists(arg):
        with open(arg) as fh:
            return microcode.parse_program(fh.read())
    if arg in SHIPPED:
        return microcode.parse_program(program_text(arg))
    raise SystemExit(f"no program file or shipped program named {arg!r}")


def cmd_run(a):
    rows = harness.run_experiment(a.config, seed=a.seed, spad_depth=a.spad_depth,
                                  array=a.array, jobs=a.jobs)
    _emit(harness.format_rows(rows, a.format), a.out)
    bad = [r for r in rows if r["oracle_match"] is not True]
    if bad:
        logging.error("%d of %d rows failed the oracle check or errored", len(bad), len(rows))
        return 1
    return 0


def cmd_asm(a):
    src = a.program
    if src.endswith((".lut", ".bin")):
        # bitstream -> listing, names come from the program it was built from
        if not a.source:
            raise SystemExit("disassembling needs --source <program>")
        prog = _load_program(a.source)
        lut = microcode.read_bitstream(src)
        bad = microcode.verify_equivalence(prog, lut)
        text = microcode.disassemble(prog, lut) + "\n"
        _emit(text, a.out)
        if bad:
            logging.error("%d entries disagree with %s", len(bad), a.source)
            return 1
        return 0
    prog = _load_program(src)
    gaps = microcode.uncovered(prog)
    if gaps:
        logging.error("%s: %d input tuples have no rule and are not declared unreachable",
                      prog.name, len(gaps))
        return 1
    lut = microcode.assemble(prog)
    bad = microcode.verify_equivalence(prog, lut)
    if bad:
        logging.error("assembler/interpreter mismatch at %d entries", len(bad))
        return 1
    out = a.out or f"{prog.name}.lut"
    microcode.write_bitstream(lut, out)
    logging.info("%s: %d entries written to %s", prog.name, len(lut), out)
    if a.verbose:
        print(microcode.disassemble(prog, lut))
    return 0


def cmd_oracle(a):
    A = read_matrix(a.inputs[0])
    B = read_matrix(a.inputs[1])
    if a.kernel in ("spmm", "gemm"):
        C = oracle_spmm(A, B)
    else:
        if not a.mask:
            raise SystemExit("sddmm needs --mask <file>")
        mask = read_matrix(a.mask) != 0
        C = oracle_sddmm(A, B, mask)
    if a.check:
        from .kernels import run_spmm, run_gemm, run_sddmm
        run = {"spmm": lambda: run_spmm(A, B), "gemm": lambda: run_gemm(A, B),
               "sddmm": lambda: run_sddmm(A, B, mask)}[a.kernel]
        res = run()
        ok = np.array_equal(res.C, C)
        logging.warning("simulator %s the oracle (%d cycles)", "matches" if ok else "DIFFERS FROM",
                        res.metrics.cycles)
        if not ok:
            return 1
    if a.out:
        write_dense(a.out, C)
    else:
        np.savetxt(sys.stdout, C, fmt="%d")
    return 0


def cmd_trace(a):
    cfg = harness.load_config(a.config)
    specs = harness.expand(cfg, a.seed, a.spad_depth, a.array)
    if not specs:
        raise SystemExit("config expands to no runs")
    spec = specs[a.row]
    events = [] if a.verbose else None
    row, res = harness.execute(spec, keep_traces=True, verbose_log=events)
    if res is None:
        raise SystemExit(row["error"])
    fh = open(a.out, "w") if a.out else sys.stdout
    try:
        for p, tr in enumerate(res.traces):
            for (x, y) in sorted(tr, key=lambda k: (k[1], k[0])):
                fh.write(f"# pass {p} pe {x} {y}\n")
                dump_trace(tr[(x, y)] or (), fh)
        if events:
            fh.write("# events\n")
            fh.write("\n".join(events) + "\n")
    finally:
        if a.out:
            fh.close()
    return 0 if row["oracle_match"] else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="fsmfabric", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    _common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("asm", help="assemble a program, or disassemble a bitstream")
    p.add_argument("program", help=".fsm file, shipped program name, or .lut bitstream")
    p.add_argument("--source", help="program a bitstream was built from")
    _common(p)
    p.set_defaults(fn=cmd_asm)

    p = sub.add_parser("oracle", help="reference result for matrix files")
    p.add_argument("kernel", choices=("spmm", "gemm", "sddmm"))
    p.add_argument("inputs", nargs=2, metavar="MATRIX")
    p.add_argument("--mask")
    p.add_argument("--check", action="store_true", help="also simulate and compare")
    _common(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("trace", help="per-PE instruction traces of one run")
    p.add_argument("config")
    p.add_argument("--row", type=int, default=0, help="which expanded run to trace")
    _common(p)
    p.set_defaults(fn=cmd_trace)
    return ap


def main(argv=None):
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return a.fn(a)


if __name__ == "__main__":
    sys.exit(main())
