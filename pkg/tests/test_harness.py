import json

import pytest

from fsmfabric import harness
from fsmfabric.harness import (COLUMNS, RunSpec, expand, execute, run_experiment, format_rows,
                               write_rows, all_match, parse_array)


def small(kernel, **kw):
    cfg = {"kernel": kernel, "array": "4x4", "shapes": [[16, 16, 16]], "seeds": [0]}
    cfg.update(kw)
    return cfg


def test_parse_array():
    assert parse_array("8x4") == (8, 4)
    with pytest.raises(ValueError):
        parse_array("8by8")


def test_expand_grid_and_overrides():
    cfg = small("spmm", sparsity=[0.5, 0.8], spad_depth=[1, 16], seeds=[0, 1])
    specs = expand(cfg)
    assert len(specs) == 8
    assert [s.row for s in specs] == list(range(8))
    one = expand(cfg, seed=3, spad_depth=2, array="2x2")
    assert len(one) == 2
    assert all(s.seed == 3 and s.spad_depth == 2 and s.array == (2, 2) for s in one)
    with pytest.raises(ValueError):
        expand({"kernel": "conv"})


@pytest.mark.parametrize("cfg", [
    small("spmm", sparsity=[0.6]),
    small("spmm_nm", nm=[[1, 4]]),
    small("gemm"),
    small("sddmm", sparsity=[0.5]),
    small("window_sddmm", window=[3]),
])
def test_every_kernel_matches_its_oracle(cfg):
    rows = run_experiment(cfg)
    assert all_match(rows)
    r = rows[0]
    assert set(r) == set(COLUMNS)
    assert 0 <= r["utilization"] <= 1
    assert r["active_lane_cycles"] <= r["total_lane_cycles"]
    assert r["runtime_cycles"] >= r["cycles"]


def test_error_becomes_a_row():
    # sddmm needs W <= depth; K = 128 on 4 columns gives W = 8
    cfg = small("sddmm", shapes=[[8, 128, 8]], spad_depth=[2], sparsity=[0.5])
    rows = run_experiment(cfg)
    assert rows[0]["oracle_match"] is False
    assert rows[0]["error"].startswith("ConfigError")
    assert not all_match(rows)


def test_metrics_are_sums_of_pe_counters():
    spec = expand(small("spmm", sparsity=[0.7], spad_depth=[2]))[0]
    row, res = execute(spec)
    assert row["oracle_match"] is True
    assert row["spad_writes"] == res.metrics.spad_writes
    assert row["utilization"] == res.metrics.active_lane_cycles / res.metrics.total_lane_cycles


def test_formats(tmp_path):
    rows = run_experiment(small("spmm", sparsity=[0.5], seeds=[0, 1]))
    text = format_rows(rows, "csv")
    lines = text.splitlines()
    assert lines[0].split(",") == list(COLUMNS)
    assert len(lines) == 3
    js = json.loads(format_rows(rows, "json"))
    assert [list(r) for r in js] == [list(COLUMNS)] * 2
    write_rows(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == text
    with pytest.raises(ValueError):
        format_rows(rows, "xml")


def test_parallel_rows_keep_order():
    cfg = small("spmm", sparsity=[0.3, 0.9], seeds=[0, 1])
    a = run_experiment(cfg)
    b = run_experiment(cfg, jobs=2)
    assert format_rows(a) == format_rows(b)


def test_config_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("kernel: gemm\narray: 2x2\nshapes: [[4, 4, 8]]\n")
    rows = run_experiment(str(p))
    assert all_match(rows)
    p.write_text("- just a list\n")
    with pytest.raises(ValueError):
        run_experiment(str(p))
