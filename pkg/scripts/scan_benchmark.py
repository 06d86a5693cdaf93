#!/usr/bin/env python3
"""Batch-scan throughput at 1 versus 4 worker processes.

Builds a 10^4-column predictor panel against one continuous outcome, runs
the permutation scan at 1 and at 4 workers, and reports wall times, the
speed ratio, and the machine's core count. Also verifies that both runs
produce identical rows. The ratio is informative only on a machine that
actually has spare cores; this script reports, it does not assert.

Usage: python3 scripts/scan_benchmark.py [N_COLS] [N_ROWS] [N_PERM]
"""
import os
import sys
import time

import numpy as np

from psrkit.data_model import Column
from psrkit.rank_association import ScanConfig, batch_partial_spearman


def main(argv: list[str]) -> int:
    n_cols = int(argv[0]) if len(argv) > 0 else 10_000
    n_rows = int(argv[1]) if len(argv) > 1 else 300
    n_perm = int(argv[2]) if len(argv) > 2 else 199

    rng = np.random.default_rng(42)
    y = Column.continuous("y", rng.normal(0, 1, n_rows))
    preds = [
        Column.continuous(f"p{j:05d}", rng.integers(0, 3, n_rows).astype(float))
        for j in range(n_cols)
    ]
    print(
        f"scan: {n_cols} predictors x {n_rows} rows, {n_perm} permutations; "
        f"os.cpu_count() = {os.cpu_count()}"
    )

    results = {}
    times = {}
    for workers in (1, 4):
        cfg = ScanConfig(n_perm=n_perm, seed=7, workers=workers)
        start = time.perf_counter()
        results[workers] = batch_partial_spearman(y, None, preds, cfg)
        times[workers] = time.perf_counter() - start
        print(f"  workers={workers}: {times[workers]:.1f}s")

    same = results[1] == results[4]
    ratio = times[4] / times[1]
    print(f"  identical results across worker counts: {same}")
    print(f"  time(4 workers) / time(1 worker) = {ratio:.2f}")
    if os.cpu_count() and os.cpu_count() < 4:
        print(
            "  note: fewer than 4 cores available; the ratio reflects "
            "process overhead, not parallel speedup"
        )
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
