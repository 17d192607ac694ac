#!/usr/bin/env python3
"""Run the full benchmark battery and drop the CSVs under results/.

Covers the four experiment families: the precision sweep, the convergence
curve at d=1024, the FISR comparison over the OPT embedding lengths, and
the latency staircase of the macro model.  Everything is seeded, so reruns
reproduce the CSVs byte for byte.
"""

import argparse
import sys
import time
from pathlib import Path

from iterl2norm.cli import main as cli_main


def run(outdir: Path, seed: int, num_vectors: int) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [
        ("precision.csv", ["precision"]),
        ("convergence.csv", ["convergence"]),
        ("compare_fisr.csv", ["compare-fisr"]),
        ("latency.csv", ["latency"]),
    ]
    for fname, argv in jobs:
        out = outdir / fname
        args = argv + ["--seed", str(seed), "--out", str(out)]
        if argv[0] != "latency":
            args += ["--num-vectors", str(num_vectors)]
        t0 = time.time()
        code = cli_main(args)
        if code != 0:
            print(f"{argv[0]} failed with exit code {code}", file=sys.stderr)
            return code
        print(f"{argv[0]:13s} -> {out}  ({time.time() - t0:.1f}s)")
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--outdir", type=Path, default=Path("results"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-vectors", type=int, default=1000)
    a = p.parse_args()
    raise SystemExit(run(a.outdir, a.seed, a.num_vectors))
