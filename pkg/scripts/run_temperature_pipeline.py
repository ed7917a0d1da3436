#!/usr/bin/env python3
"""Full hall-temperature experiment: data, calibration, coverage, synthesis.

Runs every pipeline stage through the CLI so the artifacts land in one
output directory with a complete manifest, then prints where to look.
"""

import argparse
import sys

from stlcp import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/temperature")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--delta", type=float, default=0.15)
    args = ap.parse_args()

    base = ["--out", args.out, "--seed", str(args.seed), "--delta", str(args.delta)]
    for stage in ("gen-data", "calibrate", "validate-coverage", "synth-open", "synth-closed"):
        rc = cli.main([stage] + base)
        if rc != 0 and stage != "synth-closed":
            print(f"{stage} failed with exit {rc}", file=sys.stderr)
            return rc
        if rc != 0:
            # closed loop may abort when the agents leave their regions;
            # that is an outcome worth reporting, not a pipeline failure
            print("closed loop aborted on this test trajectory (counted as unsatisfied)")
    rc = cli.main(["report"] + base)
    print(f"artifacts in {args.out}")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
