#!/usr/bin/env python3
"""End-to-end offline experiment: simulate a full mock-backend world, then
run the network diagnostics over its snapshot log.

Usage:
    python scripts/run_mock_world.py --out runs/demo [--steps 36] [--agents 25] [--seed 42]
"""

import argparse
import sys
from pathlib import Path

from sentipolis.cli import main as cli_main
from sentipolis.demo import write_demo_script


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo", help="output directory")
    parser.add_argument("--steps", type=int, default=36)
    parser.add_argument("--agents", type=int, default=25)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    script = write_demo_script(out / "mock_script.jsonl")
    config = out / "sim.cfg"
    config.write_text(f"n_agents = {args.agents}\nn_steps = {args.steps}\nrng_seed = {args.seed}\n")

    rc = cli_main(
        ["simulate", "--config", str(config), "--out", str(out / "run"), "--backend", "mock", "--script", str(script)]
    )
    if rc != 0:
        return rc
    return cli_main(
        ["analyze", "--snapshots", str(out / "run" / "snapshots.jsonl"), "--out", str(out / "metrics.csv")]
    )


if __name__ == "__main__":
    sys.exit(main())
