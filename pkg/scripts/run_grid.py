"""Run the full CLI pipeline for each config file given.

    python scripts/run_grid.py configs/grid/GRU_19.ini configs/grid/GRU_22.ini [--set train.max_epochs=50]

Data preparation (generate / segment / fit-norm) runs once per distinct
output directory and channel/method; each config then trains, evaluates and
stream-simulates. A combined report is written at the end.
"""

import argparse
import sys

from uavtraj.cli import main as cli
from uavtraj.config import load_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    extra = [a for s in args.set for a in ("--set", s)]
    prepared: set[tuple[str, str]] = set()
    last = None
    for path in args.configs:
        cfg = load_config(path, args.set)
        steps = []
        if cfg.out_dir not in {o for o, _ in prepared}:
            steps += ["generate", "segment"]
        if (cfg.out_dir, f"{cfg.norm.channel}_{cfg.norm.method}") not in prepared:
            steps.append("fit-norm")
        steps += ["train", "evaluate", "stream-sim"]
        for step in steps:
            if step == "segment":
                code = cli([step, "--config", path, *extra, "--set", "norm.channel=both"])
            else:
                code = cli([step, "--config", path, *extra])
            if code:
                print(f"{path}: {step} failed with exit code {code}", file=sys.stderr)
                return code
        prepared |= {(cfg.out_dir, ""), (cfg.out_dir, f"{cfg.norm.channel}_{cfg.norm.method}")}
        last = path
    return cli(["report", "--config", last, *extra])


if __name__ == "__main__":
    sys.exit(main())
