"""Layer-depth sweep at 128 hidden units (2..10 layers) on the desk corpus,
reporting R^2 and the width-penalised score.

    python scripts/depth_sweep.py [--layers 2 4 6] [--epochs 50]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from uavtraj.dataset import Channel, build_segments, split
from uavtraj.desk import DeskSetup, desk_corpus, desk_train
from uavtraj.metrics import evaluate, report_table
from uavtraj.model import model_forward
from uavtraj.normalize import Method, normalize_segments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", type=int, nargs="+", default=list(range(2, 11)))
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--out", type=Path, default=Path("runs/depth_sweep.csv"))
    args = ap.parse_args()

    base = DeskSetup()
    trajs = desk_corpus(base)
    _, _, test = split(build_segments(trajs, Channel.VELOCITY, stride=base.stride), 0.8, 0.1, base.split_seed)
    reports = []
    for layers in args.layers:
        setup = replace(base, model=replace(base.model, hidden_dim=args.hidden, num_layers=layers),
                        train=replace(base.train, max_epochs=args.epochs))
        run = desk_train(setup, Channel.VELOCITY, Method.MAXNORM, trajs)
        tn = normalize_segments(test, run.stats)
        preds, _ = model_forward(tn.inputs(), run.params, run.config)
        reports.append(evaluate(preds, tn.targets(), model_id=f"depth_{layers}", channel="velocity",
                                norm_method="maxnorm", hidden_dim=args.hidden, num_layers=layers))
        print(f"{layers} layers: mse {reports[-1].mse:.2e}, adj {reports[-1].adjusted_r2:.5f} ({run.seconds:.0f}s)",
              flush=True)
    text, csv_text = report_table(reports, "grid")
    print(text)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(csv_text, encoding="utf-8")


if __name__ == "__main__":
    main()
