"""Train position- and velocity-channel models on the desk corpus near the
origin, then replay the far-away lemniscate through both.

    python scripts/ood_experiment.py [--epochs 300] [--out runs/ood]
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from uavtraj.dataset import Channel
from uavtraj.desk import DeskSetup, desk_corpus, desk_train
from uavtraj.metrics import evaluate, report_table
from uavtraj.normalize import Method
from uavtraj.stream import StreamPredictor, run_stream_sim
from uavtraj.trajgen import LEMNISCATE, Kind, TrajectoryParams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--method", choices=[m.value for m in Method], default="maxnorm")
    ap.add_argument("--out", type=Path, default=Path("runs/ood"))
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    base = DeskSetup()
    setup = replace(base, train=replace(base.train, max_epochs=args.epochs))
    trajs = desk_corpus(setup)
    near = TrajectoryParams(Kind.INFINITY, (5.0, 5.0, 10.0), LEMNISCATE.normal, LEMNISCATE.radius, LEMNISCATE.omega)
    args.out.mkdir(parents=True, exist_ok=True)

    rows, summary = [], {}
    for channel in (Channel.POSITION, Channel.VELOCITY):
        def progress(r, name=channel.value):
            if r.epoch % 25 == 0:
                print(f"  {name} epoch {r.epoch}: val {r.val_loss:.2e}", flush=True)

        run = desk_train(setup, channel, Method(args.method), trajs, on_epoch=progress)
        for name, source in (("far", LEMNISCATE), ("near", near)):
            res = run_stream_sim(source, StreamPredictor(run.params, run.config, run.stats), seed=args.seed)
            summary[f"{channel.value}_{name}"] = res.report.average_rmse
            (args.out / f"{channel.value}_{name}.csv").write_text(res.to_csv(), encoding="utf-8")
            if name == "far":
                r = evaluate([rec.predicted for rec in res.records if rec.complete],
                             [rec.actual for rec in res.records if rec.complete],
                             model_id=f"{channel.value}_{args.method}", channel=channel.value,
                             norm_method=args.method, hidden_dim=64, num_layers=2)
                r.rmse = res.report.average_rmse
                rows.append(r)
        print(f"{channel.value}: best val {run.history.best_val_loss:.2e} at epoch {run.history.best_epoch}, "
              f"far {summary[channel.value + '_far']:.3f} m, near {summary[channel.value + '_near']:.3f} m")

    text, csv_text = report_table(rows, "comparison")
    print(text)
    (args.out / "comparison.csv").write_text(csv_text, encoding="utf-8")
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
