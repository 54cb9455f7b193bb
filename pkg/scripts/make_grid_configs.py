"""Write the 24 benchmark-grid configs (GRU_1 .. GRU_24) as INI files.

    python scripts/make_grid_configs.py --out configs/grid [--base configs/default.ini]
"""

import argparse
from pathlib import Path

from uavtraj.config import grid_configs, load_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("configs/grid"))
    ap.add_argument("--base", type=Path, default=None)
    ap.add_argument("--external-dir", default="data/real_flights")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    base = load_config(args.base)
    for cfg in grid_configs(base, args.external_dir):
        cfg.out_dir = str(Path(base.out_dir).parent / "grid")
        path = args.out / f"{cfg.model.id}.ini"
        path.write_text(cfg.to_ini(), encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
