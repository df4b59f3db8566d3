"""Run the estimators over a preset and write one error-curve CSV per mode.

    python scripts/reproduce_curves.py --preset desk-120 --out curves/
    python scripts/reproduce_curves.py --preset paper-sigma20 --modes gamma-observer

Full-size presets take several minutes per mode.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from depthobs.cli import run_mode, synthesize
from depthobs.config import PRESETS, load_config, preset
from depthobs.metrics_io import write_curve_csv
from depthobs.observers import MODES


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="desk-120", choices=sorted(PRESETS))
    p.add_argument("--config", help="key = value overrides applied on top of the preset")
    p.add_argument("--modes", nargs="+", default=["flow-observer", "gamma-observer"],
                   choices=[m for m in MODES if m != "hs-flow-only"])
    p.add_argument("--out", default="curves")
    args = p.parse_args()

    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    seq = synthesize(cfg)
    print(f"{args.preset}: {len(seq)} frames {cfg.width}x{cfg.height} sigma={cfg.sigma} "
          f"({time.perf_counter() - t0:.1f}s)")
    for mode in args.modes:
        t0 = time.perf_counter()
        run = run_mode(seq, replace(cfg, mode=mode))
        reports = run.gamma_reports if mode == "variational-only" else run.reports
        path = out / f"{args.preset}_{mode}.csv"
        write_curve_csv(path, reports)
        if mode == "gamma-observer":
            write_curve_csv(out / f"{args.preset}_gamma-hs.csv", run.gamma_reports)
        e = [r.global_error for r in reports]
        print(f"  {mode:17s} E0={e[0]:.4f} min={min(e):.4f} final={e[-1]:.4f} "
              f"({time.perf_counter() - t0:.1f}s) -> {path}")


if __name__ == "__main__":
    main()
