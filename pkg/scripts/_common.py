"""Shared driver for the figure scripts."""

from __future__ import annotations

import argparse
import os
import sys
import warnings

from resamp_hd.cli import charts_for
from resamp_hd.experiments import COLUMNS, desk_config, paper_config, run_experiment
from resamp_hd.io import write_csv, write_text


def main(kind: str, argv=None) -> int:
    p = argparse.ArgumentParser(description=f"Run the {kind} torus-field experiment.")
    p.add_argument("--paper-scale", action="store_true", help="128 x 128 torus, 250 trials (hours)")
    p.add_argument("--trials", type=int)
    p.add_argument("--B", type=int, help="Monte Carlo weight draws per threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default=os.path.join("results", kind), help="output directory")
    args = p.parse_args(argv)

    over = {k: v for k, v in (("trials", args.trials), ("B", args.B), ("seed", args.seed),
                               ("workers", args.workers)) if v is not None}
    if args.paper_scale:
        print("warning: paper-scale settings take many hours", file=sys.stderr)
        cfg = paper_config(kind, **over)
    else:
        cfg = desk_config(kind, **over)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = run_experiment(cfg)

    os.makedirs(args.out, exist_ok=True)
    header = [f"{k} = {v}" for k, v in sorted(cfg.to_dict().items()) if k != "workers"]
    text = write_csv(rows, COLUMNS[kind], os.path.join(args.out, f"{kind}.csv"), header)
    for name, svg in charts_for(kind, rows).items():
        write_text(svg, os.path.join(args.out, name))
    sys.stdout.write("".join(line + "\n" for line in text.splitlines() if not line.startswith("#")))
    return 0
