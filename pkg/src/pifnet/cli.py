"""Command-line entry point.

Subcommands mirror the pipeline stages: preprocess, select-features,
train, evaluate, ablate, sensitivity. Each takes --config (INI file,
defaults apply when omitted), --seed (training seed override), and
--out-dir. Exit code 0 on success; on failure one machine-readable JSON
line goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig
from .errors import PifnetError
from . import pipeline

_COMMANDS = ("preprocess", "select-features", "train", "evaluate", "ablate", "sensitivity")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pifnet",
        description="Building-load forecasting pipeline: anomaly repair, "
                    "feature attribution, patch-based recurrent training, "
                    "evaluation, ablation, and sensitivity sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "preprocess": "score and repair load anomalies, write the corrected series",
        "select-features": "attribute features exactly and keep the dominant subset",
        "train": "train the forecaster on the corrected training region",
        "evaluate": "score held-out predictions in kW and plot them",
        "ablate": "run the six component-removal variants over several seeds",
        "sensitivity": "sweep max-epoch, look-back, and batch-size grids",
    }
    for name in _COMMANDS:
        cmd = sub.add_parser(name, help=helps[name])
        cmd.add_argument("--config", default=None,
                         help="INI config file; package defaults when omitted")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the training seed")
        cmd.add_argument("--out-dir", default=None,
                         help="run directory (default: runs/<command>)")
        if name in ("select-features", "train", "evaluate"):
            cmd.add_argument("--data-dir", default=None,
                             help="directory holding preprocess outputs "
                                  "(default: the run directory)")
        if name == "evaluate":
            cmd.add_argument("--train-dir", default=None,
                             help="directory holding the checkpoint "
                                  "(default: the run directory)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.defaults()
        if args.seed is not None:
            cfg.training.seed = args.seed
        out_dir = Path(args.out_dir) if args.out_dir else Path("runs") / args.command
        data_dir = getattr(args, "data_dir", None)
        if args.command == "preprocess":
            pipeline.run_preprocess(cfg, out_dir)
        elif args.command == "select-features":
            pipeline.run_select_features(cfg, out_dir, data_dir=data_dir)
        elif args.command == "train":
            pipeline.run_train(cfg, out_dir, data_dir=data_dir)
        elif args.command == "evaluate":
            pipeline.run_evaluate(cfg, out_dir, data_dir=data_dir,
                                  train_dir=args.train_dir)
        elif args.command == "ablate":
            pipeline.run_ablation(cfg, out_dir)
        elif args.command == "sensitivity":
            pipeline.run_sensitivity(cfg, out_dir)
    except PifnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
