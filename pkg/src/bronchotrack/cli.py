"""Command-line entry points: gen-lung, run, sweep, serve."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .runner import SWEEP_PARAMS, cmd_run, cmd_sweep, mean_f1_of
from .skeleton import BranchingParams, save_skeleton, synth_lung


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bronchotrack",
        description="Bronchoscope localization in airway-tree skeletons")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-lung", help="generate a synthetic lung skeleton JSON")
    gen.add_argument("--generations", type=int, default=5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output skeleton JSON path")
    gen.add_argument("--trachea-length", type=float, default=None, help="mm")
    gen.add_argument("--length-decay", type=float, default=None)

    run = sub.add_parser("run", help="simulate, localize and evaluate sequences")
    run.add_argument("--config", required=True, help="run-config JSON path")
    run.add_argument("--out-dir", required=True)
    run.add_argument("--seed", type=int, default=None, help="override config seed")
    run.add_argument("--algo", choices=["bifurcation", "direct"], default=None)
    run.add_argument("--no-figures", action="store_true")

    sweep = sub.add_parser("sweep", help="vary one filter parameter over a grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out-dir", required=True)
    sweep.add_argument("--sweep-param", required=True, choices=list(SWEEP_PARAMS))
    sweep.add_argument("--grid", required=True,
                       help="comma-separated values, e.g. 0.1,1,10,100")
    sweep.add_argument("--seed", type=int, default=None)

    srv = sub.add_parser("serve", help="start the interactive session service")
    srv.add_argument("--port", type=int, default=8700)
    srv.add_argument("--host", default="127.0.0.1")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "gen-lung":
        params = BranchingParams()
        if args.trachea_length is not None:
            params = replace(params, trachea_length_mm=args.trachea_length)
        if args.length_decay is not None:
            params = replace(params, length_decay=args.length_decay)
        skel = synth_lung(args.generations, args.seed, params)
        out = Path(args.out)
        if out.parent != Path("") and not out.parent.is_dir():
            print(f"error: output directory {out.parent} does not exist", file=sys.stderr)
            return 2
        save_skeleton(skel, out)
        print(f"wrote {out} ({len(skel.airways)} airways)")
        return 0

    if args.command == "run":
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.algo is not None:
            cfg = replace(cfg, algorithm=args.algo)
        if args.no_figures:
            cfg = replace(cfg, figures=False)
        result = cmd_run(cfg, out_dir=args.out_dir)
        agg = result.aggregate
        print(f"{cfg.algorithm}: {agg.n_sequences} sequences, {agg.total_frames} frames, "
              f"mean F1 {mean_f1_of(result):.3f}"
              + (f", loop {agg.loop_hz:.0f} Hz" if agg.loop_hz else ""))
        for gen in sorted(agg.per_generation):
            m = agg.per_generation[gen]
            print(f"  gen {gen}: F1 {m.mean:.3f} (min {m.min:.3f}, max {m.max:.3f})")
        if agg.e_p is not None:
            print(f"  e_p {agg.e_p.mean:.2f} mm, e_d {agg.e_d.mean:.2f} deg, "
                  f"e_r {agg.e_r.mean:.2f} deg")
        print(f"outputs in {result.out_dir}")
        return 0

    if args.command == "sweep":
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        try:
            grid = [float(v) for v in args.grid.split(",") if v.strip()]
        except ValueError:
            print(f"error: cannot parse grid {args.grid!r}", file=sys.stderr)
            return 2
        sweep = cmd_sweep(cfg, args.sweep_param, grid, out_dir=args.out_dir)
        for v, f1 in zip(sweep.values, sweep.mean_f1):
            print(f"  {args.sweep_param}={v:g}: mean F1 {f1:.3f}")
        print(json.dumps({"out_dir": args.out_dir}, indent=None))
        return 0

    if args.command == "serve":
        from .service import serve
        print(f"session service on ws://{args.host}:{args.port}/session")
        serve(args.port, host=args.host)
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
