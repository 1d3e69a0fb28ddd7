"""Command-line entry point: ``coordbf run|compare|verify``.

Precedence for settings: experiment defaults < --config file < command-line flags.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .async_proto import AsyncConfig
from .channel import sample_channel
from .harness import (
    EXPERIMENTS,
    GuardrailError,
    compare_pipelines,
    load_config,
    make_spec,
    run_experiment,
    verify_invariants,
)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coordbf", description="Coordinated hybrid beamforming experiments.")
    p.add_argument("--version", action="version", version=f"coordbf {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file with [system] [async] [robust] [experiment] sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--out-dir", default=".")
        sp.add_argument("--allow-large", action="store_true", help="lift the desk-scale size limits")

    r = sub.add_parser("run", help="run one experiment sweep and write CSVs")
    common(r)
    r.add_argument("--experiment", choices=EXPERIMENTS)
    c = sub.add_parser("compare", help="run every pipeline on one channel draw")
    common(c)
    c.add_argument("--experiment", choices=EXPERIMENTS, default="power_vs_gamma")
    v = sub.add_parser("verify", help="check solver and protocol invariants; exit 2 on violation")
    common(v)
    v.add_argument("--experiment", choices=EXPERIMENTS)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        file_cfg = load_config(args.config)
        if args.cmd == "verify":
            results = verify_invariants(seed=args.seed or 0, trials=args.trials or 3)
            bad = 0
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
                bad += not ok
            return 2 if bad else 0
        spec = make_spec(args.experiment, file_cfg, trials=args.trials, seed=args.seed)
        spec.validate(args.allow_large)
        if args.cmd == "run":
            for path in run_experiment(spec, args.out_dir, args.threads, args.allow_large):
                print(path)
            return 0
        cfg = spec.config()
        ch = sample_channel(cfg, np.random.default_rng([spec.seed, 0]))
        rep = compare_pipelines(ch, cfg, AsyncConfig(**spec.async_), eps=spec.eps, c=spec.c, max_iter=spec.max_iter)
        print(f"{'pipeline':<20}{'status':<16}{'power':>14}{'iters':>8}{'min margin':>14}")
        for r in rep["rows"]:
            print(f"{r['pipeline']:<20}{r['status']:<16}{r['power']:>14.6g}{r['iterations']:>8}{r['min_sinr_margin']:>14.3g}")
        for k, ok in rep["checks"].items():
            print(f"{'PASS' if ok else 'FAIL'} {k}")
        return 0
    except (GuardrailError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
