"""Command line entry point: ``omnisurface sweep|trace|oracle``.

Exit codes: 0 on success, 2 for a bad config or arguments, 3 for a file
that cannot be read or written.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .channels import sample_channels
from .experiment import (PROFILES, ConfigError, convergence_trace, load_config,
                         run_experiment, spec_from_dict, system_from_dict)
from .model import SystemConfig
from .modes import SCHEMES

EXIT_CONFIG = 2
EXIT_IO = 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _schemes(values):
    if not values:
        return None
    tags = tuple(t for v in values for t in v.split(",") if t)
    bad = [t for t in tags if t not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown scheme(s) {bad}; choose from {list(SCHEMES)}")
    return tags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omnisurface",
                                     description="Omni-surface assisted multi-user downlink optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme_help):
        p.add_argument("--config", type=Path, help="JSON or TOML config file")
        p.add_argument("--out", type=Path, help="output file")
        p.add_argument("--profile", choices=sorted(PROFILES), help="problem scale preset")
        p.add_argument("--seed", type=_u64, help="base seed (unsigned 64-bit)")
        p.add_argument("--scheme", action="append", help=scheme_help)

    sw = sub.add_parser("sweep", help="Monte-Carlo sweep over one axis, written as CSV")
    common(sw, "scheme tag, repeatable or comma separated")
    sw.add_argument("--workers", type=int, help="parallel worker processes")

    tr = sub.add_parser("trace", help="per-iteration objective of a single solve")
    common(tr, "scheme tag (default UED)")
    tr.add_argument("--problem", choices=("power", "rate"), default="power")

    orc = sub.add_parser("oracle", help="compare solvers with brute-force grid search "
                                        "on a two-element, two-user system")
    common(orc, "ignored; the oracle always solves the unequal split")
    orc.add_argument("--problem", choices=("power", "rate", "both"), default="both")
    return parser


def _sweep(args) -> int:
    if args.config is None:
        raise ConfigError("sweep needs --config")
    d = load_config(args.config)
    spec = spec_from_dict(d, profile=args.profile, seed=args.seed,
                          schemes=_schemes(args.scheme),
                          out=str(args.out) if args.out else None)
    if args.workers is not None:
        spec = replace(spec, workers=args.workers)
    out = spec.out or "sweep.csv"
    run_experiment(spec, out)
    print(f"wrote {out}")
    return 0


def _system(args) -> SystemConfig:
    d = load_config(args.config) if args.config else {}
    cfg = system_from_dict(d.get("system", {}))
    if args.profile is not None:
        cfg = replace(cfg, n_elements=PROFILES[args.profile]["n_elements"])
    seed = args.seed if args.seed is not None else d.get("seed")
    return cfg if seed is None else replace(cfg, seed=int(seed))


def _trace(args) -> int:
    cfg = _system(args)
    schemes = _schemes(args.scheme) or ("UED",)
    if len(schemes) != 1:
        raise ConfigError("trace takes a single scheme")
    out = args.out or Path(f"trace_{args.problem}_{schemes[0]}.csv")
    rep = convergence_trace(cfg, schemes[0], args.problem, out)
    print(f"{rep.status.value} after {rep.iterations} iterations, objective {rep.objective:.6g}; "
          f"wrote {out}")
    return 0


def _oracle(args) -> int:
    from .oracles import grid_power_min, grid_sum_rate
    from .powermin import PowerMinOptions, power_min_solve
    from .sumrate import sum_rate_solve

    base = _system(args)
    cfg = replace(base, n_tx=2, n_elements=2, k_r=1, k_t=1)
    channels = sample_channels(cfg)
    result = {"seed": cfg.seed}
    if args.problem in ("power", "both"):
        grid = grid_power_min(channels, cfg)
        rep = power_min_solve(channels, cfg, PowerMinOptions(multistart=4))
        result["power"] = {"solver": rep.objective, "grid": grid.value,
                           "ratio": rep.objective / grid.value,
                           "grid_params": grid.params.tolist(), "evaluations": grid.evaluations}
    if args.problem in ("rate", "both"):
        grid = grid_sum_rate(channels, cfg)
        rep = sum_rate_solve(channels, cfg)
        result["rate"] = {"solver": rep.objective, "grid": grid.value,
                          "ratio": rep.objective / grid.value,
                          "grid_params": grid.params.tolist(), "evaluations": grid.evaluations}
    text = json.dumps(result, indent=2)
    if args.out is not None:
        args.out.write_text(text + "\n")
    print(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"sweep": _sweep, "trace": _trace, "oracle": _oracle}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
