"""``nsns`` command-line interface."""
from __future__ import annotations

import argparse
import logging
import sys

from . import drivers
from .io import ConfigError, RunConfig
from .linalg import LinearSolveError
from .mesh import MeshError
from .vms import SimulationDiverged

COMMANDS = {
    "convergence": ("convergence",),
    "cavity": ("cavity_steady", "cavity_unsteady"),
    "run": ("custom",),
}


def build_parser():
    p = argparse.ArgumentParser(prog="nsns", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out-dir", help="override the configured output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.load(args.config)
        if args.out_dir:
            config.out_dir = args.out_dir
        if config.problem not in COMMANDS[args.command]:
            raise ConfigError(f"'nsns {args.command}' cannot run problem {config.problem!r}")
        if args.command == "convergence":
            res = drivers.run_convergence(config)
            for g, table in res.tables.items():
                for r in table.rows:
                    print(f"gamma={g:g} {r.n}x{r.n} dofs={r.dofs} its={r.newton_iterations} "
                          f"p={r.pressure_l2:.3e} h1={r.velocity_h1:.3e} "
                          f"l2={r.velocity_l2:.3e} slip={r.slip:.3e}")
        elif args.command == "cavity":
            res = drivers.run_cavity(config)
        else:
            res = drivers.run_custom(config)
    except (ConfigError, MeshError, OSError) as exc:
        print(f"nsns: error: {exc}", file=sys.stderr)
        return 2
    except (LinearSolveError, SimulationDiverged) as exc:
        print(f"nsns: solver failure: {exc}", file=sys.stderr)
        return 1
    for f in res.files:
        print(f)
    if not res.converged:
        print("nsns: Newton iteration did not converge", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
