"""Command-line entry point: ``bhpseudo <subcommand> ...``.

Every experiment subcommand runs a scenario (a built-in one unless
``--scenario`` is given) and writes CSV files plus ``manifest.json`` into
``--out``. Failures are reported on stderr as one JSON object and a nonzero
exit status.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .io import write_csv, write_json, write_matrix_csv
from .lindblad_ref import DrivenChainSpec, analytic_current, bond_currents, steady_covariance
from .scenario import Scenario, ScenarioError, builtin_scenario, load_scenario, run_scenario, validate
from .thermal import ThermalPoint, solve_beta_mu

EXIT_SCHEMA = 2
EXIT_PHYSICS = 3
EXIT_IO = 4

# subcommand -> (built-in scenario, scenario kind it accepts)
EXPERIMENTS = {
    "relax": ("fig1_thermal", "relax"),
    "equilibrate": ("fig3_equilibrate", "equilibrate"),
    "transport": ("fig6_transport", "transport"),
    "lyapunov": ("fig7_sweep", "lyapunov"),
    "appendix-b": ("fig8_appendixB", "relax"),
}


def _add_run_options(p: argparse.ArgumentParser, scenario_required: bool = False) -> None:
    p.add_argument("--scenario", required=scenario_required, help="scenario YAML file, run manifest, or built-in name")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--n-traj", type=int, help="override run.n_traj")
    p.add_argument("--t-final", type=float, help="override run.t_final")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhpseudo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thermal-state", help="solve (beta, mu) for given densities and energies")
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--beta", type=float, nargs="*", default=[], help="inverse temperatures, paired with --n-bar")
    p.add_argument("--n-bar", type=float, nargs="+", required=True)
    p.add_argument("--e-bar", type=float, nargs="*", default=[], help="kinetic energies per site, paired with --n-bar")
    p.add_argument("--out", type=Path, help="optional CSV file for the table")

    for name, (builtin, _) in EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run a {name} scenario (default: built-in {builtin})")
        _add_run_options(p)

    p = sub.add_parser("run", help="run any scenario file")
    _add_run_options(p, scenario_required=True)

    p = sub.add_parser("lindblad", help="stationary state of the boundary-driven chain")
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--gamma-l", type=float, default=0.07)
    p.add_argument("--gamma-r", type=float, default=None, help="defaults to --gamma-l")
    p.add_argument("--n-l", type=float, default=1.0)
    p.add_argument("--n-r", type=float, default=0.5)
    p.add_argument("--out", type=Path, help="optional output directory")

    p = sub.add_parser("plot", help="render PNG charts from a run's CSV files")
    p.add_argument("out", type=Path, help="output directory of a previous run")
    return parser


def _resolve(arg: str | None, builtin: str, expected_kind: str | None) -> Scenario:
    if arg is None:
        sc = builtin_scenario(builtin)
    elif Path(arg).exists():
        sc = load_scenario(arg)
    else:
        sc = builtin_scenario(arg)
    if expected_kind and sc.kind != expected_kind:
        raise ScenarioError("kind", f"this subcommand runs '{expected_kind}' scenarios, got '{sc.kind}'")
    return sc


def _override(sc: Scenario, args) -> Scenario:
    raw = json.loads(json.dumps(sc.raw))
    for key, attr in (("seed", "seed"), ("n_traj", "n_traj"), ("t_final", "t_final")):
        value = getattr(args, attr)
        if value is not None:
            raw["run"][key] = value
    return validate(raw)


def _cmd_thermal(args) -> dict:
    rows = []
    if args.beta and args.e_bar:
        raise ScenarioError("thermal-state", "give either --beta or --e-bar, not both")
    pairs = args.beta or args.e_bar
    if len(pairs) != len(args.n_bar):
        raise ScenarioError("thermal-state", "--n-bar needs one value per --beta or --e-bar value")
    for x, n in zip(pairs, args.n_bar):
        if args.beta:
            pt = ThermalPoint.from_beta_density(x, n, args.M, args.J)
        else:
            pt = solve_beta_mu(n, x, args.M, args.J)
        rows.append(pt.as_dict())
    cols = ["beta", "mu", "n_bar", "e_bar", "M", "J"]
    if args.out:
        write_csv(args.out, cols, [[r[c] for c in cols] for r in rows])
    return {"states": rows}


def _cmd_lindblad(args) -> dict:
    gr = args.gamma_l if args.gamma_r is None else args.gamma_r
    spec = DrivenChainSpec(args.L, args.J, args.gamma_l, gr, args.n_l, args.n_r)
    sigma, current = steady_covariance(spec)
    result = {"L": spec.L, "J": spec.J, "Gamma_L": spec.Gamma_L, "Gamma_R": spec.Gamma_R, "current": current}
    if spec.Gamma_L == spec.Gamma_R:
        result["analytic_current"] = analytic_current(spec)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(args.out / "covariance.csv", sigma)
        jb = bond_currents(spec, sigma)
        write_csv(args.out / "bond_currents.csv", ["bond", "j"], list(enumerate(jb)))
        write_json(args.out / "manifest.json", result)
    return result


def _cmd_experiment(args, builtin: str | None, kind: str | None) -> dict:
    sc = _override(_resolve(args.scenario, builtin or "", kind), args)
    out = run_scenario(sc, args.out, max(1, args.workers))
    return {"out": str(out), "scenario": sc.name, "seed": sc.section("run")["seed"]}


def _cmd_plot(args) -> dict:
    from .plotting import render_charts

    files = render_charts(args.out)
    return {"charts": [str(f) for f in files]}


def _error(kind: str, message: str, field: str | None = None) -> None:
    record = {"error": kind, "message": message}
    if field:
        record["field"] = field
    print(json.dumps(record), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "thermal-state":
            result = _cmd_thermal(args)
        elif args.command == "lindblad":
            result = _cmd_lindblad(args)
        elif args.command == "plot":
            result = _cmd_plot(args)
        elif args.command == "run":
            result = _cmd_experiment(args, None, None)
        else:
            result = _cmd_experiment(args, *EXPERIMENTS[args.command])
    except ScenarioError as exc:
        _error("schema", exc.message, exc.field)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        _error("missing_input", str(exc))
        return EXIT_IO
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        _error("physics", str(exc))
        return EXIT_PHYSICS
    print(json.dumps(result, default=float, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
