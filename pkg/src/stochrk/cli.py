"""
Command line interface.

Subcommands:
    example {absorber,cascade}: Monte Carlo occupation number with its
        master equation oracle, written as CSV (t, n_mc, n_se, n_oracle, norm_mc)
    converge: Strong convergence order on geometric Brownian motion, written
        as CSV (h, mean_error, n_paths) plus a 'slope=... halfwidth=...' line
    validate: Invariant and quadrature residuals of a tableau

Every CSV starts with '#' lines recording all effective settings.

Exit codes: 0 success, 1 validation failed, 2 configuration error, 3 I/O
error, 4 numerical abort.

Dependencies:
    - argparse: Command line parsing
    - pandas: Output tables
"""

import argparse
import sys
from typing import Dict, List, Optional

from .config import ConfigError, apply_overrides, config_header, load_config
from .constants import Constants
from .convergence import gbm_problem, strong_error
from .ensemble import EnsembleError
from .quantum import EXAMPLES, TraceDriftError, run_example
from .sde import SdeEvaluationError
from .stepper import IntegrationError, StepController
from .tableau import (TableauError, load_tableau, resolve_tableau, tableau_summary,
                      validate_tableau, builtin_tableau, BUILTIN_TABLEAUS)
from .utils import write_csv, write_table

# flag destination -> settings key
OVERRIDES = {
    'seed': 'master_seed',
    'trajectories': 'trajectories',
    'rtol': 'rtol',
    'atol': 'atol',
    'chunks': 'chunks',
    'tableau': 'tableau',
    'workers': 'workers',
    'n_levels': 'n_levels',
    'renormalize': 'renormalize',
    'mu': 'mu',
    'sigma': 'sigma',
    'x0': 'x0',
    'h_max': 'h_max',
    'levels': 'levels',
    'paths': 'paths',
}

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='stochrk',
        description="Adaptive Runge-Kutta integration of Itô SDEs with strong solutions.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="Settings file (key=value lines, or YAML for .yml/.yaml).")
    common.add_argument("--seed", type=int, default=None, help="Master seed.")
    common.add_argument("--tableau", type=str, default=None,
                        help=f"Builtin tableau ({', '.join(BUILTIN_TABLEAUS)}) or tableau file.")
    common.add_argument("--horizon", type=float, default=None, help="End time T.")
    common.add_argument("--out", type=str, default=None,
                        help="Output CSV path (default: standard output).")
    common.add_argument("--workers", type=int, default=None,
                        help="Worker processes; never changes the output.")
    common.add_argument("-v", default=False, action='store_true',
                        help="Optional generate verbose output.")

    subparsers = parser.add_subparsers(dest='command', required=True)

    example = subparsers.add_parser('example', parents=[common],
                                    help="Stochastic wave equation example against its master equation.")
    example.add_argument("name", choices=EXAMPLES, help="Example system.")
    example.add_argument("--trajectories", type=int, default=None, help="Ensemble size.")
    example.add_argument("--rtol", type=float, default=None, help="Relative tolerance.")
    example.add_argument("--atol", type=float, default=None, help="Absolute tolerance.")
    example.add_argument("--chunks", type=int, default=None,
                         help="Number of base steps; also the output grid.")
    example.add_argument("--n-levels", dest='n_levels', type=int, default=None,
                         help="Oscillator basis truncation.")
    example.add_argument("--renormalize", default=None, action='store_true',
                         help="Renormalize wavefunctions after every accepted step.")

    converge = subparsers.add_parser('converge', parents=[common],
                                     help="Strong convergence order on geometric Brownian motion.")
    converge.add_argument("--problem", choices=['gbm'], default='gbm', help="Test problem.")
    converge.add_argument("--mu", type=float, default=None, help="Drift rate.")
    converge.add_argument("--sigma", type=float, default=None, help="Volatility.")
    converge.add_argument("--x0", type=float, default=None, help="Initial value.")
    converge.add_argument("--h-max", dest='h_max', type=float, default=None,
                          help="Largest step, T/2^k.")
    converge.add_argument("--levels", type=int, default=None,
                          help="Number of step sizes, each half the previous.")
    converge.add_argument("--paths", type=int, default=None, help="Number of coupled paths.")

    subparsers.add_parser('validate', parents=[common],
                          help="Check tableau invariants and quadrature residuals.")
    return parser

def effective_config(args: argparse.Namespace) -> Dict:
    """Settings file merged with the command line flags."""
    config = load_config(args.config)
    overrides = {key: getattr(args, flag, None) for flag, key in OVERRIDES.items()}
    if args.horizon is not None:
        overrides['converge_horizon' if args.command == 'converge' else 'horizon'] = args.horizon
    return apply_overrides(config, overrides)

def _controller(config: Dict, base_step: float) -> StepController:
    return StepController(rtol=config['rtol'], atol=config['atol'], base_step=base_step,
                          k_max=config['k_max'], safety=config['safety'],
                          max_rejects=config['max_rejects'])

def _emit(frame, out: Optional[str], header: List[str]) -> None:
    if out is None:
        write_csv(frame, sys.stdout, header)
    else:
        write_csv(frame, out, header)

def cmd_example(args: argparse.Namespace, config: Dict) -> int:
    tab = resolve_tableau(config['tableau'])
    if not tab.has_embedded:
        raise ConfigError(f"Tableau '{tab.name}' has no embedded weights; examples need an "
                          f"embedded pair")
    if config['chunks'] < 1 or not config['horizon'] > 0:
        raise ConfigError("horizon must be positive and chunks at least 1")
    ctrl = _controller(config, config['horizon'] / config['chunks'])
    frame = run_example(args.name, config['n_levels'], config['horizon'], config['chunks'],
                        tab, ctrl, config['trajectories'], config['master_seed'],
                        workers=config['workers'], renormalize=config['renormalize'],
                        verbose=args.v)
    if args.v:
        write_table(frame, title=f"{args.name} occupation number")
    header = config_header(config, {'command': f"example {args.name}"})
    _emit(frame, args.out, header)
    return Constants.EXIT_OK

def cmd_converge(args: argparse.Namespace, config: Dict) -> int:
    tab = resolve_tableau(config['tableau'])
    if config['levels'] < 3:
        raise ConfigError(f"levels must be at least 3 for a slope fit, got {config['levels']}")
    h_list = [config['h_max'] / 2 ** i for i in range(config['levels'])]
    problem = gbm_problem(config['mu'], config['sigma'])
    report = strong_error(problem, tab, h_list, config['paths'], config['master_seed'],
                          x0=config['x0'], T=config['converge_horizon'],
                          fit_range=(config['fit_floor'], config['fit_ceiling']),
                          verbose=args.v)
    if args.v:
        write_table(report.table, columns={Constants.H_COL: {'decimal': 6},
                                           Constants.MEAN_ERROR_COL: {'type': 'e', 'decimal': 4},
                                           Constants.N_PATHS_COL: {}},
                    title=f"Strong error of {tab.name}")
    header = config_header(config, {'command': f"converge {args.problem}"})
    _emit(report.table, args.out, header)
    print(report.summary())
    return Constants.EXIT_OK

def cmd_validate(args: argparse.Namespace, config: Dict) -> int:
    name = config['tableau']
    if name in BUILTIN_TABLEAUS:
        tab = builtin_tableau(name)
    else:
        with open(name, 'r') as f:
            text = f.read()
        try:
            tab = load_tableau(text, validate=False)
        except TableauError as e:
            print(f"FAIL: {name}: {e}")
            return Constants.EXIT_VALIDATION_FAILED

    summary = tableau_summary(tab)
    write_table(summary, columns={Constants.WEIGHTS_COL: {'width': 8},
                                  Constants.ORDER_COL: {'width': 6},
                                  Constants.RESIDUAL_COL: {'type': 'e', 'decimal': 3}},
                title=f"{tab!r}")
    failures = []
    try:
        validate_tableau(tab)
    except TableauError as e:
        failures.append(str(e))
    quadrature = summary[summary[Constants.ORDER_COL] > 0]
    bad = quadrature[quadrature[Constants.RESIDUAL_COL] > Constants.RESIDUAL_TOL]
    for _, row in bad.iterrows():
        failures.append(f"quadrature condition of order {row[Constants.ORDER_COL]} for "
                        f"{row[Constants.WEIGHTS_COL]}: residual {row[Constants.RESIDUAL_COL]:.3e}")
    if failures:
        for failure in failures:
            print(f"FAIL: {failure}")
        return Constants.EXIT_VALIDATION_FAILED
    print(f"OK: {tab.name} passes all checks up to order {tab.q_ode}")
    return Constants.EXIT_OK

COMMANDS = {'example': cmd_example, 'converge': cmd_converge, 'validate': cmd_validate}

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = effective_config(args)
        return COMMANDS[args.command](args, config)
    except (EnsembleError, IntegrationError, TraceDriftError, SdeEvaluationError) as e:
        print(f"error: numerical abort: {e}", file=sys.stderr)
        return Constants.EXIT_NUMERICAL_ABORT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return Constants.EXIT_IO_ERROR
    except (ConfigError, TableauError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return Constants.EXIT_CONFIG_ERROR

if __name__ == '__main__':
    sys.exit(main())
