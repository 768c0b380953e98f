"""Command-line surface: argument parsing, subcommand pipelines and error reporting"""

import argparse
import json
import sys
from datetime import datetime
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from loguru import logger

from .. import __version__
from ..core.errors import SivError
from ..core.grid import SpatialGrid
from ..core.integrator import ConstantPolicy
from ..core.model import FieldState, mass_diagnostic
from ..core.regime import p0_threshold, p_grid_report, spectral_report, stationary_distribution
from ..services.control import evaluate_constant_control, forward_backward_sweep
from ..services.ensemble import EnsembleRunner
from ..services.irl import irl_policy_iteration
from ..services.measure import ergodicity_audit
from ..utils import OutputWriter, RunConfig, load_config
from ..utils.config_manager import FLAG_KEYS


COMMANDS = ('simulate', 'control', 'irl', 'measure', 'spectral')

# Flags redirected to a subcommand's own section
COMMAND_KEYS = {
    'irl': {'paths': 'irl.paths', 't_final': 'irl.t_final', 'grid_n': 'irl.grid_n'},
    'measure': {'paths': 'measure.paths'},
}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per pipeline and the shared override flags"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help="YAML or JSON settings file")
    common.add_argument('--seed', type=int, metavar='N', help="master seed")
    common.add_argument('--paths', type=int, metavar='N', help="number of Monte Carlo paths")
    common.add_argument('--threads', type=int, metavar='N', help="worker thread cap")
    common.add_argument('--out', metavar='DIR', help="output directory")
    common.add_argument('--dt', type=float, metavar='X', help="time step (years)")
    common.add_argument('--t-final', type=float, metavar='X', help="horizon (years)")
    common.add_argument('--grid-n', type=int, metavar='N', help="number of spatial cells")
    common.add_argument('--shared-zeta', action='store_const', const=True, default=None,
                        help="reuse one Gaussian draw for all four noises in a cell")

    parser = argparse.ArgumentParser(prog='sivctl', description="Regime-switching stochastic SIV toolkit")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True
    sub.add_parser('simulate', parents=[common], help="simulate an ensemble under a constant control")
    sub.add_parser('control', parents=[common], help="optimal control by forward-backward sweep")
    sub.add_parser('irl', parents=[common], help="off-policy integral reinforcement learning")
    sub.add_parser('measure', parents=[common], help="invariant-measure audit")
    sub.add_parser('spectral', parents=[common], help="stationary law and moment-contraction spectrum")
    return parser


def flag_overrides(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted-key overrides from the flags actually given"""
    keys = dict(FLAG_KEYS)
    keys.update(COMMAND_KEYS.get(command, {}))
    overrides = {}
    for flag, key in keys.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return overrides


def run_simulate(run: RunConfig, out: OutputWriter) -> None:
    initial = run.initial_state()
    policy = ConstantPolicy(*run.constant_control)
    runner = EnsembleRunner(run.params, run.chain, run.stepping, run.threads, run.batch_size)
    n_steps = run.stepping.n_steps
    summary = runner.run(initial, policy, run.n_paths, run.initial_regime, record_steps=[0, n_steps])

    n_files = min(run.n_paths, run.max_trajectory_files)
    if n_files > 0:
        detail = runner.run(initial, policy, n_files, run.initial_regime)
        for j in range(n_files):
            record = detail.record(j)
            out.write_csv(f"trajectory-{j}.csv", ('t', 'x', 'S', 'I', 'V', 'regime'), record.to_rows())
            if run.write_binary:
                out.write_bytes(f"trajectory-{j}.bin", record.to_bytes())
            if record.regime_path is not None:
                out.write_csv(f"regime-path-{j}.csv", ('t_start', 't_end', 'state'), record.regime_path.to_rows())

    mass = mass_diagnostic(summary.state_at(1), float(initial.total_mass()))
    occupation = np.bincount(summary.regimes.ravel(), minlength=run.chain.n_states) / summary.regimes.size
    cell_steps = summary.cell_steps * summary.n_paths
    out.write_json('summary.json', {
        'n_paths': summary.n_paths,
        't_final': run.stepping.t_final,
        'mass': mass.to_dict(),
        'clamp_count': int(summary.clamp_counts.sum()),
        'cell_steps': cell_steps,
        'clamp_fraction': summary.clamp_fraction,
        'regime_occupation': occupation.tolist(),
    })
    logger.info(f"Mass at T: {mass.mean_mass:.6g} +/- {mass.stderr:.2g} (initial {mass.reference:.6g})")


def run_control(run: RunConfig, out: OutputWriter) -> None:
    initial = run.initial_state()
    solution = forward_backward_sweep(initial, run.params, run.chain, run.cost, run.stepping, run.sweep)

    out.write_csv('iter-history.csv', ('iteration', 'J', 'stderr', 'control_change'),
                  (h.to_row() for h in solution.history))
    x = run.grid.nodes
    out.write_csv('control-field.csv', ('t', 'x', 'u1', 'u2'),
                  ((t, x[c], solution.control[k, 0, c], solution.control[k, 1, c])
                   for k, t in enumerate(solution.times) for c in range(run.grid.n_cells)))
    if solution.adjoint_mean is not None:
        p = solution.adjoint_mean
        out.write_csv('adjoint-mean.csv', ('t', 'x', 'p1', 'p2', 'p3'),
                      ((k * run.stepping.dt, x[c], p[k, 0, c], p[k, 1, c], p[k, 2, c])
                       for k in range(p.shape[0]) for c in range(run.grid.n_cells)))

    baselines = {}
    for level in (0.0, 1.0):
        mean, stderr = evaluate_constant_control(level, initial, run.params, run.chain, run.cost, run.stepping,
                                                 run.sweep.n_paths, run.sweep.threads)
        baselines[f"u={level:g}"] = {'objective': mean, 'objective_stderr': stderr}
    data = solution.to_dict()
    data['baselines'] = baselines
    out.write_json('solution.json', data)
    logger.info(f"J(u*) = {solution.objective:.6g} +/- {solution.objective_stderr:.2g}, "
                f"converged={solution.converged} after {solution.iterations} iterations")


def run_irl(run: RunConfig, out: OutputWriter) -> None:
    grid = SpatialGrid(run.irl_grid_n, run.grid.length)
    run.params.check_profiles(grid.n_cells)
    step_cfg = run.stepping.replace(t_final=run.irl_t_final)
    step_cfg.check_stability(grid, run.params.max_diffusivity)
    result = irl_policy_iteration(run.irl, run.params, run.chain, run.cost, step_cfg,
                                  run.initial_state(grid), run.threads, run.initial_regime)

    out.write_csv('irl-history.csv', ('iteration', 'mean_probe_V', 'J', 'policy_change'),
                  (it.to_row() for it in result.history))
    out.write_json('irl-coefficients.json', result.to_dict())
    if not result.is_monotone():
        logger.warning("Probe-set values are not monotone across iterations")
    logger.info(f"IRL finished: J = {result.final.objective:.6g} after {len(result.history)} iterations")


def run_measure(run: RunConfig, out: OutputWriter) -> None:
    cfg = run.measure
    step_cfg = run.stepping.replace(t_final=cfg.horizon)
    record_steps = [step_cfg.step_index(t) for t in cfg.record_times]
    runner = EnsembleRunner(run.params, run.chain, step_cfg, run.threads, run.batch_size)

    starts = {'base': run.initial_state(), 'alt': FieldState.uniform(run.grid, *cfg.alt_initial)}
    ensembles = {label: runner.run(state, ConstantPolicy(*run.constant_control), cfg.n_paths,
                                   run.initial_regime, record_steps)
                 for label, state in starts.items()}
    report = ergodicity_audit(ensembles, cfg.checkpoints, cfg.p, cfg.kde_points, cfg.bandwidth,
                              cross_times=cfg.cross_times)

    out.write_csv('density.csv', ('run', 'component', 't', 'x', 'density'), report.density_rows())
    out.write_json('audit.json', report.to_dict())
    logger.info(f"Largest consecutive-checkpoint distance: {report.max_stationarity():.4g}")
    logger.info(f"Cross-initial contraction between first and last cross time: {report.contraction()}")


def run_spectral(run: RunConfig, out: OutputWriter, stream=None) -> None:
    stream = stream or sys.stdout
    rho = run.rho or tuple(-1.0 for _ in range(run.chain.n_states))
    pi = stationary_distribution(run.chain)
    p0 = p0_threshold(run.chain, rho)
    reports = p_grid_report(run.chain, rho, run.p_grid_points)
    at_p0 = spectral_report(run.chain, rho, p0)

    print(f"stationary pi: {' '.join(format(x, '.10g') for x in pi)}", file=stream)
    print(f"p0: {p0:.10g}", file=stream)
    print(f"{'p':>14} {'eta_p':>16}  eta_positive", file=stream)
    for report in reports:
        print(f"{report.p_exponent:14.8g} {report.eta_p:16.10g}  {str(report.eta_positive).lower()}", file=stream)

    out.write_json('spectral.json', {
        'stationary': pi.tolist(),
        'rho': list(rho),
        'p0': p0,
        'mean_growth_negative': at_p0.mean_growth_negative,
        'transition_matrix_t1': run.chain.transition_matrix(1.0).tolist(),
        'p_grid': [r.to_dict() for r in reports],
    })


PIPELINES: Dict[str, Callable[[RunConfig, OutputWriter], None]] = {
    'simulate': run_simulate,
    'control': run_control,
    'irl': run_irl,
    'measure': run_measure,
    'spectral': run_spectral,
}


def dispatch(command: str, run: RunConfig) -> int:
    """
    Run one pipeline and write its outputs

    Args:
        command: Subcommand name
        run: Validated configuration

    Returns:
        Exit status
    """
    if command not in PIPELINES:
        logger.error(f"Unknown command: {command}")
        return EXIT_USAGE
    out = OutputWriter(run.output_dir, run.config_hash, run.seed)
    start_time = datetime.now()
    logger.info(f"Running {command} (seed {run.seed}, config {run.config_hash})")
    PIPELINES[command](run, out)
    elapsed = (datetime.now() - start_time).total_seconds()
    logger.info(f"{command} finished in {elapsed:.2f}s: {out.summary()}")
    return EXIT_OK


def error_payload(error: SivError) -> Dict[str, Any]:
    return {'error': type(error).__name__, 'message': str(error), 'details': error.details()}


def main(argv: Optional[Sequence[str]] = None,
         configure_logging: Optional[Callable[[Dict[str, Any]], None]] = None) -> int:
    """
    Parse arguments, load configuration and dispatch

    Args:
        argv: Arguments without the program name (default sys.argv[1:])
        configure_logging: Called with the logging section once configuration is loaded

    Returns:
        Exit status: 0 success, 1 toolkit error, 2 usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    try:
        run = load_config(args.config, flag_overrides(args.command, args))
        if configure_logging is not None:
            configure_logging(run.logging)
        return dispatch(args.command, run)
    except SivError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(json.dumps(error_payload(e), sort_keys=True, default=str))
        return EXIT_ERROR

