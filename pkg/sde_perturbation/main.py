#!/usr/bin/env python3
"""
SDE Perturbation Lab - Command Line Module

Runs one configured experiment and writes its report files.

Experiments:
- ag-verify: deterministic Alekseev-Groebner identity and its quadrature order
- iag-weak: Monte-Carlo means of every term of the stochastic identity
- iag-pathwise: per-sample residual under outer-grid refinement
- iag-duality: duality of the residual against Malliavin derivatives
- vdp-rate: coupled strong convergence of the tamed van der Pol scheme
- mgf-check: closed-form Gaussian-square moment generating function
- expmoment-check: exponential moments of the tamed scheme against their bound
- flowmoment-check: moments of the derivative flows

Usage:
    sde-perturbation <experiment> --config <path> [--out <dir>] [--workers <n>]

The nested flows of the iag experiments cost O(outer_steps x fine_steps) per
sample; keep outer_steps well below fine_steps for large runs.

Exit codes: 0 all checks passed, 1 a check failed, 2 invalid configuration,
3 too many diverged samples.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .config.defaults import (CONFIG_ECHO_FILE, CSV_COLUMNS, DEFAULT_AG_RESIDUAL_TOL,
                              DEFAULT_MGF_CASES, DEFAULT_RATIO_BAND, DEFAULT_SLOPE_BAND,
                              DEFAULT_Z_THRESHOLD, EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR,
                              EXIT_EXCESSIVE_DIVERGENCE, EXIT_OK, EXPERIMENT_KINDS,
                              MAX_DIVERGENCE_FRACTION, RATE_STUDY_LEVELS, RATE_STUDY_REFERENCE_STEPS,
                              REPORT_FILE, TABLE_FILE)
from .config.settings import (RunConfig, load_config, parse_field_spec, resolve_output_dir,
                              save_config)
from .core.alekseev import residual_order_study
from .core.exceptions import ConfigError, DomainError, ExcessiveDivergenceError
from .core.fields import (ConstantDiffusion, LinearDrift, ScalarPolynomialDrift,
                          SquaredNormFunction, VectorField, ZeroDrift, make_test_function)
from .core.grid import TimeGrid
from .core.file_operations import remove_stale_outputs, write_report, write_table
from .core.iag import (TERMS, ConstantItoProcess, EulerMaruyamaProcess, IagSetup,
                       TamedSchemeProcess, constant_case_expectations,
                       pathwise_refinement_study, skorohod_duality_check, weak_identity_check)
from .core.runner import MonteCarloRunner
from .core.vdp import (VanDerPolDrift, VdpParams, exp_moment_check, flow_moment_check,
                       mgf_check, strong_rate_study)
from .utils.helpers import format_duration, two_sided_p_value, within_se
from .utils.versioning import run_metadata, utc_timestamp

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class Outcome:
    """What an experiment hands back to :func:`run`.

    Attributes:
        rows: Table rows keyed by the kind's columns
        statistics: Everything that goes into the report, SEs and tolerances included
        passed: Verdict of all acceptance checks of the run
    """
    rows: List[Dict[str, Any]] = field(default_factory=list)
    statistics: Dict[str, Any] = field(default_factory=dict)
    passed: bool = True


def build_drift(spec: str, config: RunConfig, dimension: int = 1) -> VectorField:
    """Drift from a field description such as ``"linear: -1"``.

    ``zero`` and ``linear`` take ``dimension``; ``polynomial`` is scalar;
    ``vdp`` reads the oscillator parameters of ``[model]``.
    """
    name, values = parse_field_spec(spec)
    if name == 'zero':
        return ZeroDrift(dimension)
    if name == 'linear':
        return LinearDrift(values[0] * np.eye(dimension))
    if name == 'polynomial':
        return ScalarPolynomialDrift(values)
    return VanDerPolDrift(vdp_params(config))


def vdp_params(config: RunConfig) -> VdpParams:
    return VdpParams.from_mapping(config.vdp_values())


def _horizon(config: RunConfig) -> float:
    return config.get_float('model', 'horizon', 1.0)


def _z(config: RunConfig) -> float:
    return config.get_float('checks', 'z_threshold', DEFAULT_Z_THRESHOLD)


def _max_divergence(config: RunConfig) -> float:
    return config.get_float('checks', 'max_divergence_fraction', MAX_DIVERGENCE_FRACTION)


# ---------------------------------------------------------------------------
# Experiments

def run_ag_verify(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    mu = build_drift(config.get_str('model', 'drift', 'linear: 1'), config)
    d = mu.dimension
    y_drift = build_drift(config.get_str('model', 'y_drift', 'zero'), config, d)
    if y_drift.dimension != d:
        raise ConfigError(f"y_drift has dimension {y_drift.dimension}, drift has {d}")
    y0 = config.get_float_list('model', 'xi', [1.0] * d)
    f = make_test_function(config.get_str('model', 'test_function', 'identity'), d)
    levels = config.get_int_list('grid', 'outer_levels')
    inner = config.get_int('grid', 'inner_steps')
    tol = config.get_float('checks', 'residual_tol', DEFAULT_AG_RESIDUAL_TOL)

    study = residual_order_study(mu, y_drift, y0, f, _horizon(config), levels, inner)
    rows = []
    for result in study.results:
        for k in range(result.lhs.shape[0]):
            rows.append({'outer_steps': result.outer_steps, 'inner_steps': result.inner_steps,
                         'component': k, 'lhs': result.lhs[k], 'rhs': result.rhs[k],
                         'residual': result.residual[k], 'lhs_halving_gap': result.lhs_halving_gap})
    finest = study.results[-1].residual_norm
    passed = finest <= tol
    checks = {'finest_residual': {'value': finest, 'tolerance': tol, 'passed': passed}}
    if config.has('checks', 'min_ratio'):
        min_ratio = config.get_float('checks', 'min_ratio')
        ratio_ok = study.passes(min_ratio)
        checks['residual_ratios'] = {'values': study.ratios, 'minimum': min_ratio, 'passed': ratio_ok}
        passed = passed and ratio_ok
    return Outcome(rows, {'residual_norms': [r.residual_norm for r in study.results],
                          'ratios': study.ratios, 'checks': checks}, passed)


def iag_setup(config: RunConfig, default_ito: str = 'constant') -> IagSetup:
    """Build the model of the iag experiments from ``[model]`` and ``[grid]``."""
    ito_kind = config.get_str('model', 'ito', default_ito)
    T = _horizon(config)
    if ito_kind == 'constant':
        mu = build_drift(config.get_str('model', 'drift', 'zero'), config)
        d = mu.dimension
        sigma = ConstantDiffusion(config.get_float('model', 'sigma', 1.0) * np.eye(d))
        ito = ConstantItoProcess(config.get_float_list('model', 'xi', [0.0] * d),
                                 config.get_float('model', 'a', 0.0),
                                 config.get_float('model', 'b', 0.5) * np.eye(d))
    elif ito_kind == 'euler':
        mu = build_drift(config.get_str('model', 'drift', 'vdp'), config)
        d = mu.dimension
        if isinstance(mu, VanDerPolDrift):
            sigma = mu.params.diffusion()
            xi = mu.params.xi
        else:
            sigma = ConstantDiffusion(config.get_float('model', 'sigma', 1.0) * np.eye(d))
            xi = config.get_float_list('model', 'xi', [0.0] * d)
        ito = EulerMaruyamaProcess(mu, sigma, xi)
    elif ito_kind == 'tamed':
        params = vdp_params(config)
        mu = VanDerPolDrift(params)
        sigma = params.diffusion()
        ito = TamedSchemeProcess(mu, params.beta_column, params.xi,
                                 config.get_int('grid', 'scheme_steps', 4),
                                 config.get_bool('model', 'tamed', True))
        T = params.T
    else:
        raise ConfigError(f"Unknown Ito process '{ito_kind}', expected constant, euler or tamed")
    f = make_test_function(config.get_str('model', 'test_function', 'square'), mu.dimension)
    fine = config.get_int('grid', 'fine_steps')
    return IagSetup(mu, sigma, ito, f, T, fine, config.get_int('grid', 'outer_steps', fine),
                    config.master_seed)


def run_iag_weak(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    setup = iag_setup(config)
    z = _z(config)
    stats = weak_identity_check(setup, config.samples, runner, z, _max_divergence(config))
    rows = []
    for term in TERMS:
        for k, (mean, se) in enumerate(zip(stats.means[term], stats.ses[term])):
            rows.append({'term': term, 'component': k, 'mean': mean, 'se': se,
                         'samples': stats.samples, 'diverged': stats.diverged})
    statistics = {'means': stats.means, 'ses': stats.ses, 'samples': stats.samples,
                  'diverged': stats.diverged, 'z_threshold': z,
                  'checks': {'residual_mean_zero': stats.passes}}
    passed = stats.passes
    ito, sigma = setup.ito, setup.sigma
    if (isinstance(ito, ConstantItoProcess) and ito.dimension == 1 and ito.noise_dimension == 1
            and isinstance(setup.mu, ZeroDrift) and isinstance(setup.f, SquaredNormFunction)):
        expected = constant_case_expectations(float(ito.xi[0]), float(ito.a[0]), float(ito.b[0, 0]),
                                              float(sigma.matrix[0, 0]), setup.horizon)
        closed = {term: within_se(stats.means[term], expected[term], stats.ses[term], z)
                  for term in TERMS}
        statistics['expected'] = expected
        statistics['checks']['closed_form'] = closed
        passed = passed and all(closed.values())
    return Outcome(rows, statistics, passed)


def run_iag_pathwise(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    setup = iag_setup(config, default_ito='tamed')
    levels = config.get_int_list('grid', 'outer_levels')
    low = config.get_float('checks', 'ratio_low', DEFAULT_RATIO_BAND[0])
    high = config.get_float('checks', 'ratio_high', DEFAULT_RATIO_BAND[1])
    for K in levels:
        setup.ito.check_grid(TimeGrid(setup.horizon, K))
    study = pathwise_refinement_study(setup.mu, setup.sigma, setup.ito, setup.f, setup.horizon,
                                      setup.fine_steps, levels, config.samples,
                                      config.master_seed)
    rows = []
    for i, level in enumerate(study.levels):
        rows.append({'outer_steps': level.outer_steps, 'rms_residual': level.rms_residual,
                     'se': level.se, 'ratio': study.ratios[i - 1] if i else None,
                     'rms_lhs': level.rms_lhs, 'rms_lebesgue': level.rms_lebesgue,
                     'samples': level.samples, 'diverged': level.diverged})
    passed = study.passes(low, high)
    return Outcome(rows, {'ratios': study.ratios, 'median_sample_ratios': study.median_sample_ratios,
                          'ratio_band': [low, high], 'checks': {'ratios_in_band': passed}}, passed)


def run_iag_duality(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    setup = iag_setup(config)
    z = _z(config)
    rows, results, passed = [], {}, True
    for name in config.get_names('model', 'functional', 'constant, identity, sine'):
        stats = skorohod_duality_check(setup, name, config.samples, runner, z, _max_divergence(config))
        for k in range(len(stats.lhs_mean)):
            rows.append({'functional': name, 'component': k, 'lhs_mean': stats.lhs_mean[k],
                         'lhs_se': stats.lhs_se[k], 'rhs_mean': stats.rhs_mean[k],
                         'rhs_se': stats.rhs_se[k], 'gap': stats.gap[k],
                         'combined_se': stats.combined_se[k], 'samples': stats.samples})
        results[name] = {'gap': stats.gap, 'combined_se': stats.combined_se,
                         'diverged': stats.diverged, 'passed': stats.passes}
        passed = passed and stats.passes
    return Outcome(rows, {'functionals': results, 'z_threshold': z}, passed)


def run_vdp_rate(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    params = vdp_params(config)
    tamed = config.get_str('model', 'scheme', 'tamed') != 'untamed'
    low = config.get_float('checks', 'slope_low', DEFAULT_SLOPE_BAND[0])
    high = config.get_float('checks', 'slope_high', DEFAULT_SLOPE_BAND[1])
    levels = config.get_int_list('grid', 'levels', list(RATE_STUDY_LEVELS))
    reference = config.get_int('grid', 'reference_steps', RATE_STUDY_REFERENCE_STEPS)
    report = strong_rate_study(params, levels, reference, config.samples, config.master_seed, runner,
                               tamed, _max_divergence(config))
    rows = [{'N': n, 'rms': r, 'se': s, 'samples': m, 'diverged': dv}
            for n, r, s, m, dv in zip(report.levels, report.rms, report.se, report.samples,
                                      report.diverged)]
    statistics = {
        'slope': report.slope, 'intercept': report.intercept,
        'slope_se': report.fit.slope_se if report.fit is not None else None,
        'slope_band': [low, high], 'monotone': report.is_monotone(),
        'tamed_fraction': report.tamed_fraction, 'scheme': report.scheme,
        'reference_steps': report.reference_steps, 'study_seconds': report.wall_clock,
    }
    # the untamed scheme is run to show divergence, not to be rated
    passed = report.passes(low, high) if tamed else True
    statistics['checks'] = {'slope_in_band': passed, 'rated': tamed}
    return Outcome(rows, statistics, passed)


def run_mgf_check(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    z = _z(config)
    cases = mgf_check(M=config.samples, seed=config.master_seed,
                      count=config.get_int('checks', 'mgf_cases', DEFAULT_MGF_CASES))
    rows = [{'case': c.case, 'a': c.a, 'b': c.b, 'c': c.c, 'closed_form': c.closed_form,
             'mc_mean': c.mc_mean, 'se': c.se, 'z': c.z} for c in cases]
    passed = all(c.z <= z for c in cases)
    return Outcome(rows, {'cases': len(cases), 'max_z': max(c.z for c in cases),
                          'p_values': [two_sided_p_value(c.z) for c in cases],
                          'z_threshold': z, 'checks': {'all_within_z': passed}}, passed)


def run_expmoment_check(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    params = vdp_params(config)
    z = _z(config)
    profile = exp_moment_check(params, config.get_int('grid', 'steps'), config.samples,
                               config.master_seed, runner, z, _max_divergence(config))
    rows = [{'node': k, 'time': t, 'mean': m, 'se': s, 'bound': profile.bound}
            for k, (t, m, s) in enumerate(zip(profile.times, profile.means, profile.ses))]
    return Outcome(rows, {'c': profile.c, 'bound': profile.bound, 'samples': profile.samples,
                          'diverged': profile.diverged, 'z_threshold': z,
                          'checks': {'below_bound': profile.passes}}, profile.passes)


def run_flowmoment_check(config: RunConfig, runner: MonteCarloRunner) -> Outcome:
    params = vdp_params(config)
    mu = build_drift(config.get_str('model', 'drift', 'vdp'), config, 2)
    table = flow_moment_check(params, config.get_float('model', 'p', 4.0),
                              config.get_int('grid', 'steps'), config.samples,
                              config.master_seed, mu, runner, _max_divergence(config))
    rows = [{'r': r, 't': t, 'moment_x1': m1, 'se_x1': s1, 'moment_x2': m2, 'se_x2': s2,
             'samples': table.samples}
            for (r, t), m1, s1, m2, s2 in zip(table.times, table.moment_x1, table.se_x1,
                                               table.moment_x2, table.se_x2)]
    return Outcome(rows, {'p': table.p, 'diverged': table.diverged,
                          'checks': {'finite': table.finite}}, table.finite)


EXPERIMENTS: Dict[str, Callable[[RunConfig, MonteCarloRunner], Outcome]] = {
    'ag-verify': run_ag_verify,
    'iag-weak': run_iag_weak,
    'iag-pathwise': run_iag_pathwise,
    'iag-duality': run_iag_duality,
    'vdp-rate': run_vdp_rate,
    'mgf-check': run_mgf_check,
    'expmoment-check': run_expmoment_check,
    'flowmoment-check': run_flowmoment_check,
}


# ---------------------------------------------------------------------------
# Orchestration

def _log_progress(done: int, total: int, message: str) -> bool:
    logger.debug("%d/%d samples (%s)", done, total, message)
    return True


def run(config: RunConfig, output_dir: Optional[str] = None) -> int:
    """Run the configured experiment and write report.json, results.csv and config.ini.

    Returns:
        Process exit code
    """
    out_dir = output_dir or resolve_output_dir(config)
    os.makedirs(out_dir, exist_ok=True)
    removed = remove_stale_outputs(out_dir, [REPORT_FILE, TABLE_FILE, CONFIG_ECHO_FILE],
                                   config.permanent_delete)
    if removed:
        logger.info("Removed %d stale output files from %s", removed, out_dir)

    report: Dict[str, Any] = {'experiment': config.experiment, 'config': config.as_dict(),
                              'metadata': run_metadata()}
    report['metadata']['started'] = utc_timestamp()
    runner = MonteCarloRunner(config.workers, config.batch_size, _log_progress)
    logger.info("Starting %s (seed %d, %d samples, %d workers)", config.experiment,
                config.master_seed, config.samples, config.workers)
    started = time.perf_counter()
    code = EXIT_OK
    outcome = Outcome()
    try:
        outcome = EXPERIMENTS[config.experiment](config, runner)
        code = EXIT_OK if outcome.passed else EXIT_CHECK_FAILED
    except ExcessiveDivergenceError as e:
        logger.error("%s", e)
        report['error'] = str(e)
        report['diverged'] = {'count': e.diverged, 'total': e.total, 'threshold': e.threshold}
        code = EXIT_EXCESSIVE_DIVERGENCE
    except (ConfigError, DomainError) as e:
        logger.error("Invalid configuration: %s", e)
        report['error'] = str(e)
        code = EXIT_CONFIG_ERROR
    elapsed = time.perf_counter() - started

    report['metadata']['finished'] = utc_timestamp()
    report['metadata']['wall_clock_seconds'] = elapsed
    report['statistics'] = outcome.statistics
    report['passed'] = code == EXIT_OK
    report['exit_code'] = code

    write_table(os.path.join(out_dir, TABLE_FILE), CSV_COLUMNS[config.experiment], outcome.rows)
    write_report(os.path.join(out_dir, REPORT_FILE), report)
    save_config(config, os.path.join(out_dir, CONFIG_ECHO_FILE))
    logger.info("%s finished in %s: %s", config.experiment, format_duration(elapsed),
                "passed" if code == EXIT_OK else f"exit code {code}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sde-perturbation',
        description="Numerical experiments on perturbation identities for SDEs.")
    subparsers = parser.add_subparsers(dest='experiment', metavar='experiment', required=True)
    for kind in EXPERIMENT_KINDS:
        sub = subparsers.add_parser(kind, help=f"Run the {kind} experiment")
        sub.add_argument('--config', required=True, help="INI run configuration")
        sub.add_argument('--out', help="Output directory (overrides config and environment)")
        sub.add_argument('--workers', type=int, help="Worker processes (overrides config)")
        sub.add_argument('-v', '--verbose', action='store_true', help="Log progress")
        sub.add_argument('--debug', action='store_true', help="Log per-batch detail")
    return parser


def setup_logging(verbose: bool = False, debug: bool = False) -> None:
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command line."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.debug)
    try:
        config = load_config(args.config)
        if config.experiment != args.experiment:
            raise ConfigError(f"{args.config} configures '{config.experiment}', "
                              f"not '{args.experiment}'")
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(f"--workers must be positive, got {args.workers}")
            config.workers = args.workers
    except ConfigError as e:
        logger.error("%s", e)
        sys.stderr.write(f"Configuration error: {e}\n")
        return EXIT_CONFIG_ERROR
    return run(config, resolve_output_dir(config, args.out))


if __name__ == "__main__":
    sys.exit(main())
