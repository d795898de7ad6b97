"""
Command line entry point::

    ipad synth --variant ipad-admm --n 64 --m 600 --p 4000 --seed 1
    ipad denoise --image lena.pgm --sigma 20 --crop 128
    ipad audit --trace output/trace.csv
    ipad compare --variants palm ipad-admm --seeds 1 2 3

Exit codes: 0 success, 1 bad configuration, 2 I/O failure, 3 solver
stalled (or an audit found violations).
"""
import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import colorama
from colorama import Fore, Style

from ipad.audit import (audit_criterion, audit_descent, descent_constants,
                        oscillation_count, read_trace, write_plot_data,
                        write_trace)
from ipad.baselines import PRESETS, run_variant
from ipad.config import (Overrides, expand_members, load_ini, parse_schedule,
                         resolve)
from ipad.data import (denoise_image, gen_synthetic, pgm_read, pgm_write,
                       synthetic_init)
from ipad.error import (ConfigError, FactorizationError, ImageFormatError,
                        NonFiniteError, ShapeError)
from ipad.framework import (CONVERGED, MAX_OUTER, STALL_POLICIES, STALLED,
                            STOP_MODES, exact_config)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_STALLED = 3

THREADS_ENV = 'IPAD_THREADS'

COMPARE_COLUMNS = ('variant', 'seed', 'outer_iterations', 'wall_time_s',
                   'final_psi', 'criterion_violations', 'descent_violations',
                   'termination')

STATUS_COLORS = {
    CONVERGED: Fore.GREEN,
    MAX_OUTER: Fore.YELLOW,
    STALLED: Fore.RED,
}


@dataclasses.dataclass
class Outcome:
    summary: dict
    exit_code: int = EXIT_OK


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, ShapeError)):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, ImageFormatError)):
        return EXIT_IO
    if isinstance(exc, (NonFiniteError, FactorizationError)):
        return EXIT_STALLED
    raise exc


def print_status(text, termination):
    color = STATUS_COLORS.get(termination, Fore.RED)
    print(color + Style.BRIGHT + text + Style.RESET_ALL)


def descent_summary(rc, result):
    config = rc.ipad_config()
    if not rc.preset.inexact:
        config = exact_config(config)
    return descent_constants(config, result.lipschitz_max)


def summarize(rc, result):
    preset = rc.preset
    a, b = descent_summary(rc, result)
    return {
        'variant': preset.name,
        'termination': result.termination,
        'outer_iterations': result.outer_iterations,
        'total_time_s': result.trace[-1].elapsed,
        'initial_psi': result.initial_psi,
        'final_psi': result.final_psi,
        'descent_a': a,
        'descent_b': b,
        'lipschitz_max': result.lipschitz_max,
        'criterion_audited': preset.inexact,
        'descent_audited': preset.descent_audited,
        'oscillations': oscillation_count(result.initial_psi, result.trace),
        'config': rc.to_dict(),
    }


def write_outputs(rc, result, summary):
    directory = _output_dir(rc)
    write_trace(os.path.join(directory, 'trace.csv'), result.initial_psi,
                result.trace)
    write_plot_data(directory, result.trace)
    with open(os.path.join(directory, 'summary.json'), 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')


def _output_dir(rc):
    os.makedirs(rc.output, exist_ok=True)
    return rc.output


def run_synth(rc):
    data = gen_synthetic(rc.synthetic_spec())
    init = synthetic_init(data.instance, rc.seed)
    result = run_variant(rc.variant, data.instance, rc.ipad_config(), init,
                         rc.pith_config(), rc.admm_config())
    summary = summarize(rc, result)
    write_outputs(rc, result, summary)
    return result, summary


def run_denoise(rc):
    img = pgm_read(rc.image)
    denoised = denoise_image(img, rc.denoise_spec(), rc.variant,
                             rc.ipad_config())
    result = denoised.solve
    summary = summarize(rc, result)
    summary.update(psnr_noisy=denoised.psnr_noisy,
                   psnr_recovered=denoised.psnr_recovered,
                   lam=denoised.lam, patch_count=denoised.patch_count)
    write_outputs(rc, result, summary)
    directory = _output_dir(rc)
    pgm_write(denoised.noisy, os.path.join(directory, 'noisy.pgm'))
    pgm_write(denoised.recovered, os.path.join(directory, 'recovered.pgm'))
    return result, summary


def load_summary_beside(trace_path):
    path = os.path.join(os.path.dirname(os.path.abspath(trace_path)),
                        'summary.json')
    if not os.path.isfile(path):
        return None
    with open(path) as f:
        return json.load(f)


def run_audit(rc):
    initial_psi, trace = read_trace(rc.trace)
    summary = load_summary_beside(rc.trace) or {}
    config = summary.get('config', {})
    c_x = config.get('c_x', rc.c_x)
    c_y = config.get('c_y', rc.c_y)

    criterion = audit_criterion(trace, c_x, c_y, filename=rc.trace)
    result = {'criterion_violations': criterion.count}
    lines = ['criterion: %d violation(s)' % criterion.count]

    a = rc.a if rc.a is not None else summary.get('descent_a')
    if a is None:
        raise ConfigError('%s: no summary.json beside the trace, pass --a'
                          % rc.trace)
    descent = None
    if rc.a is not None or summary.get('descent_audited', True):
        descent = audit_descent(trace, a, rc.rel_tol, initial_psi,
                                filename=rc.trace)
        result['descent_violations'] = descent.count
        lines.append('descent (a=%.6g): %d violation(s), worst margin %.6g, '
                     '%d step(s) skipped' % (
                         a, descent.count, descent.worst_margin,
                         descent.skipped))
    else:
        lines.append('descent: not audited for %s'
                     % summary.get('variant', 'this variant'))

    violations = criterion.violations + (descent.violations if descent
                                         else [])
    for violation in violations:
        filename, linenum = violation.get_file_reference()
        for line, _ in violation.get_lines():
            print(line)
        print('    at %s:%d' % (filename, linenum))
    for line in lines:
        print(line)
    ok = not violations
    print_status('audit %s' % ('passed' if ok else 'failed'),
                 CONVERGED if ok else STALLED)
    return Outcome(result, EXIT_OK if ok else EXIT_STALLED)


def execute(rc):
    """
    Runs one configuration and writes its outputs; errors propagate.
    """
    if rc.mode == 'audit':
        return run_audit(rc)
    if rc.mode == 'denoise':
        result, summary = run_denoise(rc)
    else:
        result, summary = run_synth(rc)
    code = EXIT_STALLED if result.termination == STALLED else EXIT_OK
    return Outcome(summary, code)


def run(rc):
    """
    Executes ``rc`` and returns the process exit code.
    """
    try:
        outcome = execute(rc)
    except Exception as e:
        code = exit_code_for(e)
        logger.error('%s', e)
        print_status('%s: %s' % (type(e).__name__, e), STALLED)
        return code
    if rc.mode != 'audit':
        summary = outcome.summary
        text = '%s: %s after %d outer steps, psi=%.10g' % (
            summary['variant'], summary['termination'],
            summary['outer_iterations'], summary['final_psi'])
        if 'psnr_recovered' in summary:
            text += ', PSNR %.2f -> %.2f dB' % (summary['psnr_noisy'],
                                                summary['psnr_recovered'])
        print_status(text, summary['termination'])
    return outcome.exit_code


def worker_count(jobs):
    limit = os.environ.get(THREADS_ENV)
    try:
        limit = int(limit) if limit else os.cpu_count() or 1
    except ValueError:
        raise ConfigError('%s must be an integer, got %r'
                          % (THREADS_ENV, limit))
    return max(1, min(jobs, limit))


def compare_row(rc, summary):
    initial_psi, trace = read_trace(os.path.join(rc.output, 'trace.csv'))
    criterion = audit_criterion(trace, rc.c_x, rc.c_y)
    descent = ''
    if summary['descent_audited']:
        descent = audit_descent(trace, summary['descent_a'], rc.rel_tol,
                                initial_psi).count
    return {
        'variant': summary['variant'],
        'seed': rc.seed,
        'outer_iterations': summary['outer_iterations'],
        'wall_time_s': summary['total_time_s'],
        'final_psi': summary['final_psi'],
        'criterion_violations': criterion.count,
        'descent_violations': descent,
        'termination': summary['termination'],
    }


def _compare_member(rc):
    outcome = execute(rc)
    return compare_row(rc, outcome.summary)


def compare(configs, output, workers=None):
    """
    Runs every configuration, each into ``output/<index>-<variant>``, and
    writes ``output/compare.csv`` with one row per configuration in input
    order.
    """
    members = [dataclasses.replace(rc, output=os.path.join(
        output, '%d-%s' % (index, rc.variant)))
        for index, rc in enumerate(configs)]
    if workers is None:
        workers = worker_count(len(members))
    logger.info('comparing %d runs on %d worker(s)', len(members), workers)
    if workers == 1:
        rows = [_compare_member(rc) for rc in members]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_compare_member, members))

    os.makedirs(output, exist_ok=True)
    with open(os.path.join(output, 'compare.csv'), 'w', newline='') as f:
        writer = csv.DictWriter(f, COMPARE_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
    return rows


def _add_ipad_flags(parser):
    group = parser.add_argument_group('solver')
    group.add_argument('--variant', choices=sorted(PRESETS))
    group.add_argument('--c-x', dest='c_x', type=float)
    group.add_argument('--c-y', dest='c_y', type=float)
    group.add_argument('--eta1', type=parse_schedule,
                       help='proximal weight of the W block, a value or a '
                            'comma separated schedule')
    group.add_argument('--eta2', type=parse_schedule)
    group.add_argument('--max-outer', dest='max_outer', type=int)
    group.add_argument('--max-inner', dest='max_inner', type=int)
    group.add_argument('--outer-tol', dest='outer_tol', type=float)
    group.add_argument('--stop-mode', dest='stop_mode', choices=STOP_MODES)
    group.add_argument('--abs-error-floor', dest='abs_error_floor',
                       type=float)
    group.add_argument('--stall-policy', dest='stall_policy',
                       choices=STALL_POLICIES)
    group.add_argument('--no-timing', dest='record_time',
                       action='store_false', default=None,
                       help='write zero elapsed times so traces are '
                            'reproducible bit for bit')
    group.add_argument('--seed', type=int)
    group.add_argument('--pith-step-scale', dest='pith_step_scale',
                       type=float)
    group.add_argument('--pith-max-steps', dest='pith_max_steps', type=int)
    group.add_argument('--admm-rho', dest='admm_rho', type=float)
    group.add_argument('--admm-max-steps', dest='admm_max_steps', type=int)
    group.add_argument('-o', '--output')


def _add_synthetic_flags(parser):
    group = parser.add_argument_group('synthetic data')
    group.add_argument('--n', type=int)
    group.add_argument('--m', type=int)
    group.add_argument('--p', type=int)
    group.add_argument('--k', type=int)
    group.add_argument('--noise-sigma', dest='noise_sigma', type=float)


def _add_denoise_flags(parser):
    group = parser.add_argument_group('denoising')
    group.add_argument('--image')
    group.add_argument('--sigma', type=float)
    group.add_argument('--stride', type=int)
    group.add_argument('--atoms', type=int)
    group.add_argument('--bound', type=float)
    group.add_argument('--crop', type=int)
    group.add_argument('--noise-seed', dest='noise_seed', type=int)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', help='INI file with settings')
    common.add_argument('-v', '--verbose', action='count', default=0)
    common.add_argument('-q', '--quiet', action='store_true')

    parser = argparse.ArgumentParser(
        prog='ipad', description='Inexact proximal alternating direction '
                                 'solvers for sparse dictionary learning.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    synth = sub.add_parser('synth', parents=[common],
                           help='learn a dictionary on synthetic data')
    _add_ipad_flags(synth)
    _add_synthetic_flags(synth)
    synth.add_argument('--lambda', dest='lam', type=float)

    denoise = sub.add_parser('denoise', parents=[common],
                             help='denoise a grayscale PGM image')
    _add_ipad_flags(denoise)
    _add_denoise_flags(denoise)
    denoise.add_argument('--lambda', dest='lam', type=float,
                         help='penalty per nonzero, derived from --sigma '
                              'when omitted')

    audit = sub.add_parser('audit', parents=[common],
                           help='check a trace against the criterion and '
                                'the sufficient descent inequality')
    audit.add_argument('--trace')
    audit.add_argument('--a', type=float,
                       help='descent constant, read from summary.json '
                            'when omitted')
    audit.add_argument('--rel-tol', dest='rel_tol', type=float)
    audit.add_argument('--c-x', dest='c_x', type=float)
    audit.add_argument('--c-y', dest='c_y', type=float)

    comp = sub.add_parser('compare', parents=[common],
                          help='run several variants and seeds and tabulate')
    comp.add_argument('--variants', nargs='+', required=True,
                      choices=sorted(PRESETS))
    comp.add_argument('--seeds', nargs='+', type=int)
    comp.add_argument('--mode', choices=('synth', 'denoise'))
    _add_ipad_flags(comp)
    _add_synthetic_flags(comp)
    _add_denoise_flags(comp)
    comp.add_argument('--lambda', dest='lam', type=float)
    return parser


_NOT_SETTINGS = ('command', 'config', 'verbose', 'quiet', 'variants', 'seeds')


def flags_from_args(args):
    return {k: v for k, v in vars(args).items()
            if k not in _NOT_SETTINGS and v is not None}


def configure_logging(verbose, quiet):
    if quiet:
        level = logging.WARNING
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format='%(levelname)s %(name)s: %(message)s')


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    colorama.init()
    try:
        file_values = load_ini(args.config) if args.config else {}
        overrides = Overrides(file=file_values, flags=flags_from_args(args))
        if args.command != 'compare':
            overrides.flags['mode'] = args.command
            return run(resolve(overrides))

        overrides.flags.setdefault('mode', file_values.get('mode', 'synth'))
        members = expand_members(overrides, args.variants, args.seeds)
        output = members[0].output
        rows = compare(members, output)
    except Exception as e:
        code = exit_code_for(e)
        print_status('%s: %s' % (type(e).__name__, e), STALLED)
        return code

    for row in rows:
        print_status('%-10s seed=%-4d outer=%-5d psi=%.10g %s' % (
            row['variant'], row['seed'], row['outer_iterations'],
            row['final_psi'], row['termination']), row['termination'])
    if any(row['termination'] == STALLED for row in rows):
        return EXIT_STALLED
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
