import csv
import json

import numpy as np
import pytest

from ipad import cli
from ipad.audit import TRACE_COLUMNS
from ipad.config import RunConfig
from ipad.data import pgm_write
from ipad.error import ConfigError, NonFiniteError
from ipad.framework import BlockPoint, IterationRecord, SolveResult

DATA = ['--n', '6', '--m', '8', '--p', '40', '--k', '2', '--no-timing']
SMALL = DATA + ['--max-outer', '15']


def run_synth(tmp_path, name='out', *args):
    output = str(tmp_path / name)
    code = cli.main(['synth'] + SMALL + list(args) + ['-o', output])
    return code, tmp_path / name


def read_rows(path):
    with open(str(path), newline='') as f:
        return list(csv.DictReader(f))


def test_synth_writes_outputs(tmp_path):
    code, out = run_synth(tmp_path, 'out', '--variant', 'palm')
    assert code == 0
    for name in ('trace.csv', 'summary.json', 'plot_w.csv', 'plot_d.csv',
                 'plot_psi.csv', 'plot_inner.csv'):
        assert (out / name).is_file()

    summary = json.loads((out / 'summary.json').read_text())
    assert summary['variant'] == 'PALM'
    assert summary['termination'] in ('converged', 'max_outer')
    assert summary['descent_audited']
    assert not summary['criterion_audited']
    assert summary['descent_a'] == pytest.approx(2.5 / 4)
    assert summary['config']['n'] == 6
    assert summary['total_time_s'] == 0.0

    rows = read_rows(out / 'trace.csv')
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == summary['outer_iterations'] + 1
    assert float(rows[-1]['psi']) == summary['final_psi']
    if summary['termination'] == 'converged':
        last = rows[-1]
        assert max(float(last['dx_rel']), float(last['dy_rel'])) < 1e-4


def test_synth_is_reproducible(tmp_path):
    args = ('--variant', 'ipad-admm', '--stall-policy', 'continue',
            '--seed', '3')
    _, first = run_synth(tmp_path, 'first', *args)
    _, second = run_synth(tmp_path, 'second', *args)
    assert (first / 'trace.csv').read_bytes() == \
        (second / 'trace.csv').read_bytes()


def test_audit_command(tmp_path, capsys):
    _, out = run_synth(tmp_path, 'out', '--variant', 'ipad-admm',
                       '--stall-policy', 'continue')
    capsys.readouterr()
    assert cli.main(['audit', '--trace', str(out / 'trace.csv')]) == 0
    stdout = capsys.readouterr().out
    assert 'criterion: 0 violation(s)' in stdout
    assert 'audit passed' in stdout


def test_audit_command_flags_tampering(tmp_path, capsys):
    _, out = run_synth(tmp_path, 'out', '--variant', 'palm')
    path = out / 'trace.csv'
    lines = path.read_text().splitlines()
    fields = lines[2].split(',')
    fields[1] = repr(float(fields[1]) + 10.0)
    lines[2] = ','.join(fields)
    path.write_text('\n'.join(lines) + '\n')
    capsys.readouterr()
    assert cli.main(['audit', '--trace', str(path)]) == cli.EXIT_STALLED
    stdout = capsys.readouterr().out
    assert 'step 1: sufficient descent broken' in stdout
    assert '%s:3' % path in stdout


def test_audit_needs_descent_constant(tmp_path):
    _, out = run_synth(tmp_path, 'out', '--variant', 'palm')
    trace = tmp_path / 'alone' / 'trace.csv'
    trace.parent.mkdir()
    trace.write_bytes((out / 'trace.csv').read_bytes())
    assert cli.main(['audit', '--trace', str(trace)]) == cli.EXIT_CONFIG
    assert cli.main(['audit', '--trace', str(trace), '--a', '0.1']) == 0


@pytest.mark.parametrize('args', [
    ['--eta1', '1.0'],
    ['--k', '20'],
    ['--pith-step-scale', '0.5'],
])
def test_bad_configuration(tmp_path, args):
    code, _ = run_synth(tmp_path, 'out', *args)
    assert code == cli.EXIT_CONFIG


def test_missing_image(tmp_path):
    code = cli.main(['denoise', '--image', str(tmp_path / 'missing.pgm'),
                     '-o', str(tmp_path / 'out')])
    assert code == cli.EXIT_IO


def test_unsupported_image(tmp_path):
    path = tmp_path / 'ascii.pgm'
    path.write_bytes(b'P2\n2 2\n255\n0 0 0 0\n')
    code = cli.main(['denoise', '--image', str(path),
                     '-o', str(tmp_path / 'out')])
    assert code == cli.EXIT_IO


def stalled_result():
    record = IterationRecord(t=1, psi=1.0, dx_norm=0.1, dy_norm=0.1,
                             ex_norm=0.5, ey_norm=0.0, inner_x=20, inner_y=1,
                             elapsed=0.0, capped_x=True, monotone_x=False)
    return SolveResult(final=BlockPoint(np.zeros((40, 8)), np.zeros((6, 8))),
                       trace=[record], termination='stalled',
                       initial_psi=2.0, variant='IPAD-ADMM')


def test_stalled_exit_code(tmp_path, mocker):
    mocker.patch.object(cli, 'run_variant', return_value=stalled_result())
    code, out = run_synth(tmp_path, 'out')
    assert code == cli.EXIT_STALLED
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['termination'] == 'stalled'


def test_non_finite_exit_code(tmp_path, mocker):
    mocker.patch.object(cli, 'run_variant',
                        side_effect=NonFiniteError('grad_H'))
    code, _ = run_synth(tmp_path, 'out')
    assert code == cli.EXIT_STALLED


def test_unexpected_errors_propagate(tmp_path, mocker):
    mocker.patch.object(cli, 'run_variant', side_effect=KeyError('boom'))
    with pytest.raises(KeyError):
        run_synth(tmp_path, 'out')


def test_config_file_precedence(tmp_path):
    ini = tmp_path / 'run.ini'
    ini.write_text('[ipad]\nmax_outer = 3\n[synthetic]\nlambda = 0.2\n'
                   '[run]\nvariant = mpalm\n')
    output = tmp_path / 'file'
    cli.main(['synth', '-c', str(ini)] + DATA + ['-o', str(output)])
    summary = json.loads((output / 'summary.json').read_text())
    assert summary['config']['max_outer'] == 3
    assert summary['config']['lam'] == 0.2
    assert summary['variant'] == 'mPALM'
    assert summary['outer_iterations'] <= 3

    output = tmp_path / 'flags'
    cli.main(['synth', '-c', str(ini), '--max-outer', '2', '--variant', 'palm']
             + DATA + ['-o', str(output)])
    summary = json.loads((output / 'summary.json').read_text())
    assert summary['config']['max_outer'] == 2
    assert summary['variant'] == 'PALM'


def test_config_file_unknown_key(tmp_path):
    ini = tmp_path / 'run.ini'
    ini.write_text('[ipad]\nstep = 3\n')
    code, _ = run_synth(tmp_path, 'out', '-c', str(ini))
    assert code == cli.EXIT_CONFIG


def test_denoise_command(tmp_path, test_image):
    image = tmp_path / 'clean.pgm'
    pgm_write(test_image(32), str(image))
    output = tmp_path / 'out'
    code = cli.main(['denoise', '--image', str(image), '--atoms', '64',
                     '--variant', 'mpalm', '--max-outer', '2', '--no-timing',
                     '-o', str(output)])
    assert code == 0
    summary = json.loads((output / 'summary.json').read_text())
    assert summary['patch_count'] == 49
    assert 0 < summary['psnr_noisy'] < 99
    assert 0 < summary['psnr_recovered'] < 99
    assert summary['lam'] == pytest.approx(3500 / 505 ** 2)
    assert (output / 'noisy.pgm').read_bytes().startswith(b'P5\n32 32\n')
    assert (output / 'recovered.pgm').is_file()


def compare_args(output):
    return ['compare', '--variants', 'palm', 'mpalm', '--seeds', '1', '2'] + \
        SMALL + ['-o', str(output)]


def test_compare(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, '1')
    output = tmp_path / 'cmp'
    assert cli.main(compare_args(output)) == 0
    rows = read_rows(output / 'compare.csv')
    assert [(r['variant'], r['seed']) for r in rows] == [
        ('PALM', '1'), ('PALM', '2'), ('mPALM', '1'), ('mPALM', '2')]
    assert all(r['criterion_violations'] == '0' for r in rows)
    assert all(r['descent_violations'] == '0' for r in rows)
    assert all(r['wall_time_s'] == '0.0' for r in rows)
    for index, name in enumerate(['palm', 'palm', 'mpalm', 'mpalm']):
        assert (output / ('%d-%s' % (index, name)) / 'trace.csv').is_file()


def test_compare_does_not_depend_on_workers(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, '1')
    assert cli.main(compare_args(tmp_path / 'one')) == 0
    monkeypatch.setenv(cli.THREADS_ENV, '2')
    assert cli.main(compare_args(tmp_path / 'two')) == 0
    assert (tmp_path / 'one' / 'compare.csv').read_bytes() == \
        (tmp_path / 'two' / 'compare.csv').read_bytes()


def test_compare_identical_members(tmp_path):
    rc = RunConfig(n=6, m=8, p=40, k=2, max_outer=10, record_time=False)
    rows = cli.compare([rc, rc], str(tmp_path / 'cmp'), workers=1)
    assert rows[0] == rows[1]


@pytest.mark.parametrize('env, jobs, expected', [
    ('3', 5, 3),
    ('8', 2, 2),
    ('1', 4, 1),
])
def test_worker_count(monkeypatch, env, jobs, expected):
    monkeypatch.setenv(cli.THREADS_ENV, env)
    assert cli.worker_count(jobs) == expected


def test_worker_count_rejects(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, 'many')
    with pytest.raises(ConfigError):
        cli.worker_count(2)


@pytest.mark.parametrize('exc, code', [
    (ConfigError('x'), cli.EXIT_CONFIG),
    (IOError('x'), cli.EXIT_IO),
    (NonFiniteError('prox'), cli.EXIT_STALLED),
])
def test_exit_code_for(exc, code):
    assert cli.exit_code_for(exc) == code
