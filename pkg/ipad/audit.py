"""
Post hoc checks on iteration traces and the trace file format.

The sufficient-descent constants come from the proximal weights and error
constants alone; the audits only read `IterationRecord` values, so they run
equally on a fresh `SolveResult.trace` or on a trace read back from disk.
"""
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ipad.error import (CriterionViolation, DescentViolation, ShapeError,
                        UncheckedTraceViolation)
from ipad.framework import IterationRecord, schedule_values

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('t', 'psi', 'dx_rel', 'dy_rel', 'ex_norm', 'ey_norm',
                 'inner_x', 'inner_y', 'elapsed_s', 'dx_norm', 'dy_norm',
                 'floor_x', 'floor_y', 'capped_x', 'capped_y',
                 'monotone_x', 'monotone_y')

# header is line 1, the t = 0 row line 2
FIRST_RECORD_LINE = 3


def descent_constants(config, M):
    """
    Sufficient-descent constants ``(a, b)`` of an IPAD run.

    ``a = min_t min(eta1/4 - C_x^2/eta1, eta2/4 - C_y^2/eta2)`` and
    ``b = max_t max(eta1 + C_x, M + eta2 + C_y)``, both over every value
    the eta schedules take.
    """
    eta1 = schedule_values(config.eta1)
    eta2 = schedule_values(config.eta2)
    a = min(min(e / 4.0 - config.c_x ** 2 / e for e in eta1),
            min(e / 4.0 - config.c_y ** 2 / e for e in eta2))
    b = max(max(e + config.c_x for e in eta1),
            max(M + e + config.c_y for e in eta2))
    return a, b


@dataclass
class AuditReport:
    count: int = 0
    worst_margin: float = np.inf
    checked: int = 0
    skipped: int = 0
    violations: List = field(default_factory=list)

    @property
    def passed(self):
        return self.count == 0

    def finish(self, audit, filename):
        if self.skipped and not self.checked:
            logger.warning('%s: %s audit skipped all %d candidate(s)',
                           filename, audit, self.skipped)
            self.violations.append(UncheckedTraceViolation(
                filename, FIRST_RECORD_LINE, audit, self.skipped))
        self.count = len(self.violations)
        return self


def _line_of(index):
    return FIRST_RECORD_LINE + index


def audit_descent(trace, a, rel_tol=1e-8, initial_psi=None,
                  filename='<trace>'):
    """
    Flags every step with ``psi_prev - psi < a (dx^2 + dy^2) -
    rel_tol (1 + |psi_prev|)``.

    The first record is only checked when ``initial_psi`` is given. A step
    where either block is not monotone (a capped prox-corrected candidate
    or a capped iterate of a non-monotone solver) carries no descent
    guarantee and is counted in ``skipped``. A trace where every step was
    skipped fails. ``worst_margin`` is the smallest ``decrease - required``
    seen.
    """
    report = AuditReport()
    previous = initial_psi
    for index, record in enumerate(trace):
        if not (record.monotone_x and record.monotone_y):
            report.skipped += 1
        elif previous is not None:
            report.checked += 1
            decrease = previous - record.psi
            required = a * (record.dx_norm ** 2 + record.dy_norm ** 2) \
                - rel_tol * (1.0 + abs(previous))
            margin = decrease - required
            report.worst_margin = min(report.worst_margin, margin)
            if decrease < required:
                report.violations.append(DescentViolation(
                    filename, _line_of(index), record.t, decrease, required))
        previous = record.psi
    report.finish('descent', filename)
    if report.count:
        logger.warning('%s: %d sufficient descent violation(s)', filename,
                       report.count)
    return report


def audit_criterion(trace, c_x, c_y, filename='<trace>'):
    """
    Steps whose accepted blocks break ``||e|| <= C ||delta|| + floor``.

    Blocks flagged as capped never met the criterion by construction and
    are skipped; if no block is left to check the audit fails.
    """
    report = AuditReport()
    for index, record in enumerate(trace):
        for block, e_norm, delta, floor, c, capped in (
                ('x', record.ex_norm, record.dx_norm, record.floor_x, c_x,
                 record.capped_x),
                ('y', record.ey_norm, record.dy_norm, record.floor_y, c_y,
                 record.capped_y)):
            if capped:
                report.skipped += 1
                continue
            report.checked += 1
            bound = c * delta + floor
            report.worst_margin = min(report.worst_margin, bound - e_norm)
            if e_norm > bound:
                report.violations.append(CriterionViolation(
                    filename, _line_of(index), record.t, block, e_norm,
                    bound))
    return report.finish('criterion', filename)


def oscillation_count(initial_psi, trace):
    """Number of sign changes of the per-step objective change."""
    psis = np.array([initial_psi] + [r.psi for r in trace])
    signs = np.sign(np.diff(psis))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _row(record):
    return [record.t, repr(record.psi), repr(record.dx_rel),
            repr(record.dy_rel), repr(record.ex_norm), repr(record.ey_norm),
            record.inner_x, record.inner_y, repr(record.elapsed),
            repr(record.dx_norm), repr(record.dy_norm), repr(record.floor_x),
            repr(record.floor_y), int(record.capped_x), int(record.capped_y),
            int(record.monotone_x), int(record.monotone_y)]


def write_trace(path, initial_psi, trace):
    """
    Writes ``trace`` as CSV. A ``t = 0`` row carries the initial objective
    with every other column zero.
    """
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRACE_COLUMNS)
        writer.writerow([0, repr(float(initial_psi))] +
                        [0] * (len(TRACE_COLUMNS) - 2))
        for record in trace:
            writer.writerow(_row(record))


def read_trace(path):
    """
    Reads a file written by `write_trace`; returns ``(initial_psi,
    records)``.
    """
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ShapeError('%s: trace is missing columns %s'
                             % (path, ', '.join(sorted(missing))))
        rows = list(reader)
    if not rows or int(rows[0]['t']) != 0:
        raise ShapeError('%s: trace has no t = 0 row' % path)

    records = []
    for row in rows[1:]:
        records.append(IterationRecord(
            t=int(row['t']), psi=float(row['psi']),
            dx_norm=float(row['dx_norm']), dy_norm=float(row['dy_norm']),
            ex_norm=float(row['ex_norm']), ey_norm=float(row['ey_norm']),
            inner_x=int(row['inner_x']), inner_y=int(row['inner_y']),
            elapsed=float(row['elapsed_s']),
            dx_rel=float(row['dx_rel']), dy_rel=float(row['dy_rel']),
            floor_x=float(row['floor_x']), floor_y=float(row['floor_y']),
            capped_x=bool(int(row['capped_x'])),
            capped_y=bool(int(row['capped_y'])),
            monotone_x=bool(int(row['monotone_x'])),
            monotone_y=bool(int(row['monotone_y']))))
    return float(rows[0]['psi']), records


PLOT_PANELS = {
    'plot_w.csv': ('dx_rel',),
    'plot_d.csv': ('dy_rel',),
    'plot_psi.csv': ('dpsi_rel',),
    'plot_inner.csv': ('inner_x', 'inner_y'),
}


def write_plot_data(directory, trace):
    """
    One CSV per convergence panel: relative change of W, of D, of the
    objective and inner iteration counts, each against the outer step.
    """
    paths = []
    for name, columns in sorted(PLOT_PANELS.items()):
        path = os.path.join(directory, name)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('t',) + columns)
            for record in trace:
                writer.writerow([record.t] +
                                [repr(getattr(record, c)) for c in columns])
        paths.append(path)
    return paths
