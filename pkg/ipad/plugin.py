import fnmatch
import json
import os

import pytest

from ipad.audit import audit_criterion, audit_descent, read_trace
from ipad.error import AuditFailureError, AuditFailureRepr

DEFAULT_MASKS = ('trace*.csv',)
DEFAULT_DESCENT_TOL = 1e-8


class TraceFacade(object):
    """
    Knows how to recognize trace files written by the ``ipad`` command and
    how to run the audits their summary asks for.
    """

    @classmethod
    def is_trace(cls, filename):
        if not filename.endswith('.csv') or not os.path.isfile(filename):
            return False
        if not os.path.isfile(cls.summary_path(filename)):
            return False
        with open(filename) as f:
            return f.readline().startswith('t,psi,')

    @staticmethod
    def summary_path(filename):
        return os.path.join(os.path.dirname(filename), 'summary.json')

    def load_summary(self, filename):
        with open(self.summary_path(filename)) as f:
            return json.load(f)

    def list_audits(self, filename):
        summary = self.load_summary(filename)
        audits = []
        if summary.get('criterion_audited'):
            audits.append('criterion')
        if summary.get('descent_audited'):
            audits.append('descent')
        return audits

    def run_audit(self, filename, audit, descent_tol=DEFAULT_DESCENT_TOL):
        summary = self.load_summary(filename)
        initial_psi, trace = read_trace(filename)
        if audit == 'criterion':
            config = summary['config']
            report = audit_criterion(trace, config['c_x'], config['c_y'],
                                     filename=filename)
        else:
            report = audit_descent(trace, summary['descent_a'], descent_tol,
                                   initial_psi, filename=filename)
        return report.violations or None


def pytest_collect_file(parent, file_path):
    if not TraceFacade.is_trace(str(file_path)):
        return
    masks = parent.config.getini('ipad_traces') or DEFAULT_MASKS
    if not parent.session.isinitpath(file_path):
        for pat in masks:
            if fnmatch.fnmatch(file_path.name, pat):
                break
        else:
            return
    return TraceFile.from_parent(parent, path=file_path, facade=TraceFacade())


def pytest_addoption(parser):
    parser.addini('ipad_traces', type='args',
                  default=DEFAULT_MASKS,
                  help='glob-style file patterns for IPAD trace discovery')
    parser.addini('ipad_descent_tol', default=str(DEFAULT_DESCENT_TOL),
                  help='relative tolerance of the sufficient descent audit')


class TraceFile(pytest.File):
    def __init__(self, *, facade, **kwargs):
        super().__init__(**kwargs)
        self.facade = facade

    def collect(self):
        for audit in self.facade.list_audits(str(self.path)):
            yield TraceItem.from_parent(self, name=audit, facade=self.facade)


class TraceItem(pytest.Item):
    def __init__(self, *, facade, **kwargs):
        super().__init__(**kwargs)
        self.facade = facade

    def runtest(self):
        tol = float(self.config.getini('ipad_descent_tol'))
        failures = self.facade.run_audit(str(self.path), self.name, tol)
        if failures:
            raise AuditFailureError(failures)

    def repr_failure(self, excinfo):
        if isinstance(excinfo.value, AuditFailureError):
            return AuditFailureRepr(excinfo.value.failures)
        return super().repr_failure(excinfo)

    def reportinfo(self):
        return self.path, 0, self.name
