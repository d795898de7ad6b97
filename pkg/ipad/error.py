import os


class IpadError(Exception):
    """
    Base class for every error raised by this package.
    """


class ConfigError(IpadError, ValueError):
    """
    Invalid solver or run configuration.
    """


class ShapeError(IpadError, ValueError):
    """
    Matrices with incompatible shapes were handed to an oracle.
    """


class NonFiniteError(IpadError, FloatingPointError):
    """
    Should be raised when an oracle produces NaN or infinite values.

    ``oracle`` names the offending oracle; when raised from the outer loop
    the diagnostic ``record`` of the failing step and the partial
    ``trace`` are attached.
    """

    def __init__(self, oracle, message=None, record=None, trace=None):
        self.oracle = oracle
        self.record = record
        self.trace = trace
        if message is None:
            message = 'non-finite values produced by %s' % oracle
        IpadError.__init__(self, message)


class InfeasibleStartError(NonFiniteError):
    """
    The objective is not finite at the initial point.
    """


class FactorizationError(IpadError):
    """
    The ADMM linear system could not be factorized.
    """


class ImageFormatError(IpadError):
    """
    Base class for PGM decoding errors.
    """


class UnsupportedFormatError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


class TruncatedImageError(ImageFormatError):
    pass


class AuditFailureError(IpadError):
    """
    A trace audit found rows breaking a solver guarantee; ``failures``
    holds the `TraceViolation` objects.
    """

    def __init__(self, failures):
        self.failures = failures
        IpadError.__init__(self, '%d trace violation(s)' % len(failures))


class TraceViolation(object):
    """
    One offending row of a trace file.

    Subclasses provide ``headline()`` and ``details()``; rows are addressed
    by ``filename`` and the 1-based ``linenum`` inside the CSV file.
    """
    markup = ('red', 'bold')

    def __init__(self, filename, linenum, t):
        self.filename = filename
        self.linenum = linenum
        self.t = t

    def headline(self):
        raise NotImplementedError  # pragma: no cover

    def details(self):
        return []

    def get_lines(self):
        """``(text, markup)`` pairs, markup as TerminalWriter keywords."""
        return [(self.headline(), self.markup)] + \
            [('    ' + text, self.markup) for text in self.details()]

    def get_file_reference(self):
        return self.filename, self.linenum


class CriterionViolation(TraceViolation):
    def __init__(self, filename, linenum, t, block, e_norm, bound):
        TraceViolation.__init__(self, filename, linenum, t)
        self.block = block
        self.e_norm = e_norm
        self.bound = bound

    def headline(self):
        return 'step %d: inexactness criterion broken on block %s' % (
            self.t, self.block)

    def details(self):
        return ['||e|| = %.6g > C*||delta|| + floor = %.6g'
                % (self.e_norm, self.bound)]


class DescentViolation(TraceViolation):
    def __init__(self, filename, linenum, t, decrease, required):
        TraceViolation.__init__(self, filename, linenum, t)
        self.decrease = decrease
        self.required = required

    @property
    def margin(self):
        return self.decrease - self.required

    def headline(self):
        return 'step %d: sufficient descent broken' % self.t

    def details(self):
        return ['psi decrease %.6g < required %.6g'
                % (self.decrease, self.required)]


class UncheckedTraceViolation(TraceViolation):
    """
    Every row of a trace was skipped by an audit, so it vouches for
    nothing.
    """

    def __init__(self, filename, linenum, audit, skipped):
        TraceViolation.__init__(self, filename, linenum, 0)
        self.audit = audit
        self.skipped = skipped

    def headline(self):
        return '%s audit checked nothing' % self.audit

    def details(self):
        return ['all %d candidate(s) skipped as capped' % self.skipped]


class AuditFailureRepr(object):
    """
    Failure representation of an audit item: each violation is shown
    below the trace rows it refers to, followed by its
    ``file:line`` location.
    """
    failure_sep = '---'

    def __init__(self, failures):
        self.failures = failures

    @staticmethod
    def _location(failure):
        from _pytest._code.code import ReprFileLocation
        filename, linenum = failure.get_file_reference()
        return ReprFileLocation(filename, linenum, 'trace violation')

    def __str__(self):
        blocks = []
        for failure in self.failures:
            text = [line for line, _ in failure.get_lines()]
            text.append(str(self._location(failure)))
            blocks.append('\n'.join(text))
        return self.failure_sep.join(blocks)

    def toterminal(self, tw):
        last = len(self.failures) - 1
        for index, failure in enumerate(self.failures):
            for row in trace_row_context(*failure.get_file_reference()):
                tw.line(row, white=True, bold=True)
            for line, markup in failure.get_lines():
                tw.line(line, **dict.fromkeys(markup, True))
            self._location(failure).toterminal(tw)
            if index != last:
                tw.line(self.failure_sep, cyan=True)


def trace_row_context(filename, linenum):
    """
    Header, previous row and row ``linenum`` of a trace file; the row
    itself always comes last. Empty when the file is gone.
    """
    if not os.path.isfile(filename):
        return []
    with open(filename) as f:
        rows = [row.rstrip('\n') for row in f]
    wanted = sorted({1, max(linenum - 1, 1), linenum})
    return [rows[i - 1] for i in wanted if i <= len(rows)]
