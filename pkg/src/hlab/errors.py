"""Exception hierarchy.

``DomainError`` subclasses describe inputs or states the numerics cannot
handle (bad bracket, wrong unstable dimension, ...); the CLI maps them to
exit code 2.  Anything else escaping a command is an internal failure.
"""


class HlabError(Exception):
    pass


class DomainError(HlabError):
    pass


class NoConvergence(HlabError):
    pass


class Diverged(HlabError):
    pass


class StepCollapse(HlabError):
    def __init__(self, message, last_point=None):
        super().__init__(message)
        self.last_point = last_point


class NotIsolated(HlabError):
    pass


class AmbiguousConvergence(HlabError):
    pass


class NoBracket(DomainError):
    pass


class UndeterminedDominant(DomainError):
    pass


class DimensionMismatch(DomainError):
    pass


class NotHeteroclinic(DomainError):
    pass


class WindowEmpty(HlabError):
    pass


class ModeOverflow(HlabError):
    pass
