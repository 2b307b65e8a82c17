"""Exception hierarchy.

Everything a caller can trigger with bad input derives from
:class:`ValidationError`; the CLI maps those to exit code 1.
"""


class ValidationError(ValueError):
    pass


class FlipStateMismatch(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class SizeMismatch(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyLabeledSet(ValidationError):
    pass


class EmptyTestSet(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class MissingPseudoLabel(ValidationError):
    pass


class NoCandidates(Exception):
    """No sign-consistent flip is left; the attack stops early."""


class ParseError(ValidationError):
    def __init__(self, path, line_no, msg):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no


class DuplicateEdge(ParseError):
    pass


class SelfLoopInInput(ParseError):
    pass


class InconsistentSplit(ValidationError):
    pass
