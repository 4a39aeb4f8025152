"""Exception types shared across the package.

Every error raised by the public API derives from :class:`SeqRecError` so
callers can catch broadly; the CLI maps subfamilies to exit codes.
"""


class SeqRecError(Exception):
    """Base class for all seqrec errors."""


class ValidationError(SeqRecError):
    """A curriculum or table failed structural validation."""


class CycleDetected(ValidationError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"prerequisite cycle through courses {self.cycle}")


class ElectivePrereqOfMandatory(ValidationError):
    def __init__(self, elective, mandatory):
        self.pair = (elective, mandatory)
        super().__init__(
            f"elective course {elective} is a prerequisite of mandatory course {mandatory}"
        )


class NeverOffered(ValidationError):
    def __init__(self, course):
        self.course = course
        super().__init__(f"course {course} is never offered")


class RangeError(ValidationError):
    """A numeric field is outside its legal range."""


class QuarterOutOfRange(SeqRecError):
    def __init__(self, t, horizon):
        super().__init__(f"quarter {t} outside 1..{horizon}")


class WidthMismatch(SeqRecError):
    """Two course states of different bit widths were combined."""


class ActionOverlapsState(SeqRecError):
    """An action contains a course that is already passed."""


class GraphMismatch(SeqRecError):
    """A layered graph is internally inconsistent."""


class UnknownState(SeqRecError):
    def __init__(self, state_bits, quarter, detail=""):
        self.state_bits = state_bits
        self.quarter = quarter
        msg = f"state {state_bits:#x} not reachable entering quarter {quarter}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Infeasible(SeqRecError):
    """No terminal state is reachable within the horizon."""


class SizeLimitExceeded(SeqRecError):
    def __init__(self, quarter, count, limit):
        self.quarter = quarter
        self.count = count
        self.limit = limit
        super().__init__(
            f"graph exceeded {limit} node entries while expanding quarter {quarter} "
            f"(running count {count})"
        )


class ContextOutOfRange(SeqRecError):
    """A context coordinate lies outside [0, 1]."""


class LengthMismatch(SeqRecError):
    """Paired series have different lengths."""


class ParseError(SeqRecError):
    """A file could not be parsed."""


class OverlappingBins(ValidationError):
    """Context bins overlap."""


class UnavailableCell(SeqRecError):
    def __init__(self, bin_index, arm):
        self.bin_index = bin_index
        self.arm = arm
        super().__init__(f"no observations for arm {arm} in context bin {bin_index}")


class ChecksumMismatch(SeqRecError):
    """A policy file was produced from a different curriculum."""
