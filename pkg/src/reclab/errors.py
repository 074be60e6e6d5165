"""Exception hierarchy shared by all reclab modules."""


class ReclabError(Exception):
    """Base class for every error raised by reclab."""


class DomainError(ReclabError, ValueError):
    """A point or parameter lies outside the domain of an operation."""


class LengthError(ReclabError, ValueError):
    """A supplied stream or sequence is shorter than required."""


class UnsupportedRadiusError(ReclabError, ValueError):
    """The radius would make a ball wrap onto itself."""


class InfeasibleRadiusError(ReclabError, ValueError):
    """No admissible radius gives the requested ball measure.

    ``x`` holds the offending centre when known.
    """

    def __init__(self, message, x=None, M=None):
        super().__init__(message)
        self.x = x
        self.M = M


class AlignmentError(ReclabError, ValueError):
    """Bins do not refine the Markov partition but exactness was requested."""


class ConfigError(ReclabError, ValueError):
    """Invalid experiment configuration; ``fields`` lists what is wrong."""

    def __init__(self, fields):
        self.fields = dict(fields)
        detail = "; ".join(f"{k}: {v}" for k, v in self.fields.items())
        super().__init__(f"invalid config ({detail})")
