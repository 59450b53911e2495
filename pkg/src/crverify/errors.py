"""Exception types shared across the package."""


class CRVerifyError(Exception):
    """Base class for all crverify errors."""


class DepthExceeded(CRVerifyError):
    """A field was differentiated beyond its configured nesting order."""


class Degenerate(CRVerifyError):
    """Levi density vanishes: the structure is not strongly pseudoconvex there."""


class SingularSystem(CRVerifyError):
    """A pointwise linear solve is rank deficient (degenerate contact form)."""


class FrameExpansionFailure(CRVerifyError):
    """Bracket expansion in the frame left a residual above tolerance."""


class PredictionMismatch(CRVerifyError):
    """Recomputed structure functions disagree with the frame-change transforms."""


class ModeMismatch(CRVerifyError):
    """Formula-mode and projection-mode second fundamental forms disagree."""


class RankDrop(CRVerifyError):
    """The first normal space changes rank across nearby points."""


class NotAdapted(CRVerifyError):
    """Frame fails the adaptedness screen (b != i/2 or c not purely imaginary)."""


class OracleMismatch(CRVerifyError):
    """Closed-form value disagrees with its independent numerical oracle."""


class HypothesisViolated(CRVerifyError):
    """Arguments fall outside a stated hypothesis (e.g. lambda_2 <= 0)."""


class MetricMismatch(CRVerifyError):
    """Intrinsic metric cannot be matched to flat coordinates."""


class NotFlat(CRVerifyError):
    """Webster metric coefficients vary over the chart; flattening impossible."""


class NoFeasiblePoint(CRVerifyError):
    """Calibration search box contains no parameters meeting the defect bound."""


class DegenerateChart(CRVerifyError):
    """Chart parametrization is singular inside the requested box."""


class ConfigError(CRVerifyError):
    """Scene configuration file violates the schema."""


class ExprSyntaxError(CRVerifyError):
    """Malformed DSL expression; carries line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownSymbol(ExprSyntaxError):
    """Identifier not among the declared coordinates/functions."""
