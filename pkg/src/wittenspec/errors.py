"""Exception hierarchy shared by every stage of the pipeline.

Each exception carries a stable machine-readable ``code`` and the name of
the module and operation that raised it, so the command line front end can
serialize failures without guessing.
"""


class WittenSpecError(Exception):
    """Base class for all library errors."""

    code = "error"
    module = "wittenspec"

    def __init__(self, message, *, operation=None, **details):
        super().__init__(message)
        self.operation = operation
        self.details = details

    def to_dict(self):
        out = {
            "error": self.code,
            "module": self.module,
            "operation": self.operation,
            "message": str(self),
        }
        if self.details:
            out["details"] = {k: _jsonable(v) for k, v in sorted(self.details.items())}
        return out


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return repr(value)


# trigpoly -----------------------------------------------------------------

class TrigPolyError(WittenSpecError):
    module = "trigpoly"


class InputFormatError(TrigPolyError):
    code = "input_format"


class DegenerateCritical(TrigPolyError):
    code = "degenerate_critical"


class NonAlternating(TrigPolyError):
    code = "non_alternating"


class CriticalAtOrigin(TrigPolyError):
    code = "critical_at_origin"


class ConvergenceRadius(TrigPolyError):
    code = "convergence_radius"


class PathThroughZero(TrigPolyError):
    code = "path_through_zero"


class UnsupportedCase(TrigPolyError):
    code = "unsupported_case"


# transseries --------------------------------------------------------------

class TransSeriesError(WittenSpecError):
    module = "transseries"


class NonInvertibleLeading(TransSeriesError):
    code = "non_invertible_leading"


class LogLeading(TransSeriesError):
    code = "log_leading"


class NotInfinitesimal(TransSeriesError):
    code = "not_infinitesimal"


class SubstitutionNotSmall(TransSeriesError):
    code = "substitution_not_small"


class EmptySeries(TransSeriesError):
    code = "empty_series"


# ingredients --------------------------------------------------------------

class IngredientError(WittenSpecError):
    module = "ingredients"


class AbstractDataInsufficient(IngredientError):
    code = "abstract_data_insufficient"


class ExpansionDomain(IngredientError):
    code = "expansion_domain"


# quantize -----------------------------------------------------------------

class QuantizeError(WittenSpecError):
    module = "quantize"


class MultipleRootUnresolved(QuantizeError):
    code = "multiple_root_unresolved"


class ConditionInconsistent(QuantizeError):
    code = "condition_inconsistent"


# eigenfun -----------------------------------------------------------------

class EigenfunError(WittenSpecError):
    module = "eigenfun"


class ZeroKernel(EigenfunError):
    code = "zero_kernel"


class CancellationBelowDepth(EigenfunError):
    code = "cancellation_below_depth"


# oracle -------------------------------------------------------------------

class OracleError(WittenSpecError):
    module = "oracle"


class CutoffTooSmall(OracleError):
    code = "cutoff_too_small"


class NotConverged(OracleError):
    code = "not_converged"


class FloatingUnderflow(OracleError):
    code = "floating_underflow"
