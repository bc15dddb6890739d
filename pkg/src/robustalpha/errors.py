"""Exception hierarchy shared by all modules."""


class RobustAlphaError(Exception):
    """Base class for every error raised by this package."""


class SingularGram(RobustAlphaError):
    pass


class DegenerateOmega(RobustAlphaError):
    pass


class ZeroResidualVariance(RobustAlphaError):
    def __init__(self, message, alpha_hat=None, funds=None):
        super().__init__(message)
        self.alpha_hat = alpha_hat
        self.funds = funds


class DegenerateScale(RobustAlphaError):
    pass


class NegativeDenominator(RobustAlphaError):
    pass


class AllPairsDegenerate(RobustAlphaError):
    pass


class InsufficientSpectrum(RobustAlphaError):
    pass


class EigenFailure(RobustAlphaError):
    pass


class ZeroEtaVariance(RobustAlphaError):
    pass


class MissingData(RobustAlphaError):
    pass


class InsufficientHistory(RobustAlphaError):
    def __init__(self, required, available):
        super().__init__(
            f"need at least {required} months of history, panel has {available}"
        )
        self.required = required
        self.available = available


class EmptyUniverse(RobustAlphaError):
    pass


class MalformedCSV(RobustAlphaError):
    """Raised by the CSV readers; ``row`` is 1-based and counts the header."""

    def __init__(self, message, path=None, row=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = ": ".join([", ".join(loc)]) + ": " if loc else ""
        super().__init__(prefix + message)
        self.path = path
        self.row = row
        self.column = column


class ProcedureError(RobustAlphaError):
    """Wraps a stage failure inside ``run_procedure`` with the diagnostics so far."""

    def __init__(self, method, stage, cause, diagnostics):
        super().__init__(f"{method} failed at stage {stage!r}: {cause}")
        self.method = method
        self.stage = stage
        self.cause = cause
        self.diagnostics = diagnostics


class NonConvergenceWarning(UserWarning):
    pass
