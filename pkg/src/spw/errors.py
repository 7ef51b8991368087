"""Exception hierarchy shared across the package.

Three broad families map onto CLI exit codes: configuration problems
(exit 2), data validation failures (exit 3), and numerical failures
(exit 4).
"""


class SpwError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SpwError):
    """Invalid configuration, arguments, or mode mismatch (exit 2)."""


class FlavorMismatch(ConfigError):
    """Operation received a dataset of the wrong flavor (finite vs large)."""


class DataError(SpwError):
    """Input data failed validation (exit 3)."""


class MissingColumn(DataError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"required column {column!r} not found in header")


class NonFiniteValue(DataError):
    def __init__(self, row: int, column: str = ""):
        self.row = row
        self.column = column
        where = f" in column {column!r}" if column else ""
        super().__init__(f"non-finite value{where} at data row {row}")


class UnknownTreatmentLabel(DataError):
    def __init__(self, label, row: int | None = None):
        self.label = label
        self.row = row
        at = f" at data row {row}" if row is not None else ""
        super().__init__(f"treatment label {label!r} not in the declared set{at}")


class EmptyDataset(DataError):
    def __init__(self):
        super().__init__("dataset contains no observations")


class StratumTooSmall(DataError):
    def __init__(self, stratum, count: int):
        self.stratum = stratum
        self.count = count
        super().__init__(
            f"stratum {stratum!r} has {count} observation(s); at least 2 required"
        )


class NumericError(SpwError):
    """Numerical failure during estimation or inference (exit 4)."""


class SingularDesign(NumericError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"design matrix is numerically singular (condition {condition:.3e})")


class PropensityOnBoundary(NumericError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"propensity {value!r} at observation {index} is outside (0, 1)")


class NonPsdCovariance(NumericError):
    def __init__(self, min_eig: float):
        self.min_eig = min_eig
        super().__init__(f"covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})")


class DenominatorZero(NumericError):
    def __init__(self, what: str):
        super().__init__(f"zero denominator: {what}")


class EnumerationTooLarge(NumericError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"assignment space has {size} points, exceeding the guard of {limit}")


class NuisanceOutOfRange(NumericError):
    def __init__(self, name: str, value, at):
        super().__init__(f"nuisance {name}({at!r}) = {value!r} is out of range")


class MissingNuisance(ConfigError):
    def __init__(self, name: str, kind: str):
        super().__init__(f"residual kind {kind} requires nuisance {name!r}, which was not supplied")


class PerturbationLeavesDomain(NumericError):
    def __init__(self, value: float):
        super().__init__(f"perturbed propensity {value!r} leaves (0, 1)")


class StabilizerBoundViolated(NumericError):
    def __init__(self, value: float, bound: float):
        super().__init__(f"stabilizer {value!r} exceeds the declared bound {bound!r}")


class NonLinearInOutcome(NumericError):
    def __init__(self, kind: str):
        super().__init__(f"residual kind {kind} is not linear in the outcome")


class StatisticNotLinear(ConfigError):
    def __init__(self, name: str):
        super().__init__(f"statistic {name!r} is not a supported linear statistic")


class TooFewSamples(NumericError):
    def __init__(self, n: int, minimum: int):
        super().__init__(f"{n} samples supplied; at least {minimum} required")


class DegenerateSamples(NumericError):
    def __init__(self):
        super().__init__("samples are (numerically) constant; no density bandwidth exists")
