"""Exception hierarchy shared across the package."""


class QoIError(Exception):
    """Base class for all package errors."""

    code = "qoi_error"


class ParseError(QoIError):
    code = "parse_error"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(QoIError):
    code = "dimension_mismatch"


class NonFiniteFeature(QoIError):
    code = "non_finite_feature"


class EmptyBatch(QoIError):
    code = "empty_batch"


class MissingFlags(QoIError):
    code = "missing_flags"


class TrainError(QoIError):
    code = "train_error"


class SingularCovariance(TrainError):
    code = "singular_covariance"


class DegenerateCentroids(QoIError):
    code = "degenerate_centroids"


class ConfigError(QoIError):
    """Bad configuration or scenario document; ``field`` names the offender."""

    code = "config_error"

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
