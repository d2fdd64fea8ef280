"""Exception hierarchy shared by the library and the command line."""


class FormTwinError(Exception):
    """Base class for all package errors."""


class SchemaError(FormTwinError, ValueError):
    """A file or configuration does not match its declared layout."""


class ParseError(SchemaError):
    """A field could not be parsed into a finite number."""


class NumericalError(FormTwinError, ArithmeticError):
    """A numerical routine failed (NaN loss, singular factorization, ...)."""


class QpError(NumericalError):
    """The QP data is invalid, e.g. a non-convex cost was detected."""


class SamplingError(FormTwinError, RuntimeError):
    """Rejection sampling ran out of attempts."""


class ArtifactError(FormTwinError):
    """An upstream artifact is missing or was produced from different inputs."""
