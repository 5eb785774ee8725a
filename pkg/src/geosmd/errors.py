"""Exception hierarchy shared by all modules."""


class GeoSmdError(Exception):
    """Base class for errors raised by this package."""


class DomainError(GeoSmdError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class RangeError(DomainError):
    """An argument lies outside the supported numerical range."""


class InvalidWeight(DomainError):
    pass


class PooledUndefined(DomainError):
    """The pooled SMD needs equal population variances."""


class DegreesOfFreedomTooSmall(DomainError):
    pass


class InsufficientStudies(GeoSmdError):
    pass


class StudyParseError(GeoSmdError):
    """A study table row failed validation.

    ``row`` is the 1-based line number in the source (the header is line 1).
    """

    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class StudyEstimationError(GeoSmdError):
    def __init__(self, study_id, cause):
        self.study_id = study_id
        self.cause = cause
        super().__init__(f"study {study_id!r}: {cause}")


class ConfigError(GeoSmdError):
    """Invalid simulation configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None, index=None):
        self.message = message
        self.key = key
        self.index = index
        parts = []
        if index is not None:
            parts.append(f"scenario {index}")
        if key is not None:
            parts.append(f"key {key!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
