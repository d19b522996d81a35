"""Exception types shared across the routing engine."""


class RoutingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RoutingError):
    """An input value lies outside its documented domain."""


class IncompleteLabelsError(RoutingError):
    """A labeled-evaluation operation hit a record without quality labels."""


class AlignmentError(RoutingError):
    """Records and decisions (or parallel lists) do not line up."""


class MissingSignalError(RoutingError):
    """A scorer was asked for a signal the record does not carry."""


class DimensionMismatchError(RoutingError):
    """A feature vector does not match the head's dimensionality."""


class DatasetValidationError(RoutingError):
    """A dataset file failed validation; the message names lines or ids."""


class SchemaError(RoutingError):
    """A persisted artifact does not match its declared schema."""


class VersionError(SchemaError):
    """A persisted artifact declares an unsupported version."""


class ConfigError(RoutingError):
    """An operation was configured with unusable parameters."""


class DegenerateSplitError(ConfigError):
    """A train/heldout split would leave one side empty."""


class RegularizationRequiredError(RoutingError):
    """The normal equations are singular and no ridge penalty was given."""
