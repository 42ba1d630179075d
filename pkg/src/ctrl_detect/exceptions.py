class SchemaError(ValueError):
    """An input file does not match its expected layout."""


class UndefinedSilhouetteError(ValueError):
    pass


class UndefinedAlignmentError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class NoValidMaskError(RuntimeError):
    """Every candidate mask in the parameter grid was rejected."""
