"""Exception hierarchy.

Every error raised on bad input derives from :class:`DataError`, which the
CLI maps to exit code 3.
"""


class XRTrafficError(Exception):
    """Base class for all package errors."""


class DataError(XRTrafficError):
    """Input data is unusable."""


class MissingColumn(DataError):
    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"column {column!r} not found{where}")


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)


class NonMonotonicTime(ParseError):
    def __init__(self, row, previous, current):
        self.previous = previous
        self.current = current
        super().__init__(
            f"timestamp decreases ({previous!r} -> {current!r})", row=row, column=None
        )


class EmptyTrace(DataError):
    pass


class SizeZero(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class EmptySegment(DataError):
    pass


class UnimodalDistribution(XRTrafficError):
    """Fewer than two qualifying peaks in the inter-arrival histogram."""


class ZeroDuration(DataError):
    pass


class EmptyTraining(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class IncompatibleForests(XRTrafficError):
    pass


class StumplessForest(XRTrafficError):
    pass


class InsufficientData(DataError):
    pass


class SegmentSizeMismatch(DataError):
    def __init__(self, model_size, requested):
        self.model_size = model_size
        self.requested = requested
        super().__init__(
            f"model was trained at segment size {model_size}, got {requested}"
        )


class LengthMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class InvalidProfile(DataError):
    pass


class VersionMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass
