"""Exception hierarchy.

Every error raised by the library derives from :class:`VPRError`. The three
families below map onto distinct CLI exit codes.
"""

from __future__ import annotations


class VPRError(Exception):
    """Base class for all library errors."""


class ConfigError(VPRError):
    """Invalid configuration, manifest or world description."""


class InvalidPartition(ConfigError):
    def __init__(self, message: str, places: list[int] | None = None):
        super().__init__(message)
        self.places = places or []


class ParseError(VPRError):
    """A file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class BadMagic(ParseError):
    pass


class TruncatedPayload(ParseError):
    pass


class MixedDimensions(ParseError):
    pass


class DuplicateQueryId(ParseError):
    pass


class DataError(VPRError):
    """Inputs parse but are inconsistent or unusable."""


class MapValidationError(DataError):
    """Raised by :func:`validate_map`.

    ``issues`` holds every problem found as ``(kind, id, detail)`` tuples,
    sorted by id, so the report is deterministic.
    """

    kind = "invalid"

    def __init__(self, issues: list[tuple[str, str, str]]):
        self.issues = issues
        lines = [f"{kind}: {ident} ({detail})" if detail else f"{kind}: {ident}"
                 for kind, ident, detail in issues]
        super().__init__("map validation failed:\n  " + "\n  ".join(lines))


class DuplicateId(MapValidationError):
    kind = "duplicate_id"


class IdMismatch(MapValidationError):
    kind = "id_mismatch"


class DimensionMismatch(MapValidationError):
    kind = "dimension_mismatch"


class NonFiniteValue(MapValidationError):
    kind = "non_finite"


class KTooLarge(DataError):
    pass


class EmptyMatches(DataError):
    pass


class NeedTwoNeighbors(DataError):
    pass


class MissingDensity(DataError):
    def __init__(self, reference_id: str):
        super().__init__(f"no pose density for reference {reference_id!r}")
        self.reference_id = reference_id


class ZeroWeightSum(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class SingleClassTraining(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NoPositives(DataError):
    pass


class NonFiniteScore(DataError):
    pass


class QueryCoverageMismatch(DataError):
    pass


class MissingQueryPose(DataError):
    pass
