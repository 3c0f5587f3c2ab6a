# utils/errors.py

from typing import Optional


class BevBenchError(Exception):
    """Base class for every error raised by the toolkit."""


# ==============================
# GEOMETRY / RASTER
# ==============================
class DegeneratePolygon(BevBenchError):
    pass


class ShapeMismatch(BevBenchError):
    pass


class InvalidPose(BevBenchError):
    pass


class InvalidSpec(BevBenchError):
    pass


class InvalidPointCloud(BevBenchError):
    pass


# ==============================
# PIPELINE
# ==============================
class EmptyInput(BevBenchError):
    pass


class SpanTooShort(BevBenchError):
    pass


class RankDeficient(BevBenchError):
    pass


class NoRoad(BevBenchError):
    pass


class NoEgoLane(BevBenchError):
    pass


class SequenceTooShort(BevBenchError):
    pass


class InvalidParams(BevBenchError):
    pass


# ==============================
# METRICS
# Raised when a metric is undefined; callers report it as missing, never as 0.
# ==============================
class MissingMetric(BevBenchError):
    pass


class EmptyGroundTruth(MissingMetric):
    pass


class NoOccludedCells(MissingMetric):
    pass


class NoGroundTruth(MissingMetric):
    pass


# ==============================
# DATA / FORMATS
# ==============================
class DataError(BevBenchError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(f"{where}{message}")


class NonRigid(DataError):
    pass


class TruncatedFile(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class BadMagic(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


class IoError(DataError):
    pass


class ManifestError(DataError):
    pass


class ConfigError(BevBenchError):
    def __init__(self, message: str, problems: Optional[list] = None):
        self.problems = problems or []
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class GridInvariantError(BevBenchError):
    pass
