"""Exception hierarchy shared by every module."""


class PatchVSRError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(PatchVSRError, ValueError):
    pass


class ShapeError(PatchVSRError, ValueError):
    pass


class InvalidStepError(PatchVSRError, ValueError):
    pass


class GeometryError(PatchVSRError, ValueError):
    pass


class CoverageError(PatchVSRError, ValueError):
    pass


class CodecError(PatchVSRError, ValueError):
    pass


class InvalidInputError(PatchVSRError, ValueError):
    pass


class PatchIndexError(PatchVSRError, IndexError):
    pass


class SnapshotError(PatchVSRError, ValueError):
    """Weight snapshot file is malformed or fails its checksum."""
