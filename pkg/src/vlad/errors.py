"""Exception types shared across the package.

Every failure that callers are expected to catch and route (for example the
per-sample failure accounting in the pipeline) gets its own class here, so
that except-clauses never have to match on message strings.
"""


class VladError(Exception):
    """Base class for all package-specific errors."""


class EmptyCloudError(VladError):
    """An operation that needs points received a cloud with none."""


class DimensionMismatchError(VladError):
    """Paired rasters or clouds do not share the expected shape."""


class EmptyLiftError(VladError):
    """No masked pixel carried valid depth, so lifting produced nothing."""


class EmptyProjectionError(VladError):
    """No point of the cloud landed inside the target image bounds."""


class SingularCandidateError(VladError):
    """A candidate linear map could not be inverted."""


class EmptyMaskError(VladError):
    """A mask operation needs set pixels and found fewer than required."""


class IsotropicMaskError(VladError):
    """The mask has no dominant direction, so no axis can be fitted."""


class NoViableGraspError(VladError):
    """Every detected gap was filtered out by the viability thresholds."""


class MissingDirectoryError(VladError):
    """A dataset or fixture root does not exist."""


class NoSamplesError(VladError):
    """A dataset root exists but yields zero usable samples."""


class NoAnnotationsError(VladError):
    """Scoring was asked to run against an empty annotation list."""


class EmptyRecordsError(VladError):
    """Aggregation was asked to run over zero per-sample records."""


class ServiceUnavailableError(VladError):
    """A generation/depth/segmentation backend could not be reached."""


class MalformedResponseError(VladError):
    """A backend answered, but not in the documented wire format."""


class GenerationRefusedError(VladError):
    """The generation backend declined to produce an image."""
