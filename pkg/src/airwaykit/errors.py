"""Exception types shared across the toolkit."""


class AirwayKitError(Exception):
    """Base class for all toolkit errors."""


# --- volume file parsing -------------------------------------------------

class BadMagic(AirwayKitError):
    """File does not carry the expected format magic string."""


class UnsupportedDatatype(AirwayKitError):
    """Voxel datatype code is outside the supported subset."""


class DimensionMismatch(AirwayKitError):
    """Header dimensions are invalid or disagree with the payload size."""


class TruncatedPayload(AirwayKitError):
    """File ends before the declared voxel payload is complete."""


class IoFailure(AirwayKitError):
    """Underlying read/write operation failed."""


# --- geometry / mask preconditions ---------------------------------------

class GeometryMismatch(AirwayKitError):
    """Two volumes that must share dims and spacing do not."""


class EmptyMask(AirwayKitError):
    """Operation requires at least one foreground voxel."""


class EmptySkeleton(AirwayKitError):
    """Skeleton input has no voxels."""


class EmptyTree(AirwayKitError):
    """Branch graph has no branches."""


class EmptyGroundTruth(AirwayKitError):
    """Ground-truth mask is empty; overlap ratios are undefined."""


class EmptyLungMask(AirwayKitError):
    """Lung mask is empty; volume ratio is undefined."""


class EmptyRoi(AirwayKitError):
    """Region of interest contains no voxels."""


class NotThin(AirwayKitError):
    """Input claimed to be a skeleton is not one-voxel thin."""


class NegativeRadius(AirwayKitError):
    """Branch radius must be non-negative."""


class OutOfBounds(AirwayKitError):
    """Synthetic structure does not fit inside the requested grid."""


class RatioOutOfRange(AirwayKitError):
    """Slice-reduction ratio outside the permitted interval."""


# --- classification / ranking --------------------------------------------

class EmptyInput(AirwayKitError):
    """No samples supplied."""


class SingleClassInput(AirwayKitError):
    """Both class labels are required for this statistic."""


class DuplicateTeamName(AirwayKitError):
    """Leaderboard entries must have unique team names."""


class ProcessFailure(AirwayKitError):
    """Timed external command failed for one or more cases."""


class NoCasesMatched(AirwayKitError):
    """No prediction/ground-truth file pairs could be formed."""


# --- survival statistics --------------------------------------------------

class NoEvents(AirwayKitError):
    """Proportional-hazards fit needs at least one observed event."""


class SingularInformation(AirwayKitError):
    """Observed information matrix is singular (collinear covariates)."""


class NonConvergence(AirwayKitError):
    """Newton iterations did not converge (e.g. monotone likelihood)."""


class LengthMismatch(AirwayKitError):
    """Paired samples must have equal length."""
