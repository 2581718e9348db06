"""Exception types raised across the toolkit."""


class PanosfmError(Exception):
    """Base class for all toolkit errors."""


class ProjectionAtCenter(PanosfmError):
    """A world point coincides with the camera projection center."""


class EstimationError(PanosfmError):
    """Base class for geometric estimation failures."""


class Degenerate(EstimationError):
    """Input configuration does not determine a unique model."""


class NoConsensus(EstimationError):
    """RANSAC found no model with enough inliers."""


class CheiralityFailure(EstimationError):
    """No essential-matrix decomposition candidate passes the cheirality check."""


class NoParallax(EstimationError):
    """Triangulation rays are (nearly) parallel."""


class BehindRay(EstimationError):
    """Triangulated point lies opposite to an observed ray direction."""


class EngineError(PanosfmError):
    """Base class for reconstruction-engine failures."""


class NoSeed(EngineError):
    """No image pair qualifies as a reconstruction seed.

    Carries the statistics of the best pair examined so callers can report
    how close the search came to the thresholds.
    """

    def __init__(self, message: str, best_stats: dict | None = None):
        super().__init__(message)
        self.best_stats = best_stats or {}


class SeedCollapse(EngineError):
    """Seed-pair triangulation left too few scene points."""


class NoCandidate(EngineError):
    """No unregistered image meets the registration prerequisites."""
