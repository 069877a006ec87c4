"""Exception hierarchy shared by every graspkit module."""


class GraspKitError(Exception):
    """Base class for all graspkit errors."""


class DegenerateRectangle(GraspKitError):
    pass


class EmptyCluster(GraspKitError):
    """No pixel matched the colour predicate (no rectangle in the image)."""


class DegenerateCluster(GraspKitError):
    pass


class EmptyMask(GraspKitError):
    """Binary mask has no set pixel, so no object was segmented."""


class MalformedFile(GraspKitError):
    pass


class MissingGroundTruth(GraspKitError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__("no ground truth for: " + ", ".join(self.ids))


class InvalidDepth(GraspKitError):
    """Depth reading is zero (sensor hole) at the requested pixel."""


class DegenerateConfiguration(GraspKitError):
    pass


class LengthMismatch(GraspKitError):
    pass


class JointLimitViolation(GraspKitError):
    pass


class NearSingular(GraspKitError):
    """J J^T is too close to singular for the undamped pseudoinverse."""


class Diverged(GraspKitError):
    pass
