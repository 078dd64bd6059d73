"""Exception hierarchy shared by all probesight modules."""


class ProbesightError(Exception):
    """Base class for all toolkit errors."""


# geometry
class NonPositiveDepth(ProbesightError):
    pass


class DegenerateInput(ProbesightError):
    pass


class PointAtInfinity(ProbesightError):
    pass


# marker
class OutOfWrapRange(ProbesightError):
    pass


class NotEnoughFeatures(ProbesightError):
    pass


class AmbiguousWithoutStripe(ProbesightError):
    pass


class CollinearPairs(ProbesightError):
    pass


# feature detection
class ImageTooSmall(ProbesightError):
    pass


# pose estimation
class Degenerate(ProbesightError):
    pass


class CheiralityFailure(ProbesightError):
    pass


class NoSolution(ProbesightError):
    pass


class InsufficientExcitation(ProbesightError):
    pass


# loss kernels / maps
class DimensionMismatch(ProbesightError):
    pass


class NotNormalized(ProbesightError):
    pass


# 3D geometry
class NotEnoughValidPixels(ProbesightError):
    pass


class DegenerateCloud(ProbesightError):
    pass


class NoCandidate(ProbesightError):
    pass


# structured light
class NonConvergingRays(ProbesightError):
    pass


# regression
class NotElongated(ProbesightError):
    pass


class EmptyMask(ProbesightError):
    pass


class ShapeMismatch(ProbesightError):
    pass


# metrics
class EmptyOverlap(ProbesightError):
    pass


class NonPositiveValue(ProbesightError):
    pass


class LengthMismatch(ProbesightError):
    pass


class EmptyInput(ProbesightError):
    pass


# simulator
class ProbeOutOfView(ProbesightError):
    pass
