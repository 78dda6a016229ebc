"""Exception types raised across the toolkit."""


class GnnSeedError(Exception):
    """Base class for every error raised on purpose by this package."""


class ShapeError(GnnSeedError, ValueError):
    pass


class NodeIndexError(GnnSeedError, IndexError):
    pass


class DegenerateGraphError(GnnSeedError, ValueError):
    """The graph has no edges, so modularity and GEE are undefined."""


class EmptyClassError(GnnSeedError, ValueError):
    """A class has no unmasked member."""


class InsufficientPointsError(GnnSeedError, ValueError):
    pass


class DegenerateFitError(GnnSeedError, ValueError):
    """A classifier cannot be fit (e.g. only one class is present)."""


class EmptyMaskError(GnnSeedError, ValueError):
    pass


class InfeasibleSplitError(GnnSeedError, ValueError):
    """Per-class minimums of the split protocol cannot be met."""


class DatasetFormatError(GnnSeedError, ValueError):
    pass
