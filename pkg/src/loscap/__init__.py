"""Line-of-sight capacity scaling toolkit.

Channel matrices with distance-dependent phase, a cooperative MIMO capacity
lower bound, a hierarchical cooperation planner and Monte Carlo checks of
the statistics that drive them.
"""

__version__ = "0.1.0"

from .errors import InvalidArgument, PreconditionError, SingularityError

__all__ = ["InvalidArgument", "PreconditionError", "SingularityError", "__version__"]
