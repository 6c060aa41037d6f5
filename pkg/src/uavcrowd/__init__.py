"""uavcrowd: deterministic aerial crowd-activity simulation and dataset export."""

__version__ = "0.1.0"
