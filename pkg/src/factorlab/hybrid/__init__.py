"""Mixed discrete-continuous factors: conditional tables of continuous factors,
box indicators and box-truncated Gaussians."""

from .conditional import ConditionalFactor
from .indicator import IndicatorFactor, partition_index, region_indicator
from .truncated import TruncatedGaussian, truncate
from .truncnorm import box_moments, log_box_prob

__all__ = [
    "ConditionalFactor",
    "IndicatorFactor",
    "TruncatedGaussian",
    "box_moments",
    "log_box_prob",
    "partition_index",
    "region_indicator",
    "truncate",
]
