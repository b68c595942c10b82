"""Shot noise series: samplers, characteristic functions, laws and regularity checks.

Total variation follows the unnormalized convention throughout: the distance
between two probability laws lies in ``[0, 2]``.
"""

from .kernels import (ConditionReport, Kernel, centering_a, from_poisson_integral, kernel_from_spec,
                      l1_norm, l2_condition, product_exp, product_power)
from .laws import EmpiricalLaw, estimate, estimate_paired, ks_statistic, ks_two_sample, tv_distance
from .measures import DiscreteSignedMeasure, convolution_power, convolve, product_law, tv_norm
from .series import SeriesConfig, sample_full, sample_truncated
from .spectral import CharFnGrid, charfn, empirical_charfn, invert_density
from .stochastic import ArrivalProcess, JumpLaw, RngStream, jump_law_from_spec

__version__ = "0.1.0"

__all__ = [
    "ArrivalProcess", "CharFnGrid", "ConditionReport", "DiscreteSignedMeasure", "EmpiricalLaw",
    "JumpLaw", "Kernel", "RngStream", "SeriesConfig", "centering_a", "charfn", "convolution_power",
    "convolve", "empirical_charfn", "estimate", "estimate_paired", "from_poisson_integral",
    "invert_density", "jump_law_from_spec", "kernel_from_spec", "ks_statistic", "ks_two_sample",
    "l1_norm", "l2_condition", "product_exp", "product_law", "product_power", "sample_full",
    "sample_truncated", "tv_distance", "tv_norm",
]
