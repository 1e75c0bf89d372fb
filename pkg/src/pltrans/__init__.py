"""Partly linear transformation models for current status data.

Penalized maximum likelihood for ``P(delta = 1 | v, z, w) = F(beta'z + h(w) + H(v))``
with ``h`` a penalized cubic spline and ``H`` a nondecreasing step function,
block-jackknife confidence regions for ``beta``, efficient information
computations and a simulation harness.
"""
from .data import DataError, Dataset, read_csv, write_csv
from .families import LinkFamily, check_b5d, link_eval, q_eval
from .fit import FitConfig, FitResult, ModelParams, fit
from .inference import block_jackknife, confidence_region, f_quantile
from .isotonic import StepTransform, icm_h_step, npmle_single_sample, pava

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "FitConfig",
    "FitResult",
    "LinkFamily",
    "ModelParams",
    "StepTransform",
    "block_jackknife",
    "check_b5d",
    "confidence_region",
    "f_quantile",
    "fit",
    "icm_h_step",
    "link_eval",
    "npmle_single_sample",
    "pava",
    "q_eval",
    "read_csv",
    "write_csv",
    "__version__",
]
