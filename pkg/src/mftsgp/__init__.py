"""Multi-fidelity Gaussian-process surrogates for simulators with time-series outputs."""
from .basis import (
    BasisDistribution,
    OrthonormalBasis,
    empirical_ensemble,
    haar_sample,
    svd_dirac_basis,
)
from .cokriging import CokrigingModel, PriorSpec, fit_cokriging
from .design import Design, NestedDesignPair, maximin_lhs, nest_designs, nested_maximin_designs
from .kernels import corr_matrix, matern52
from .surrogate import (
    FullSurrogate,
    MultiFidelityData,
    Prediction,
    ProjectionSurrogate,
    fit_full,
    fit_projection,
    predict,
    q2_timeseries,
    select_dimension,
)

__version__ = "0.1.0"
