"""Spectral heat-kernel Picard scheme for local Euler solutions on a periodic cube."""
from .data import DataParams, make_data, make_planar_data, make_singular_data, make_smooth_data
from .field import GridSpec, ParameterError, ScalarField, TimeGrid, VectorField, make_grid
from .kernels import HeatParams
from .norms import NormReport, norm_suite
from .scheme import ContractionReport, SchemeParams, Trajectory, auto_search, solve_fixed_point, solve_reversed
from .witness import WitnessReport, bound_integral, run_witness

__version__ = "0.1.0"

__all__ = [
    "ContractionReport",
    "DataParams",
    "GridSpec",
    "HeatParams",
    "NormReport",
    "ParameterError",
    "ScalarField",
    "SchemeParams",
    "TimeGrid",
    "Trajectory",
    "VectorField",
    "WitnessReport",
    "auto_search",
    "bound_integral",
    "make_data",
    "make_grid",
    "make_planar_data",
    "make_singular_data",
    "make_smooth_data",
    "norm_suite",
    "run_witness",
    "solve_fixed_point",
    "solve_reversed",
]
