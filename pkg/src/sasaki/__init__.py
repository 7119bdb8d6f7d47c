"""Numerical toolkit for sub-Riemannian and scaled Riemannian geometry on the Heisenberg group."""
from .geodesics import SR, GeodesicResult, MetricSpec, ShootingOptions, closed_form_distance, distance
from .heatkernel import HeatKernelBundle, evaluate
from .model_space import ModelSpace
from .polynomial import Polynomial

__version__ = "0.1.0"

__all__ = [
    "ModelSpace",
    "MetricSpec",
    "SR",
    "ShootingOptions",
    "GeodesicResult",
    "distance",
    "closed_form_distance",
    "HeatKernelBundle",
    "evaluate",
    "Polynomial",
]
