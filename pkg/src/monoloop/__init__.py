"""Monotone systems under negative feedback: simulation, characteristics and small-gain tests."""

from ._backend import BACKEND
from .characteristic import char_value, find_k2_solutions, iterate_char
from .extended import (
    build_closed_loop,
    build_extended_closed,
    build_extended_open,
    check_boundedness,
    find_extended_equilibria,
)
from .integrators import IntegratorOpts, find_steady_state, integrate, integrate_dde
from .linear import eigenvalues, gain_matrix, is_hurwitz, small_gain_report, spectral_radius
from .model import ModelDef, goodwin_model, linear_model, load_model, load_model_file
from .order import OrthantOrder, check_monotone

__all__ = [
    "BACKEND",
    "IntegratorOpts",
    "ModelDef",
    "OrthantOrder",
    "build_closed_loop",
    "build_extended_closed",
    "build_extended_open",
    "char_value",
    "check_boundedness",
    "check_monotone",
    "eigenvalues",
    "find_extended_equilibria",
    "find_k2_solutions",
    "find_steady_state",
    "gain_matrix",
    "goodwin_model",
    "integrate",
    "integrate_dde",
    "is_hurwitz",
    "iterate_char",
    "linear_model",
    "load_model",
    "load_model_file",
    "small_gain_report",
    "spectral_radius",
]
