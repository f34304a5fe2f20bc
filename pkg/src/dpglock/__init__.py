"""Minimum-residual finite elements with domain-scaled test norms."""

from .mesh import Mesh, classify_boundary, make_rect_mesh, refine_uniform
from .study_cli import ExactBundle, StudyConfig, pick_d, run_study

__all__ = [
    "Mesh", "make_rect_mesh", "refine_uniform", "classify_boundary",
    "StudyConfig", "ExactBundle", "pick_d", "run_study",
]
