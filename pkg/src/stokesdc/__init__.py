"""Defect-correction multigrid for Q2/Q1 Stokes with Q1isoQ2/Q1 preconditioning."""

from .mesh import StructuredGrid, build_unit_square, build_step_domain, build_spaces
from .assembly import assemble, assemble_q2q1, assemble_q1isoq2, SaddleSystem
from .multigrid import CycleParams, MgHierarchy, build_hierarchy

__version__ = "0.1.0"
