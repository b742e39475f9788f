"""Meshes and P1 finite elements for the torso region and the epicardial curve."""

from .assembly import (
    assemble_mass,
    assemble_stiffness,
    element_gradient,
    lumped_mass,
    nodal_gradient_norm,
)
from .interp import interpolate, interpolation_matrix
from .io import read_mesh, write_mesh, write_vtk
from .mesh import (
    BLOOD,
    BODY_SURFACE,
    EPICARDIAL,
    HEART,
    INTERIOR,
    TORSO,
    CurveMesh,
    Mesh2D,
    annulus_mesh,
    disk_mesh,
    graded_radii,
    heart_torso_mesh,
    rectangle_mesh,
    submesh,
    torso_mesh,
)

__all__ = [
    "BLOOD", "BODY_SURFACE", "EPICARDIAL", "HEART", "INTERIOR", "TORSO",
    "CurveMesh", "Mesh2D",
    "annulus_mesh", "disk_mesh", "graded_radii", "heart_torso_mesh", "rectangle_mesh",
    "submesh", "torso_mesh",
    "assemble_mass", "assemble_stiffness", "element_gradient", "lumped_mass",
    "nodal_gradient_norm",
    "interpolate", "interpolation_matrix",
    "read_mesh", "write_mesh", "write_vtk",
]
