"""Divergence-free virtual element solver for Stokes and Navier-Stokes on
3D polyhedral meshes."""

from .meshing import (
    MeshError,
    PolyMesh,
    generate_structured_cubes,
    generate_tetra_mesh,
    load_mesh,
    mesh_size,
    quality_check,
)
from .dofspace import build_dof_maps, build_reduced_maps, complex_dims, interpolate_velocity
from .polynomials import dim_poly
from .projection import build_projections

__all__ = [
    "MeshError",
    "PolyMesh",
    "generate_structured_cubes",
    "generate_tetra_mesh",
    "load_mesh",
    "mesh_size",
    "quality_check",
    "build_dof_maps",
    "build_reduced_maps",
    "complex_dims",
    "interpolate_velocity",
    "dim_poly",
    "build_projections",
]
