"""Degree-of-freedom layouts for the velocity/pressure pair, the reduced
pair, dimension formulas of the four complex spaces, and interpolation of
analytic fields into DoF vectors.

Velocity DoFs per cell, in local order:
  family 1: values at the cell vertices (3 per vertex),
  family 2: values at the k-1 internal Gauss-Lobatto points of each edge,
  family 3: face moments of the normal and the two tangential components
            against face monomials of degree <= k-2, divided by the face area,
  family 4: cell moments against the independent cross basis of
            xhat /\ [P_{k-3}]^3, divided by the cell volume,
  family 5: cell moments of div v against scaled monomials of degree 1..k-1,
            divided by the cell volume.
Shared entities are numbered once; moment scalings keep DoF values O(1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from . import quadrature as quad
from .meshing import PolyMesh
from .polynomials import (
    MonomialBasis2,
    MonomialBasis3,
    cross_coefficients,
    cross_dimension,
    dim_poly,
)

SUPPORTED_DEGREES = (2, 3, 4)


@lru_cache(maxsize=None)
def edge_point_params(k: int) -> tuple[float, ...]:
    """Internal Gauss-Lobatto nodes of the (k+1)-point rule, on (0, 1)."""
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    interior = np.sort(legendre.legroots(legendre.legder(coef)))
    return tuple((interior + 1.0) / 2.0)


def face_coords(mesh: PolyMesh, f: int, pts3: np.ndarray) -> np.ndarray:
    g = mesh.face_geom[f]
    rel = np.atleast_2d(pts3) - g.centroid
    return np.stack([rel @ g.tau1, rel @ g.tau2], axis=1)


def face_basis(mesh: PolyMesh, f: int, degree: int) -> MonomialBasis2:
    return MonomialBasis2(degree, np.zeros(2), mesh.face_geom[f].h)


def cell_basis(mesh: PolyMesh, c: int, degree: int) -> MonomialBasis3:
    g = mesh.cell_geom[c]
    return MonomialBasis3(degree, g.barycenter, g.h)


@dataclass
class CellDofLayout:
    """Index arrays into a cell's local DoF vector."""

    vertex: np.ndarray    # (l_V, 3)
    edge: np.ndarray      # (l_e, k-1, 3)
    face: np.ndarray      # (l_f, 3, pi_{k-2,2}); middle axis: n, tau1, tau2
    d4: np.ndarray        # (n4,)
    d5: np.ndarray        # (n5,)
    ndof: int


@dataclass
class DofMapV:
    """Global numbering of the five velocity DoF families."""

    k: int
    ndof: int
    n_edge_pts: int
    n_face_moms: int
    n_d4: int
    n_d5: int
    offsets: dict
    cell_global: list[np.ndarray]
    layouts: list[CellDofLayout]
    dirichlet: np.ndarray        # bool mask over global velocity DoFs
    edge_points: np.ndarray      # (L_e, k-1, 3) physical coordinates

    def counts_by_family(self) -> dict:
        return {
            "vertex_values": self.offsets["edge"],
            "edge_values": self.offsets["face"] - self.offsets["edge"],
            "face_moments": self.offsets["cell"] - self.offsets["face"],
            "cross_moments": self.n_d4 * len(self.cell_global),
            "divergence_moments": self.n_d5 * len(self.cell_global),
        }


@dataclass
class DofMapQ:
    """Per-cell pressure moments against scaled monomials of degree <= k-1."""

    k: int
    n_per_cell: int
    ndof: int

    def cell_slice(self, c: int) -> slice:
        return slice(c * self.n_per_cell, (c + 1) * self.n_per_cell)


@dataclass
class ReducedMaps:
    """Velocity map without the divergence-moment family; constant pressures."""

    full_v: DofMapV
    full_q: DofMapQ
    keep: np.ndarray          # bool over full velocity DoFs
    full_to_red: np.ndarray   # int, -1 on dropped DoFs
    ndof_v: int
    ndof_q: int               # = number of cells

    @property
    def saving(self) -> int:
        n_cells = len(self.full_v.cell_global)
        return (self.full_v.ndof - self.ndof_v) + (self.full_q.ndof - self.ndof_q)


def build_dof_maps(mesh: PolyMesh, k: int) -> tuple[DofMapV, DofMapQ]:
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported degree k={k}; supported: {SUPPORTED_DEGREES}")
    n_ep = k - 1
    n_fm = dim_poly(k - 2, 2)
    n_d4 = cross_dimension(k - 2)
    n_d5 = dim_poly(k - 1, 3) - 1

    off_vertex = 0
    off_edge = 3 * mesh.n_vertices
    off_face = off_edge + 3 * n_ep * mesh.n_edges
    off_cell = off_face + 3 * n_fm * mesh.n_faces
    ndof = off_cell + (n_d4 + n_d5) * mesh.n_cells
    offsets = {"vertex": off_vertex, "edge": off_edge, "face": off_face, "cell": off_cell}

    params = np.array(edge_point_params(k))
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    edge_points = a[:, None, :] + params[None, :, None] * (b - a)[:, None, :]

    cell_global = []
    layouts = []
    for ci in range(mesh.n_cells):
        vs = mesh.cell_vertices[ci]
        es = mesh.cell_edges[ci]
        fs = mesh.cells[ci][0]
        gl = []
        for v in vs:
            gl.extend(off_vertex + 3 * v + np.arange(3))
        for e in es:
            gl.extend(off_edge + 3 * n_ep * e + np.arange(3 * n_ep))
        for f in fs:
            gl.extend(off_face + 3 * n_fm * f + np.arange(3 * n_fm))
        gl.extend(off_cell + (n_d4 + n_d5) * ci + np.arange(n_d4 + n_d5))
        cell_global.append(np.array(gl, dtype=int))

        pos = 0
        vertex_idx = np.arange(3 * len(vs)).reshape(len(vs), 3)
        pos += 3 * len(vs)
        edge_idx = pos + np.arange(3 * n_ep * len(es)).reshape(len(es), n_ep, 3)
        pos += 3 * n_ep * len(es)
        face_idx = pos + np.arange(3 * n_fm * len(fs)).reshape(len(fs), 3, n_fm)
        pos += 3 * n_fm * len(fs)
        d4_idx = pos + np.arange(n_d4)
        pos += n_d4
        d5_idx = pos + np.arange(n_d5)
        pos += n_d5
        layouts.append(CellDofLayout(vertex_idx, edge_idx, face_idx, d4_idx, d5_idx, pos))

    dirichlet = np.zeros(ndof, dtype=bool)
    for v in np.nonzero(mesh.boundary_vertex)[0]:
        dirichlet[off_vertex + 3 * v: off_vertex + 3 * v + 3] = True
    for e in np.nonzero(mesh.boundary_edge)[0]:
        dirichlet[off_edge + 3 * n_ep * e: off_edge + 3 * n_ep * (e + 1)] = True
    for f in np.nonzero(mesh.boundary_face)[0]:
        dirichlet[off_face + 3 * n_fm * f: off_face + 3 * n_fm * (f + 1)] = True

    mapv = DofMapV(
        k=k, ndof=ndof, n_edge_pts=n_ep, n_face_moms=n_fm, n_d4=n_d4, n_d5=n_d5,
        offsets=offsets, cell_global=cell_global, layouts=layouts,
        dirichlet=dirichlet, edge_points=edge_points,
    )
    mapq = DofMapQ(k=k, n_per_cell=dim_poly(k - 1, 3), ndof=dim_poly(k - 1, 3) * mesh.n_cells)
    return mapv, mapq


def build_reduced_maps(mesh: PolyMesh, k: int, maps: tuple[DofMapV, DofMapQ] | None = None) -> ReducedMaps:
    mapv, mapq = maps if maps is not None else build_dof_maps(mesh, k)
    keep = np.ones(mapv.ndof, dtype=bool)
    blk = mapv.n_d4 + mapv.n_d5
    for ci in range(mesh.n_cells):
        start = mapv.offsets["cell"] + blk * ci + mapv.n_d4
        keep[start: start + mapv.n_d5] = False
    full_to_red = np.full(mapv.ndof, -1, dtype=int)
    full_to_red[keep] = np.arange(int(keep.sum()))
    return ReducedMaps(
        full_v=mapv, full_q=mapq, keep=keep, full_to_red=full_to_red,
        ndof_v=int(keep.sum()), ndof_q=mesh.n_cells,
    )


# ---------------------------------------------------------------------------
# Interpolation of analytic fields
# ---------------------------------------------------------------------------


def _as_field(u):
    """Wrap a callable so it maps (n,3) points to an (n,3) array."""
    def wrapped(pts):
        vals = np.asarray(u(np.atleast_2d(pts)), dtype=float)
        return vals.reshape(-1, 3)
    return wrapped


def interpolate_velocity(mesh: PolyMesh, mapv: DofMapV, u, div_u=None) -> np.ndarray:
    """DoF vector of the interpolant of the analytic field u.

    u maps (n, 3) points to (n, 3) values; div_u maps points to scalars and
    is required whenever the divergence-moment family is present (k >= 2).
    """
    k = mapv.k
    if div_u is None and mapv.n_d5 > 0:
        raise ValueError("div_u is required to interpolate the divergence moments")
    u = _as_field(u)
    dof = np.zeros(mapv.ndof)
    dof[: mapv.offsets["edge"]] = u(mesh.vertices).ravel()
    dof[mapv.offsets["edge"]: mapv.offsets["face"]] = u(
        mapv.edge_points.reshape(-1, 3)
    ).ravel()

    n_fm = mapv.n_face_moms
    for f in range(mesh.n_faces):
        g = mesh.face_geom[f]
        pts2, pts3, w = quad.face_quadrature(mesh, f, 2 * k + 2)
        phi = face_basis(mesh, f, k - 2).eval(pts2)
        vals = u(pts3)
        base = mapv.offsets["face"] + 3 * n_fm * f
        for d, direction in enumerate((g.normal, g.tau1, g.tau2)):
            comp = vals @ direction
            dof[base + d * n_fm: base + (d + 1) * n_fm] = (phi * (w * comp)[:, None]).sum(axis=0) / g.area

    blk = mapv.n_d4 + mapv.n_d5
    for ci in range(mesh.n_cells):
        g = mesh.cell_geom[ci]
        rule = quad.cell_quadrature(mesh, ci, 2 * k + 2)
        vals = u(rule.points)
        base = mapv.offsets["cell"] + blk * ci
        if mapv.n_d4:
            basis = cell_basis(mesh, ci, k - 2)
            phi = basis.eval(rule.points)
            C = cross_coefficients(k - 2, k - 2)
            ns = basis.n
            for j in range(mapv.n_d4):
                coef = C[:, j].reshape(3, ns)
                field = phi @ coef.T  # (npts, 3)
                dof[base + j] = np.sum(w_dot(rule.weights, vals, field)) / g.volume
        if mapv.n_d5:
            basis = cell_basis(mesh, ci, k - 1)
            phi = basis.eval(rule.points)
            dv = np.asarray(div_u(rule.points), dtype=float).reshape(-1)
            moms = phi.T @ (rule.weights * dv)
            dof[base + mapv.n_d4: base + blk] = moms[1:] / g.volume
    return dof


def w_dot(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Weighted pointwise dot product contributions w * (a . b)."""
    return w * np.sum(a * b, axis=1)


def interpolate_boundary(mesh: PolyMesh, mapv: DofMapV, g) -> np.ndarray:
    """DoF values of boundary data g on the Dirichlet-masked entries only
    (vertex values, edge values and face moments of boundary entities)."""
    k = mapv.k
    g = _as_field(g)
    dof = np.zeros(mapv.ndof)
    for v in np.nonzero(mesh.boundary_vertex)[0]:
        dof[3 * v: 3 * v + 3] = g(mesh.vertices[v][None, :]).ravel()
    n_ep = mapv.n_edge_pts
    for e in np.nonzero(mesh.boundary_edge)[0]:
        base = mapv.offsets["edge"] + 3 * n_ep * e
        dof[base: base + 3 * n_ep] = g(mapv.edge_points[e]).ravel()
    n_fm = mapv.n_face_moms
    for f in np.nonzero(mesh.boundary_face)[0]:
        geom = mesh.face_geom[f]
        pts2, pts3, w = quad.face_quadrature(mesh, f, 2 * k + 2)
        phi = face_basis(mesh, f, k - 2).eval(pts2)
        vals = g(pts3)
        base = mapv.offsets["face"] + 3 * n_fm * f
        for d, direction in enumerate((geom.normal, geom.tau1, geom.tau2)):
            comp = vals @ direction
            dof[base + d * n_fm: base + (d + 1) * n_fm] = (phi * (w * comp)[:, None]).sum(axis=0) / geom.area
    return dof


# ---------------------------------------------------------------------------
# Dimensions of the discrete complex
# ---------------------------------------------------------------------------


@dataclass
class ComplexDims:
    k: int
    dim_W: int
    dim_Sigma: int
    dim_V: int
    dim_Q: int
    dim_Z: int
    euler: int
    alternating_sum: int


def complex_dims(mesh: PolyMesh, k: int) -> ComplexDims:
    """Closed-form dimensions of the four discrete spaces and the kernel."""
    lv, le, lf, lp = mesh.n_vertices, mesh.n_edges, mesh.n_faces, mesh.n_cells
    p22 = dim_poly(k - 2, 2)
    p23 = dim_poly(k - 2, 3)
    p13 = dim_poly(k - 1, 3)
    dim_w = lv
    dim_sigma = 3 * lv + (3 * k - 2) * le + (3 * p22 - 1) * lf + (3 * p23 - p13 + 1) * lp
    dim_v = 3 * lv + 3 * (k - 1) * le + 3 * p22 * lf + 3 * p23 * lp
    dim_q = p13 * lp
    dim_z = 3 * lv + 3 * (k - 1) * le + 3 * p22 * lf + (3 * p23 - p13) * lp
    euler = mesh.euler_number()
    alt = 1 - dim_w + dim_sigma - dim_v + dim_q
    return ComplexDims(k, dim_w, dim_sigma, dim_v, dim_q, dim_z, euler, alt)


def dof_summary(mesh: PolyMesh, mapv: DofMapV, mapq: DofMapQ) -> dict:
    """JSON-ready summary of DoF counts per family and per entity type."""
    return {
        "k": mapv.k,
        "entities": {
            "vertices": mesh.n_vertices,
            "edges": mesh.n_edges,
            "faces": mesh.n_faces,
            "cells": mesh.n_cells,
        },
        "velocity": {
            "total": mapv.ndof,
            "per_family": mapv.counts_by_family(),
            "per_entity": {
                "vertex": 3,
                "edge": 3 * mapv.n_edge_pts,
                "face": 3 * mapv.n_face_moms,
                "cell": mapv.n_d4 + mapv.n_d5,
            },
            "dirichlet": int(mapv.dirichlet.sum()),
        },
        "pressure": {"total": mapq.ndof, "per_cell": mapq.n_per_cell},
    }
