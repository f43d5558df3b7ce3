"""Local and global assembly of the discrete forms.

The discrete problem follows the saddle layout

    nu a_h(u, v) + c_h(u; u, v) + b(v, p) = (f_h, v)
                                  b(u, q) = 0

with b(v, q) the exact pairing of the reconstructed divergence against the
pressure monomials and a_h the projected-strain consistency term plus the
D-recipe stabilization acting through (I - Pi^D).  The zero-mean pressure
constraint is one dense row of pressure-basis integrals, added only when
every boundary face is Dirichlet.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .dofspace import DofMapQ, DofMapV, interpolate_boundary
from .meshing import PolyMesh
from .projection import CellProjections, FaceProjections, face_extraction


@dataclass
class ProblemSpec:
    """Data of one flow problem: viscosity, load, boundary conditions."""

    nu: float
    load: Callable                       # (n,3) points -> (n,3)
    dirichlet: Callable                  # (n,3) points -> (n,3) boundary velocity
    k: int
    convective: bool = False
    neumann_faces: Callable | None = None   # (centroid, normal) -> bool
    traction: Callable | None = None        # (pts (n,3), normal) -> (n,3)
    stabilization: str = "drecipe"          # or "unit" (dofi-dofi)


def local_a(proj: CellProjections, nu: float, stabilization: str = "drecipe") -> np.ndarray:
    """nu * (projected-strain consistency + stabilization on (I - Pi^D))."""
    Qd = np.eye(proj.ndof) - proj.pi_d_dof
    if stabilization == "drecipe":
        sig = proj.sigma
    elif stabilization == "unit":
        sig = np.ones(proj.ndof)
    else:
        raise ValueError(f"unknown stabilization {stabilization!r}")
    return nu * (proj.consistency + Qd.T @ (sig[:, None] * Qd))


def local_b(proj: CellProjections) -> np.ndarray:
    """Exact pairing of div v against the pressure monomials: (pi_{k-1,3}, ndof)."""
    return proj.Hq @ proj.div


def _projected_values(proj: CellProjections):
    """Evaluate the projected basis fields at the cell quadrature points.

    Returns (P, G): P is (nq, ndof, 3) values of Pi^0_k of each basis
    function, G is (nq, ndof, 3, 3) values of the projected gradients."""
    pk = proj.Hk.shape[0]
    pq = proj.Hq.shape[0]
    phi = proj.basis.eval(proj.rule.points)
    phik = phi[:, :pk]
    phiq = phi[:, :pq]
    nq = phik.shape[0]
    P = np.empty((nq, proj.ndof, 3))
    for c in range(3):
        P[:, :, c] = phik @ proj.pi_0k[c * pk: (c + 1) * pk, :]
    G = np.empty((nq, proj.ndof, 3, 3))
    for i in range(3):
        for j in range(3):
            G[:, :, i, j] = phiq @ proj.pi_0grad[(3 * i + j) * pq: (3 * i + j + 1) * pq, :]
    return P, G


def local_c(proj: CellProjections, w_loc: np.ndarray) -> np.ndarray:
    """Matrix of c_h(w; ., .): entry (i, j) = int [(grad_pi u_j) pi w] . pi v_i."""
    C, _ = local_convection(proj, w_loc)
    return C


def local_convection(proj: CellProjections, w_loc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convective matrix C(w)[i,j] = c_h(w; phi_j, phi_i) and the transposed
    slot Cg(w)[i,j] = c_h(phi_j; w, phi_i) used by the Newton linearization."""
    P, G = _projected_values(proj)
    wq = proj.rule.weights
    Pw = np.einsum("qjc,j->qc", P, w_loc)
    Gw = np.einsum("qjab,j->qab", G, w_loc)
    T = np.einsum("qjab,qb->qja", G, Pw)       # (grad u_j) w  at points
    U = np.einsum("qab,qjb->qja", Gw, P)       # (grad w) u_j  at points
    PW = P * wq[:, None, None]
    C = np.einsum("qia,qja->ij", PW, T, optimize=True)
    Cg = np.einsum("qia,qja->ij", PW, U, optimize=True)
    return C, Cg


def local_load(proj: CellProjections, load: Callable) -> np.ndarray:
    """(f_h, v)_P = moments(v) . coefficients of Pi^0_k f."""
    pk = proj.Hk.shape[0]
    phi = proj.basis.eval(proj.rule.points)[:, :pk]
    fvals = np.asarray(load(proj.rule.points), dtype=float).reshape(-1, 3)
    rhs = np.zeros(proj.ndof)
    for c in range(3):
        cf = np.linalg.solve(proj.Hk, phi.T @ (proj.rule.weights * fvals[:, c]))
        rhs += proj.moments[c * pk: (c + 1) * pk, :].T @ cf
    return rhs


@dataclass
class GlobalSystem:
    """Assembled saddle-point operator and right-hand side."""

    k: int
    nu: float
    A: sp.csr_matrix                 # velocity block (viscous + stabilization)
    B: sp.csr_matrix                 # div pairing, (ndof_q, ndof_v)
    F: np.ndarray                    # velocity right-hand side
    e: np.ndarray | None             # pressure-integral vector (None: no mean row)
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    neumann_face_ids: list = field(default_factory=list)
    assembly_seconds: float = 0.0

    @property
    def ndof_v(self) -> int:
        return self.A.shape[0]

    @property
    def ndof_q(self) -> int:
        return self.B.shape[0]


def classify_neumann(mesh: PolyMesh, spec: ProblemSpec) -> list[int]:
    if spec.neumann_faces is None:
        return []
    out = []
    for f in np.nonzero(mesh.boundary_face)[0]:
        g = mesh.face_geom[f]
        ci = mesh.face_cells[f, 0]
        sign = mesh.face_cell_signs[f, 0]
        if spec.neumann_faces(g.centroid, sign * g.normal):
            out.append(int(f))
    return out


def _check_compatibility(mesh: PolyMesh, mapv: DofMapV, gvals: np.ndarray,
                         faceprojs: dict[int, FaceProjections]) -> None:
    """Full-Dirichlet data must satisfy the flux compatibility
    |integral of g.n over the boundary| <= 1e-10 * |boundary|."""
    flux = 0.0
    area = 0.0
    for f in np.nonzero(mesh.boundary_face)[0]:
        g = mesh.face_geom[f]
        sign = mesh.face_cell_signs[f, 0]
        base = mapv.offsets["face"] + 3 * mapv.n_face_moms * f
        flux += sign * g.area * gvals[base]      # constant normal moment
        area += g.area
    if abs(flux) > 1e-10 * max(1.0, area):
        raise ValueError(
            f"incompatible Dirichlet data: boundary flux {flux:.3e} is not zero"
        )


def assemble(mesh: PolyMesh, maps: tuple[DofMapV, DofMapQ], spec: ProblemSpec,
             projs: list[CellProjections],
             faceprojs: dict[int, FaceProjections]) -> GlobalSystem:
    """Scatter-add the local contributions into the sparse saddle system."""
    t0 = time.perf_counter()
    mapv, mapq = maps
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    F = np.zeros(mapv.ndof)
    e = np.zeros(mapq.ndof)
    pq = mapq.n_per_cell

    for ci, proj in enumerate(projs):
        gdof = mapv.cell_global[ci]
        A_loc = local_a(proj, spec.nu, spec.stabilization)
        B_loc = local_b(proj)
        rc = np.meshgrid(gdof, gdof, indexing="ij")
        rows_a.append(rc[0].ravel())
        cols_a.append(rc[1].ravel())
        vals_a.append(A_loc.ravel())
        qdof = np.arange(ci * pq, (ci + 1) * pq)
        rc = np.meshgrid(qdof, gdof, indexing="ij")
        rows_b.append(rc[0].ravel())
        cols_b.append(rc[1].ravel())
        vals_b.append(B_loc.ravel())
        F[gdof] += local_load(proj, spec.load)
        e[qdof] = proj.mono_int[:pq]

    neumann = classify_neumann(mesh, spec)
    for f in neumann:
        ci = int(mesh.face_cells[f, 0])
        sign = int(mesh.face_cell_signs[f, 0])
        fi_loc = int(np.nonzero(mesh.cells[ci][0] == f)[0][0])
        fp = faceprojs[f]
        g = mesh.face_geom[f]
        tvals = np.asarray(spec.traction(fp.pts3, sign * g.normal), dtype=float).reshape(-1, 3)
        phi2 = fp.basis.eval(fp.pts2)
        gdof = mapv.cell_global[ci]
        for c in range(3):
            FT = phi2 @ (fp.l2 @ face_extraction(mesh, mapv, ci, fi_loc, c))
            F[gdof] += FT.T @ (fp.w * tvals[:, c])

    A = sp.csr_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(mapv.ndof, mapv.ndof),
    )
    B = sp.csr_matrix(
        (np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
        shape=(mapq.ndof, mapv.ndof),
    )

    dir_mask = mapv.dirichlet.copy()
    if neumann:
        n_fm = mapv.n_face_moms
        n_ep = mapv.n_edge_pts
        neumann_set = set(neumann)
        for f in neumann:
            base = mapv.offsets["face"] + 3 * n_fm * f
            dir_mask[base: base + 3 * n_fm] = False
        # vertices/edges stay Dirichlet unless all their boundary faces are Neumann
        vertex_faces: dict[int, list[int]] = {}
        edge_faces: dict[int, list[int]] = {}
        for f in np.nonzero(mesh.boundary_face)[0]:
            for v in mesh.faces[f]:
                vertex_faces.setdefault(int(v), []).append(int(f))
            for eid in mesh.face_edges[f][0]:
                edge_faces.setdefault(int(eid), []).append(int(f))
        for v, fs in vertex_faces.items():
            if all(f in neumann_set for f in fs):
                dir_mask[3 * v: 3 * v + 3] = False
        for eid, fs in edge_faces.items():
            if all(f in neumann_set for f in fs):
                base = mapv.offsets["edge"] + 3 * n_ep * eid
                dir_mask[base: base + 3 * n_ep] = False

    gvals = interpolate_boundary(mesh, mapv, spec.dirichlet)
    gvals[~dir_mask] = 0.0
    if not neumann:
        _check_compatibility(mesh, mapv, interpolate_boundary(mesh, mapv, spec.dirichlet), faceprojs)

    return GlobalSystem(
        k=spec.k, nu=spec.nu, A=A, B=B, F=F,
        e=None if neumann else e,
        dirichlet_mask=dir_mask, dirichlet_values=gvals,
        neumann_face_ids=neumann,
        assembly_seconds=time.perf_counter() - t0,
    )


def assemble_convection(mesh: PolyMesh, mapv: DofMapV, projs: list[CellProjections],
                        u: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Global C(u) and the gradient-slot matrix Cg(u) at the state u."""
    rows, cols, vc, vg = [], [], [], []
    for ci, proj in enumerate(projs):
        gdof = mapv.cell_global[ci]
        C, Cg = local_convection(proj, u[gdof])
        rc = np.meshgrid(gdof, gdof, indexing="ij")
        rows.append(rc[0].ravel())
        cols.append(rc[1].ravel())
        vc.append(C.ravel())
        vg.append(Cg.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (mapv.ndof, mapv.ndof)
    return (sp.csr_matrix((np.concatenate(vc), (rows, cols)), shape=shape),
            sp.csr_matrix((np.concatenate(vg), (rows, cols)), shape=shape))


def dump_matrix(system: GlobalSystem, path: str) -> None:
    """Write the assembled blocks in (row, col, value) coordinate text form."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# block A (velocity), B (divergence pairing)\n")
        for name, M in (("A", system.A), ("B", system.B)):
            coo = M.tocoo()
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{name} {r} {c} {v:.17e}\n")
