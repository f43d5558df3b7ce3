"""Error norms, convergence studies and their CSV/JSON reports."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .cases import ManufacturedCase, make_case, x_plane_neumann
from .derham import check_divfree
from .dofspace import build_dof_maps
from .flow import NSOptions, SolverError, solve_navier_stokes, solve_stokes
from .forms import ProblemSpec, assemble
from .meshing import PolyMesh, generate_structured_cubes, generate_tetra_mesh, load_mesh, mesh_size
from .polynomials import dim_poly
from .projection import build_projections

CSV_HEADER = "level,h,ndof_u,ndof_p,eH1u,eL2p,newton_iters,wall_time_s"


def error_h1_velocity(sol_u: np.ndarray, case: ManufacturedCase, mesh: PolyMesh,
                      mapv, projs) -> float:
    """sqrt of the summed squared L2 distances between the exact gradient and
    the projected discrete gradient."""
    pq = dim_poly(mapv.k - 1, 3)
    total = 0.0
    for ci, proj in enumerate(projs):
        phi = proj.basis.eval(proj.rule.points)[:, :pq]
        uloc = sol_u[mapv.cell_global[ci]]
        gex = case.grad_velocity(proj.rule.points)
        err2 = np.zeros(len(proj.rule.weights))
        for i in range(3):
            for j in range(3):
                gh = phi @ (proj.grad_coeff(i, j) @ uloc)
                err2 += (gex[:, i, j] - gh) ** 2
        total += float(proj.rule.weights @ err2)
    return float(np.sqrt(total))


def error_l2_pressure(sol_p: np.ndarray, case: ManufacturedCase, mesh: PolyMesh,
                      mapq, projs) -> float:
    pq = mapq.n_per_cell
    total = 0.0
    for ci, proj in enumerate(projs):
        phi = proj.basis.eval(proj.rule.points)[:, :pq]
        ph = phi @ sol_p[ci * pq: (ci + 1) * pq]
        pex = case.pressure(proj.rule.points)
        total += float(proj.rule.weights @ (pex - ph) ** 2)
    return float(np.sqrt(total))


@dataclass
class LevelResult:
    level: int
    h: float
    ndof_u: int
    ndof_p: int
    eH1u: float
    eL2p: float
    newton_iters: int
    wall_time_s: float
    max_div_coefficient: float


@dataclass
class ErrorReport:
    case: str
    family: str
    k: int
    nu: float
    levels: list[LevelResult] = field(default_factory=list)
    failures: list = field(default_factory=list)

    def slopes(self) -> dict:
        """Least-squares log-log slopes over the last max(levels-1, 2) points."""
        if len(self.levels) < 2:
            return {"eH1u": None, "eL2p": None}
        n = max(len(self.levels) - 1, 2)
        pts = self.levels[-n:]
        h = np.log([r.h for r in pts])
        out = {}
        for key in ("eH1u", "eL2p"):
            e = np.array([getattr(r, key) for r in pts])
            if np.any(e <= 0):
                out[key] = None
            else:
                out[key] = float(np.polyfit(h, np.log(e), 1)[0])
        return out

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.levels:
            lines.append(
                f"{r.level},{r.h:.16e},{r.ndof_u},{r.ndof_p},"
                f"{r.eH1u:.16e},{r.eL2p:.16e},{r.newton_iters},{r.wall_time_s:.6f}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "case": self.case, "family": self.family, "k": self.k, "nu": self.nu,
            "slopes": self.slopes(),
            "levels": [vars(r) for r in self.levels],
            "failures": self.failures,
        }


def family_meshes(family: str, levels: int, mesh_paths=None, tet_seed: int = 0):
    """Mesh sequence for a family: structured n = 2, 4, 8, ...; tetra from the
    jittered-grid Delaunay; cvt/random are import-only (paths required)."""
    if family == "structured":
        return [generate_structured_cubes(2 ** (i + 1)) for i in range(levels)]
    if family == "tetra":
        return [generate_tetra_mesh(2 ** (i + 1), seed=tet_seed) for i in range(levels)]
    if family in ("cvt", "random"):
        if not mesh_paths:
            raise ValueError(f"family {family!r} is import-only: provide mesh paths")
        return [load_mesh(p) for p in mesh_paths]
    raise ValueError(f"unknown mesh family {family!r}")


def solve_case(case: ManufacturedCase, mesh: PolyMesh, k: int,
               stabilization: str = "drecipe", neumann: bool = False,
               newton_tol: float = 1e-10, maps=None, projs=None, faceprojs=None,
               disc_cache: dict | None = None):
    """Assemble and solve one manufactured problem on one mesh.

    Returns (solution, maps, projs, faceprojs, newton_iters).  A disc_cache
    dict memoizes (maps, projections) per (mesh, k) across repeated studies
    on the same meshes."""
    if disc_cache is not None and maps is None:
        key = (id(mesh), k)
        if key not in disc_cache:
            m = build_dof_maps(mesh, k)
            p, fp = build_projections(mesh, m[0])
            disc_cache[key] = (mesh, m, p, fp)
        _, maps, projs, faceprojs = disc_cache[key]
    if maps is None:
        maps = build_dof_maps(mesh, k)
    mapv, mapq = maps
    if projs is None:
        projs, faceprojs = build_projections(mesh, mapv)
    spec = ProblemSpec(
        nu=case.nu, load=case.load, dirichlet=case.velocity, k=k,
        convective=case.convective, stabilization=stabilization,
        neumann_faces=x_plane_neumann if neumann else None,
        traction=case.traction if neumann else None,
    )
    system = assemble(mesh, maps, spec, projs, faceprojs)
    if case.convective:
        sol = solve_navier_stokes(mesh, maps, spec, projs, faceprojs,
                                  NSOptions(tol=newton_tol), system=system)
        if not sol.converged:
            from .flow import SolverError

            raise SolverError(sol.diagnostic)
        iters = sol.newton_iterations
    else:
        sol = solve_stokes(system)
        iters = 0
    return sol, maps, projs, faceprojs, iters


def run_convergence(case_name: str, family: str, k: int, levels: int,
                    nu: float = 1.0, stabilization: str = "drecipe",
                    neumann: bool = False, newton_tol: float = 1e-10,
                    mesh_paths=None, out: str | None = None,
                    meshes=None, disc_cache: dict | None = None) -> ErrorReport:
    """Solve a manufactured case on a refinement sequence and fit rates."""
    case = make_case(case_name, k=k, nu=nu)
    if meshes is None:
        meshes = family_meshes(family, levels, mesh_paths=mesh_paths)
    report = ErrorReport(case=case_name, family=family, k=k, nu=nu)
    for lvl, mesh in enumerate(meshes):
        t0 = time.perf_counter()
        try:
            sol, maps, projs, faceprojs, iters = solve_case(
                case, mesh, k, stabilization=stabilization, neumann=neumann,
                newton_tol=newton_tol, disc_cache=disc_cache,
            )
        except SolverError as exc:
            report.failures.append({"level": lvl, "error": str(exc)})
            break
        mapv, mapq = maps
        e1 = error_h1_velocity(sol.u, case, mesh, mapv, projs)
        e2 = error_l2_pressure(sol.p, case, mesh, mapq, projs)
        dv = check_divfree(sol.u, mesh, mapv, projs)
        report.levels.append(LevelResult(
            level=lvl, h=mesh_size(mesh), ndof_u=mapv.ndof, ndof_p=mapq.ndof,
            eH1u=e1, eL2p=e2, newton_iters=iters,
            wall_time_s=time.perf_counter() - t0,
            max_div_coefficient=dv,
        ))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        with open(out + ".json", "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=1)
    return report


def rates_from_csv(path: str) -> dict:
    """Fit slopes from a results CSV written by run_convergence."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = line.strip().split(",")
            rows.append({k: v for k, v in zip(header, vals)})
    if len(rows) < 2:
        raise ValueError("need at least two levels to fit a slope")
    n = max(len(rows) - 1, 2)
    rows = rows[-n:]
    h = np.log([float(r["h"]) for r in rows])
    out = {}
    for key in ("eH1u", "eL2p"):
        e = np.log([float(r[key]) for r in rows])
        out[key] = float(np.polyfit(h, e, 1)[0])
    return out
