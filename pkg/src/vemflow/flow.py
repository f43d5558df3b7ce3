"""Linear Stokes solve and Newton iteration for the discrete Navier-Stokes
problem, plus the reduced-scheme solve and solution export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dofspace import DofMapQ, DofMapV, ReducedMaps, build_reduced_maps
from .forms import GlobalSystem, ProblemSpec, assemble, assemble_convection, local_a
from .meshing import PolyMesh
from .polynomials import dim_poly
from .projection import CellProjections


@dataclass
class NSOptions:
    tol: float = 1e-10           # relative increment tolerance
    max_iter: int = 25
    initial_guess: str = "stokes"   # or "zero"


@dataclass
class FlowSolution:
    u: np.ndarray                # full velocity DoF vector (Dirichlet included)
    p: np.ndarray                # pressure coefficients per cell
    lam: float                   # zero-mean multiplier (0.0 when absent)
    increments: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    condition_estimates: list = field(default_factory=list)
    linear_residual: float = 0.0
    converged: bool = True
    diagnostic: str = ""

    @property
    def newton_iterations(self) -> int:
        return len(self.increments)


class SolverError(RuntimeError):
    pass


def _equilibrated_solve(K: sp.csc_matrix, rhs: np.ndarray,
                        estimate_condition: bool = False) -> tuple[np.ndarray, float]:
    """Direct solve with one pass of symmetric inf-norm equilibration.

    Saddle systems mix strain-scaled velocity rows with volume-scaled
    constraint rows; rescaling keeps the factorization accurate on the
    constraint block (the diagonal is zero there, so plain Jacobi would not
    apply).  Optionally returns a 1-norm condition estimate of the
    equilibrated matrix (nan when not requested)."""
    absK = abs(K)
    rowmax = np.asarray(absK.max(axis=1).todense()).ravel()
    rowmax[rowmax == 0] = 1.0
    d = 1.0 / np.sqrt(rowmax)
    Dm = sp.diags(d)
    Ks = (Dm @ K @ Dm).tocsc()
    lu = spla.splu(Ks)
    cond = float("nan")
    if estimate_condition:
        n = Ks.shape[0]
        inv = spla.LinearOperator((n, n), matvec=lu.solve,
                                  rmatvec=lambda v: lu.solve(v, trans="T"))
        cond = float(spla.onenormest(Ks) * spla.onenormest(inv))
    y = lu.solve(d * rhs)
    return d * y, cond


def _saddle_matrix(system: GlobalSystem, C: sp.spmatrix | None = None) -> tuple[sp.csc_matrix, np.ndarray, np.ndarray]:
    """Eliminate Dirichlet DoFs and append the zero-mean row when present.

    Returns (K, rhs, free velocity index)."""
    mask = system.dirichlet_mask
    free = np.nonzero(~mask)[0]
    A = system.A if C is None else (system.A + C).tocsr()
    lift = system.dirichlet_values
    F = system.F - A @ lift
    G = -(system.B @ lift)
    A_ff = A[free][:, free]
    B_f = system.B[:, free]
    nq = system.ndof_q
    if system.e is not None:
        e = sp.csr_matrix(system.e[None, :])
        K = sp.bmat([
            [A_ff, B_f.T, None],
            [B_f, None, e.T],
            [None, e, None],
        ], format="csc")
        rhs = np.concatenate([F[free], G, [0.0]])
    else:
        K = sp.bmat([[A_ff, B_f.T], [B_f, None]], format="csc")
        rhs = np.concatenate([F[free], G])
    return K, rhs, free


def _split(system: GlobalSystem, free: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    nf = len(free)
    nq = system.ndof_q
    u = system.dirichlet_values.copy()
    u[free] = x[:nf]
    p = x[nf: nf + nq]
    lam = float(x[nf + nq]) if system.e is not None else 0.0
    return u, p, lam


def solve_stokes(system: GlobalSystem) -> FlowSolution:
    """Direct sparse solve of the assembled Stokes system."""
    K, rhs, free = _saddle_matrix(system)
    try:
        x, _ = _equilibrated_solve(K, rhs)
    except RuntimeError as exc:
        raise SolverError(
            "singular Stokes system: check the zero-mean pressure constraint "
            "and that not every velocity DoF is constrained"
        ) from exc
    u, p, lam = _split(system, free, x)
    nrm = np.linalg.norm(rhs)
    res = np.linalg.norm(K @ x - rhs) / (nrm if nrm > 0 else 1.0)
    if not np.isfinite(res) or res > 1e-8:
        raise SolverError(f"direct solve failed: relative residual {res:.3e}")
    return FlowSolution(u=u, p=p, lam=lam, linear_residual=float(res))


def solve_navier_stokes(mesh: PolyMesh, maps: tuple[DofMapV, DofMapQ], spec: ProblemSpec,
                        projs: list[CellProjections], faceprojs: dict,
                        opts: NSOptions | None = None,
                        system: GlobalSystem | None = None) -> FlowSolution:
    """Newton iteration with the displacement stopping criterion
    ||x_n - x_{n+1}|| < tol ||x_n|| on the combined DoF vector."""
    opts = opts or NSOptions()
    if opts.max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    mapv, mapq = maps
    if system is None:
        system = assemble(mesh, maps, spec, projs, faceprojs)
    mask = system.dirichlet_mask
    free = np.nonzero(~mask)[0]

    if opts.initial_guess == "stokes":
        sol = solve_stokes(system)
        u, p, lam = sol.u, sol.p, sol.lam
    else:
        u = system.dirichlet_values.copy()
        p = np.zeros(system.ndof_q)
        lam = 0.0

    increments = []
    residuals = []
    condition_estimates = []
    for it in range(opts.max_iter):
        C, Cg = assemble_convection(mesh, mapv, projs, u)
        Rm = system.A @ u + C @ u + system.B.T @ p - system.F
        Rc = system.B @ u
        J = system.A + C + Cg
        J_ff = J[free][:, free]
        B_f = system.B[:, free]
        if system.e is not None:
            Rc = Rc + lam * system.e
            Re = np.array([system.e @ p])
            e = sp.csr_matrix(system.e[None, :])
            K = sp.bmat([[J_ff, B_f.T, None], [B_f, None, e.T], [None, e, None]], format="csc")
            rhs = -np.concatenate([Rm[free], Rc, Re])
            residuals.append(float(np.linalg.norm(rhs)))
        else:
            K = sp.bmat([[J_ff, B_f.T], [B_f, None]], format="csc")
            rhs = -np.concatenate([Rm[free], Rc])
            residuals.append(float(np.linalg.norm(rhs)))
        try:
            dx, cond = _equilibrated_solve(K, rhs, estimate_condition=True)
            condition_estimates.append(cond)
        except RuntimeError as exc:
            raise SolverError(f"linear solve failed in Newton step {it}") from exc

        nf = len(free)
        state = np.concatenate([u[free], p, [lam] if system.e is not None else []])
        u = u.copy()
        u[free] += dx[:nf]
        p = p + dx[nf: nf + system.ndof_q]
        if system.e is not None:
            lam += float(dx[nf + system.ndof_q])
        inc = float(np.linalg.norm(dx))
        increments.append(inc)
        base = float(np.linalg.norm(state))
        if inc < opts.tol * max(base, 1e-300) or (base == 0.0 and inc == 0.0):
            return FlowSolution(u=u, p=p, lam=lam, increments=increments,
                                residuals=residuals,
                                condition_estimates=condition_estimates,
                                linear_residual=0.0)
    # non-convergence returns the last iterate with a diagnostic
    return FlowSolution(
        u=u, p=p, lam=lam, increments=increments, residuals=residuals,
        condition_estimates=condition_estimates, converged=False,
        diagnostic=(f"Newton did not converge in {opts.max_iter} iterations; "
                    f"last increment {increments[-1]:.3e}"),
    )


# ---------------------------------------------------------------------------
# Reduced scheme
# ---------------------------------------------------------------------------


def reduced_embedding(mesh: PolyMesh, mapv: DofMapV, projs: list[CellProjections], ci: int) -> np.ndarray:
    """Cell matrix mapping reduced local DoFs (families 1-4) to the full local
    vector: on the reduced space the divergence is the constant boundary flux
    over the volume, which determines the divergence moments."""
    lay = mapv.layouts[ci]
    proj = projs[ci]
    keep = np.ones(lay.ndof, dtype=bool)
    keep[lay.d5] = False
    E = np.zeros((lay.ndof, int(keep.sum())))
    E[np.nonzero(keep)[0], np.arange(int(keep.sum()))] = 1.0
    if mapv.n_d5:
        fids, signs = mesh.cells[ci]
        flux_row = np.zeros(lay.ndof)
        for fi_loc, f in enumerate(fids):
            flux_row[lay.face[fi_loc, 0, 0]] += signs[fi_loc] * mesh.face_geom[f].area
        # D5_b(v) = (div v) * int m_b / vol^2 with div v = flux / vol
        mono = proj.mono_int[1: 1 + mapv.n_d5]
        E[lay.d5, :] = np.outer(mono / proj.vol**2, flux_row[np.nonzero(keep)[0]])
    return E


def solve_stokes_reduced(mesh: PolyMesh, maps: tuple[DofMapV, DofMapQ], spec: ProblemSpec,
                         projs: list[CellProjections], faceprojs: dict,
                         red: ReducedMaps | None = None) -> tuple[FlowSolution, ReducedMaps]:
    """Stokes solve in the reduced pair (no divergence moments, constant
    pressures); returns the solution in reduced numbering."""
    mapv, mapq = maps
    red = red or build_reduced_maps(mesh, mapv.k, maps)
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    F = np.zeros(red.ndof_v)
    e = np.zeros(red.ndof_q)
    from .forms import local_b, local_load

    for ci, proj in enumerate(projs):
        E = reduced_embedding(mesh, mapv, projs, ci)
        gfull = mapv.cell_global[ci]
        lay = mapv.layouts[ci]
        keep_loc = np.ones(lay.ndof, dtype=bool)
        keep_loc[lay.d5] = False
        gred = red.full_to_red[gfull[keep_loc]]
        A_loc = E.T @ local_a(proj, spec.nu, spec.stabilization) @ E
        b_loc = (local_b(proj) @ E)[0:1, :]
        rc = np.meshgrid(gred, gred, indexing="ij")
        rows_a.append(rc[0].ravel()); cols_a.append(rc[1].ravel()); vals_a.append(A_loc.ravel())
        rows_b.append(np.full(len(gred), ci)); cols_b.append(gred); vals_b.append(b_loc.ravel())
        F[gred] += E.T @ local_load(proj, spec.load)
        e[ci] = proj.vol

    A = sp.csr_matrix((np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
                      shape=(red.ndof_v, red.ndof_v))
    B = sp.csr_matrix((np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
                      shape=(red.ndof_q, red.ndof_v))
    dir_mask = mapv.dirichlet[red.keep]
    from .dofspace import interpolate_boundary
    gvals = interpolate_boundary(mesh, mapv, spec.dirichlet)[red.keep]
    gvals[~dir_mask] = 0.0
    system = GlobalSystem(k=spec.k, nu=spec.nu, A=A, B=B, F=F, e=e,
                          dirichlet_mask=dir_mask, dirichlet_values=gvals)
    return solve_stokes(system), red


@dataclass
class ReducedComparison:
    max_velocity_diff: float
    max_pressure_diff: float
    dof_saving: int
    expected_saving: int

    @property
    def saving_matches(self) -> bool:
        return self.dof_saving == self.expected_saving


def reduce_and_compare(mesh: PolyMesh, maps: tuple[DofMapV, DofMapQ], spec: ProblemSpec,
                       projs: list[CellProjections], faceprojs: dict) -> ReducedComparison:
    """Solve the full and the reduced Stokes problems and compare: shared
    velocity DoFs must coincide and the reduced pressure must equal the cell
    means of the full pressure."""
    mapv, mapq = maps
    system = assemble(mesh, maps, spec, projs, faceprojs)
    full = solve_stokes(system)
    redsol, red = solve_stokes_reduced(mesh, maps, spec, projs, faceprojs)
    u_shared_full = full.u[red.keep]
    du = float(np.max(np.abs(u_shared_full - redsol.u)))
    dp = 0.0
    pq = mapq.n_per_cell
    for ci, proj in enumerate(projs):
        mean_full = float(proj.mono_int[:pq] @ full.p[ci * pq: (ci + 1) * pq]) / proj.vol
        dp = max(dp, abs(mean_full - redsol.p[ci]))
    saving = (mapv.ndof + mapq.ndof) - (red.ndof_v + red.ndof_q)
    expected = (2 * dim_poly(mapv.k - 1, 3) - 2) * mesh.n_cells
    return ReducedComparison(du, dp, saving, expected)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_solution_json(sol: FlowSolution, path: str, meta: dict | None = None) -> None:
    payload = {
        "velocity_dofs": sol.u.tolist(),
        "pressure_coefficients": sol.p.tolist(),
        "multiplier": sol.lam,
        "newton_increments": sol.increments,
        "metadata": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def sample_fields_csv(mesh: PolyMesh, maps, projs: list[CellProjections],
                      sol: FlowSolution, path: str) -> None:
    """Cell-barycenter values of the projected velocity and the pressure."""
    mapv, mapq = maps
    pk = dim_poly(mapv.k, 3)
    pq = mapq.n_per_cell
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cell,x,y,z,ux,uy,uz,p\n")
        for ci, proj in enumerate(projs):
            xb = mesh.cell_geom[ci].barycenter
            phi = proj.basis.eval(xb[None, :])[0, :pk]
            uloc = sol.u[mapv.cell_global[ci]]
            uvals = [float(phi @ (proj.pi_0k[c * pk: (c + 1) * pk] @ uloc)) for c in range(3)]
            pval = float(phi[:pq] @ sol.p[ci * pq: (ci + 1) * pq])
            fh.write(f"{ci},{xb[0]:.17e},{xb[1]:.17e},{xb[2]:.17e},"
                     f"{uvals[0]:.17e},{uvals[1]:.17e},{uvals[2]:.17e},{pval:.17e}\n")
