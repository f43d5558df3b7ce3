"""Command-line driver: mesh generation and checking, DoF summaries,
complex verification, single solves and convergence studies."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, derham
from .cases import make_case, x_plane_neumann
from .dofspace import build_dof_maps, dof_summary
from .flow import NSOptions, export_solution_json, sample_fields_csv, solve_navier_stokes, solve_stokes
from .forms import ProblemSpec, assemble, dump_matrix
from .meshing import generate_structured_cubes, generate_tetra_mesh, load_mesh, mesh_size, quality_check
from .projection import build_projections


def _get_mesh(args):
    if getattr(args, "mesh", None):
        return load_mesh(args.mesh, getattr(args, "format", "json-poly"))
    if getattr(args, "cubes", None):
        return generate_structured_cubes(args.cubes)
    if getattr(args, "tets", None):
        return generate_tetra_mesh(args.tets, jitter=args.jitter, seed=args.seed)
    raise SystemExit("no mesh specified: use --mesh, --cubes or --tets")


def cmd_mesh_gen(args):
    mesh = _get_mesh(args)
    mesh.save_json(args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_edges} edges, "
          f"{mesh.n_faces} faces, {mesh.n_cells} cells, h = {mesh_size(mesh):.6g}")


def cmd_mesh_check(args):
    mesh = load_mesh(args.file, args.format)
    rep = quality_check(mesh, args.rho)
    print(f"cells: {mesh.n_cells}  h: {mesh_size(mesh):.6g}  euler: {mesh.euler_number()}")
    print(f"rho_hat: {rep.rho_hat:.6g}  min ball proxy: {rep.ball_ratio.min():.6g}")
    print(f"{'PASS' if rep.passed else 'FAIL'} against rho = {args.rho}")
    if rep.failing_cells:
        print("failing cells:", rep.failing_cells[:20])
    return 0 if rep.passed else 1


def cmd_dofs(args):
    mesh = _get_mesh(args)
    maps = build_dof_maps(mesh, args.k)
    print(json.dumps(dof_summary(mesh, *maps), indent=1))


def cmd_complex_check(args):
    mesh = _get_mesh(args)
    rep = derham.check_div_surjectivity(mesh, args.k, cap=args.cap)
    payload = rep.to_json_dict()
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    print(json.dumps(payload, indent=1))
    ok = rep.exactness_ok and rep.rank is not None and rep.rank.passed
    return 0 if ok else 1


def cmd_solve(args):
    mesh = _get_mesh(args)
    case = make_case(args.case, k=args.k, nu=args.nu)
    maps = build_dof_maps(mesh, args.k)
    mapv, mapq = maps
    projs, faceprojs = build_projections(mesh, mapv)
    spec = ProblemSpec(
        nu=args.nu, load=case.load, dirichlet=case.velocity, k=args.k,
        convective=case.convective, stabilization=args.stab,
        neumann_faces=x_plane_neumann if args.neumann else None,
        traction=case.traction if args.neumann else None,
    )
    system = assemble(mesh, maps, spec, projs, faceprojs)
    if args.dump_matrix:
        dump_matrix(system, args.dump_matrix)
    if case.convective:
        sol = solve_navier_stokes(mesh, maps, spec, projs, faceprojs,
                                  NSOptions(tol=args.newton_tol), system=system)
        print(f"Newton converged in {sol.newton_iterations} iterations")
    else:
        sol = solve_stokes(system)
    e1 = bench.error_h1_velocity(sol.u, case, mesh, mapv, projs)
    e2 = bench.error_l2_pressure(sol.p, case, mesh, mapq, projs)
    dv = derham.check_divfree(sol.u, mesh, mapv, projs)
    print(f"h = {mesh_size(mesh):.6g}  eH1u = {e1:.6e}  eL2p = {e2:.6e}  max div = {dv:.3e}")
    if args.export:
        export_solution_json(sol, args.export, meta={"case": args.case, "k": args.k})
    if args.sample:
        sample_fields_csv(mesh, maps, projs, sol, args.sample)


def cmd_bench_run(args):
    rep = bench.run_convergence(
        args.case, args.family, args.k, args.levels, nu=args.nu,
        stabilization=args.stab, neumann=args.neumann,
        mesh_paths=args.mesh_paths, out=args.out,
    )
    sys.stdout.write(rep.to_csv())
    print("slopes:", json.dumps(rep.slopes()))


def cmd_bench_rates(args):
    print(json.dumps(bench.rates_from_csv(args.file), indent=1))


def _add_mesh_source(p, gen=False):
    p.add_argument("--mesh", help="mesh file (json-poly)")
    p.add_argument("--format", default="json-poly", choices=["json-poly", "tetra-list"])
    p.add_argument("--cubes", type=int, help="generate n^3 structured cubes")
    p.add_argument("--tets", type=int, help="generate 6 n^3 tetrahedra")
    p.add_argument("--jitter", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vemflow")
    sub = ap.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities").add_subparsers(dest="sub", required=True)
    gen = mesh.add_parser("gen", help="generate a mesh file")
    _add_mesh_source(gen, gen=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_mesh_gen)
    chk = mesh.add_parser("check", help="shape-regularity diagnostics")
    chk.add_argument("file")
    chk.add_argument("--rho", type=float, default=0.1)
    chk.add_argument("--format", default="json-poly", choices=["json-poly", "tetra-list"])
    chk.set_defaults(func=cmd_mesh_check)

    dofs = sub.add_parser("dofs", help="DoF-map summary (JSON)")
    _add_mesh_source(dofs)
    dofs.add_argument("--k", type=int, default=2)
    dofs.set_defaults(func=cmd_dofs)

    cc = sub.add_parser("complex-check", help="discrete complex verification")
    _add_mesh_source(cc)
    cc.add_argument("--k", type=int, default=2)
    cc.add_argument("--cap", type=int, default=derham.DENSE_DOF_CAP)
    cc.add_argument("--json", help="write the report to this file")
    cc.set_defaults(func=cmd_complex_check)

    sv = sub.add_parser("solve", help="solve one manufactured problem")
    _add_mesh_source(sv)
    sv.add_argument("--case", default="ex1-stokes")
    sv.add_argument("--k", type=int, default=2)
    sv.add_argument("--nu", type=float, default=1.0)
    sv.add_argument("--stab", default="drecipe", choices=["drecipe", "unit"])
    sv.add_argument("--neumann", action="store_true", help="Neumann faces on x = 0, 1")
    sv.add_argument("--newton-tol", type=float, default=1e-10)
    sv.add_argument("--dump-matrix", help="write assembled blocks as (row, col, value)")
    sv.add_argument("--export", help="write the solution as JSON")
    sv.add_argument("--sample", help="write barycenter samples as CSV")
    sv.set_defaults(func=cmd_solve)

    br = sub.add_parser("bench", help="convergence studies").add_subparsers(dest="sub", required=True)
    run = br.add_parser("run")
    run.add_argument("--case", required=True)
    run.add_argument("--family", default="structured",
                     choices=["structured", "tetra", "cvt", "random"])
    run.add_argument("--k", type=int, default=2)
    run.add_argument("--levels", type=int, default=3)
    run.add_argument("--nu", type=float, default=1.0)
    run.add_argument("--stab", default="drecipe", choices=["drecipe", "unit"])
    run.add_argument("--neumann", action="store_true")
    run.add_argument("--mesh-paths", nargs="*", help="mesh files for import-only families")
    run.add_argument("--out", help="CSV output path (a .json summary is written too)")
    run.set_defaults(func=cmd_bench_run)
    rates = br.add_parser("rates")
    rates.add_argument("file")
    rates.set_defaults(func=cmd_bench_rates)

    args = ap.parse_args(argv)
    rc = args.func(args)
    return int(rc) if rc else 0


if __name__ == "__main__":
    sys.exit(main())
