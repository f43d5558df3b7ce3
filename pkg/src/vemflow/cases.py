"""Manufactured flow solutions on the unit cube.

The load is derived symbolically from the weak form actually discretized,

    nu a(u, v) + [c(u; u, v)] + b(v, p) = (f, v),   b(v, q) = int div v q,

whose strong form is  f = -nu div(eps(u)) + [(grad u) u] - grad p;  the
natural boundary traction on a Neumann face is  t = nu eps(u) n + p n.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

_X = sp.symbols("x y z")

CASE_NAMES = ("ex1-stokes", "ex2-ns", "ex3-p1", "ex3-p2")


@dataclass
class ManufacturedCase:
    name: str
    convective: bool
    nu: float
    velocity: Callable           # (n,3) -> (n,3)
    grad_velocity: Callable      # (n,3) -> (n,3,3), [i,j] = du_i/dx_j
    div_velocity: Callable       # (n,3) -> (n,)
    pressure: Callable           # (n,3) -> (n,)
    load: Callable               # (n,3) -> (n,3)
    traction: Callable           # ((n,3), normal) -> (n,3)


def _lambdify_vec(exprs) -> Callable:
    funs = [sp.lambdify(_X, e, "numpy") for e in exprs]

    def call(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        cols = [np.broadcast_to(f(pts[:, 0], pts[:, 1], pts[:, 2]), (len(pts),)) for f in funs]
        return np.stack(cols, axis=1)

    return call


def _lambdify_scalar(expr) -> Callable:
    f = sp.lambdify(_X, expr, "numpy")

    def call(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.broadcast_to(f(pts[:, 0], pts[:, 1], pts[:, 2]), (len(pts),)).astype(float)

    return call


def _build(name: str, u_expr, p_expr, nu: float, convective: bool) -> ManufacturedCase:
    u = sp.Matrix(u_expr)
    p = sp.sympify(p_expr)
    grad_u = u.jacobian(_X)                       # [i, j] = du_i / dx_j
    div_u = sp.simplify(sum(sp.diff(u[i], _X[i]) for i in range(3)))
    if div_u != 0:
        raise ValueError(f"case {name}: manufactured velocity is not divergence-free")
    eps = (grad_u + grad_u.T) / 2
    div_eps = sp.Matrix([sum(sp.diff(eps[i, j], _X[j]) for j in range(3)) for i in range(3)])
    grad_p = sp.Matrix([sp.diff(p, v) for v in _X])
    conv = grad_u * u
    f = -nu * div_eps - grad_p + (conv if convective else sp.zeros(3, 1))

    u_fun = _lambdify_vec(list(u))
    f_fun = _lambdify_vec(list(f))
    p_fun = _lambdify_scalar(p)
    g_funs = [[_lambdify_scalar(grad_u[i, j]) for j in range(3)] for i in range(3)]
    eps_funs = [[_lambdify_scalar(eps[i, j]) for j in range(3)] for i in range(3)]

    def grad_fun(pts):
        pts = np.atleast_2d(pts)
        out = np.empty((len(pts), 3, 3))
        for i in range(3):
            for j in range(3):
                out[:, i, j] = g_funs[i][j](pts)
        return out

    def traction(pts, normal):
        pts = np.atleast_2d(pts)
        normal = np.asarray(normal, dtype=float)
        out = np.zeros((len(pts), 3))
        for i in range(3):
            for j in range(3):
                out[:, i] += nu * eps_funs[i][j](pts) * normal[j]
        out += p_fun(pts)[:, None] * normal[None, :]
        return out

    return ManufacturedCase(
        name=name, convective=convective, nu=nu,
        velocity=u_fun, grad_velocity=grad_fun,
        div_velocity=lambda pts: np.zeros(len(np.atleast_2d(pts))),
        pressure=p_fun, load=f_fun, traction=traction,
    )


@lru_cache(maxsize=None)
def make_case(name: str, k: int = 2, nu: float = 1.0) -> ManufacturedCase:
    """Manufactured cases: the trigonometric Stokes and Navier-Stokes pair,
    and the degree-k benchmark velocity with polynomial (p1) or sinusoidal
    (p2) pressure."""
    x, y, z = _X
    pi = sp.pi
    if name in ("ex1-stokes", "ex2-ns"):
        u = (
            sp.sin(pi * x) * sp.cos(pi * y) * sp.cos(pi * z),
            sp.cos(pi * x) * sp.sin(pi * y) * sp.cos(pi * z),
            -2 * sp.cos(pi * x) * sp.cos(pi * y) * sp.sin(pi * z),
        )
        if name == "ex1-stokes":
            p = -pi * sp.cos(pi * x) * sp.cos(pi * y) * sp.cos(pi * z)
            return _build(name, u, p, nu, convective=False)
        p = sp.sin(2 * pi * x) * sp.sin(2 * pi * y) * sp.sin(2 * pi * z)
        return _build(name, u, p, nu, convective=True)
    if name in ("ex3-p1", "ex3-p2"):
        u = (
            k * x * z ** (k - 1),
            k * y * z ** (k - 1),
            (2 - k) * x**k + (2 - k) * y**k - 2 * z**k,
        )
        if name == "ex3-p1":
            p = x**k * y + y**k * z + z**k * x - sp.Rational(3, 2 * (k + 1))
        else:
            p = sp.sin(2 * pi * x) * sp.sin(2 * pi * y) * sp.sin(2 * pi * z)
        return _build(name, u, p, nu, convective=False)
    raise ValueError(f"unknown case {name!r}; known: {CASE_NAMES}")


def x_plane_neumann(centroid: np.ndarray, normal: np.ndarray) -> bool:
    """Face classifier for the Neumann variant: faces on x = 0 and x = 1."""
    return abs(centroid[0]) < 1e-12 or abs(centroid[0] - 1.0) < 1e-12
