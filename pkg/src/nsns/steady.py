"""Stationary Stokes / Navier-Stokes solves with Nitsche slip conditions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import forms, linalg
from .forms import PhysicalParams, apply_dirichlet
from .spaces import DirichletData, MixedSpace, dirichlet_values

log = logging.getLogger(__name__)


LinearSolveError = linalg.LinearSolveError


@dataclass
class SolutionState:
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float = 0.0

    @classmethod
    def from_vector(cls, space: MixedSpace, x) -> "SolutionState":
        u, p, lam = space.split(x)
        return cls(np.array(u), np.array(p), lam)

    @classmethod
    def zeros(cls, space: MixedSpace) -> "SolutionState":
        return cls(np.zeros(space.n_velocity), np.zeros(space.n_pressure), 0.0)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.pressure, [self.multiplier]])


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    converged: bool = False


def linear_solve(A, b, context=""):
    """Sparse direct solve; raises :class:`LinearSolveError` on failure."""
    return linalg.solve(A, b, context)


@dataclass
class SteadyProblem:
    """Assembled pieces of a stationary problem on a fixed space."""
    space: MixedSpace
    params: PhysicalParams
    operator: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: DirichletData

    @classmethod
    def build(cls, space, params, f=None, dirichlet_data=None, g_normal=None, g_tangent=None):
        dirichlet = dirichlet_data
        rhs = np.zeros(space.n_unknowns)
        if f is not None:
            rhs += forms.assemble_load(space, f)
        rhs += forms.assemble_nitsche_data(space, params, g_normal, g_tangent)
        if dirichlet is None or callable(dirichlet):
            dirichlet = dirichlet_values(space, dirichlet)
        return cls(space, params, forms.assemble_stokes_operator(space, params), rhs, dirichlet)

    def residual(self, x):
        """Nonlinear algebraic residual, with Dirichlet rows replaced by the
        mismatch ``x[D] - g``."""
        C = forms.assemble_convection(self.space, x)
        R = self.operator @ x + C @ x - self.rhs
        R[self.dirichlet.dofs] = x[self.dirichlet.dofs] - self.dirichlet.values
        return R

    def jacobian(self, x):
        return self.operator + forms.assemble_convection(self.space, x, newton_linearize=True)


def _context(space, params):
    m = space.mesh
    return (f"{m.n_triangles} triangles, h={m.h:.3g}, nu={params.nu:g}, "
            f"beta={params.beta:g}, gamma={params.gamma:g}")


def solve_stokes(space, params, f=None, dirichlet_data=None, g_normal=None,
                 g_tangent=None) -> SolutionState:
    """Linear Stokes-Nitsche solve (convection dropped)."""
    prob = SteadyProblem.build(space, params, f, dirichlet_data, g_normal, g_tangent)
    A, b = apply_dirichlet(prob.operator, prob.rhs, prob.dirichlet.dofs, prob.dirichlet.values)
    x = linear_solve(A, b, _context(space, params))
    return SolutionState.from_vector(space, x)


def solve_oseen(space, params, advection, f=None, dirichlet_data=None, g_normal=None,
                g_tangent=None) -> SolutionState:
    """Linearized problem with a frozen advecting velocity ``advection``."""
    prob = SteadyProblem.build(space, params, f, dirichlet_data, g_normal, g_tangent)
    K = prob.operator + forms.assemble_convection(space, advection)
    A, b = apply_dirichlet(K, prob.rhs, prob.dirichlet.dofs, prob.dirichlet.values)
    return SolutionState.from_vector(space, linear_solve(A, b, _context(space, params)))


def solve_navier_stokes(space, params, f=None, dirichlet_data=None, tol=1e-7, max_iter=25,
                        g_normal=None, g_tangent=None, initial=None, problem=None):
    """Newton's method from a zero initial guess.

    The first update is the Stokes solve.  Stops when the Euclidean norm
    of the full algebraic residual (multiplier row included) is <= ``tol``.

    Returns
    -------
    (SolutionState, NewtonReport)
    """
    prob = problem or SteadyProblem.build(space, params, f, dirichlet_data, g_normal, g_tangent)
    x = np.zeros(space.n_unknowns) if initial is None else np.array(initial, dtype=float)
    report = NewtonReport()
    ctx = _context(space, params)
    R = prob.residual(x)
    report.residual_norms.append(float(np.linalg.norm(R)))
    while True:
        rn = report.residual_norms[-1]
        if rn <= tol:
            report.converged = True
            break
        if report.iterations >= max_iter or not math.isfinite(rn):
            log.warning("Newton did not converge after %d iterations (residual %.3e; %s)",
                        report.iterations, rn, ctx)
            break
        D = prob.dirichlet
        A, b = apply_dirichlet(prob.jacobian(x), -R, D.dofs, D.values - x[D.dofs])
        x = x + linear_solve(A, b, ctx)
        report.iterations += 1
        R = prob.residual(x)
        report.residual_norms.append(float(np.linalg.norm(R)))
        log.info("Newton %d: residual %.3e", report.iterations, report.residual_norms[-1])
    return SolutionState.from_vector(space, x), report


@dataclass
class ConvergenceLevel:
    n: int
    dofs: int
    newton_iterations: int
    converged: bool
    errors: forms.ErrorNorms
    residual_norms: list


def convergence_rates(errors):
    """log2(e_coarse / e_fine) for successive uniform refinements."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def run_manufactured_convergence(levels, params=PhysicalParams(), solution=None,
                                 tol=1e-7, max_iter=25):
    """Solve the manufactured problem on each ``n x n`` level.

    ``solution`` defaults to the polynomial benchmark on (-1, 1)^2 with
    slip on the bottom side.
    """
    from .benchmarks import ManufacturedSolution

    sol = solution or ManufacturedSolution()
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be increasing")
    out = []
    for n in levels:
        space = sol.space(n)
        state, report = solve_navier_stokes(space, params, tol=tol, max_iter=max_iter,
                                            **sol.problem_data(params))
        if not report.converged:
            log.warning("level %d: Newton failed to converge", n)
        err = forms.error_norms(space, state.velocity, state.pressure,
                                sol.velocity, sol.pressure, sol.velocity_gradient)
        out.append(ConvergenceLevel(n, space.n_total, report.iterations, report.converged,
                                    err, report.residual_norms))
    return out
