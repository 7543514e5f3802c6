"""Benchmark problem definitions: manufactured solution and lid-driven cavity."""
from __future__ import annotations

import numpy as np

from .forms import PhysicalParams
from .mesh import BoundaryTag, generate_structured_square
from .spaces import build_taylor_hood

TOL = 1e-12


class ManufacturedSolution:
    """Polynomial solution on (-1, 1)^2, slip on x2 = -1, Dirichlet elsewhere.

    u = (2 x2 (1 - x1^2), -2 x1 (1 - x2^2)),  p = (2 x1 - 1)(2 x2 - 1).
    The forcing, Dirichlet data and slip data are derived from it.
    """

    corner_min = (-1.0, -1.0)
    corner_max = (1.0, 1.0)

    @staticmethod
    def tagger(mid):
        return BoundaryTag.NAVIER if abs(mid[1] + 1.0) < TOL else BoundaryTag.DIRICHLET

    def mesh(self, n):
        return generate_structured_square(n, self.corner_min, self.corner_max, self.tagger)

    def space(self, n):
        return build_taylor_hood(self.mesh(n))

    @staticmethod
    def velocity(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([2 * x2 * (1 - x1 ** 2), -2 * x1 * (1 - x2 ** 2)], axis=-1)

    @staticmethod
    def velocity_gradient(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = -4 * x1 * x2
        g[..., 0, 1] = 2 * (1 - x1 ** 2)
        g[..., 1, 0] = -2 * (1 - x2 ** 2)
        g[..., 1, 1] = 4 * x1 * x2
        return g

    @staticmethod
    def velocity_laplacian(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-4 * x2, 4 * x1], axis=-1)

    @staticmethod
    def pressure(x):
        return (2 * x[..., 0] - 1) * (2 * x[..., 1] - 1)

    @staticmethod
    def pressure_gradient(x):
        return np.stack([2 * (2 * x[..., 1] - 1), 2 * (2 * x[..., 0] - 1)], axis=-1)

    def forcing(self, nu):
        """f = -nu lap u + (u . grad) u + grad p."""
        def f(x):
            u = self.velocity(x)
            g = self.velocity_gradient(x)
            return (-nu * self.velocity_laplacian(x)
                    + np.einsum("...ij,...j->...i", g, u)
                    + self.pressure_gradient(x))
        return f

    def normal_data(self, x, n):
        return np.einsum("...i,...i->...", self.velocity(x), n)

    def tangential_data(self, params: PhysicalParams):
        """nu n^t D(u) tau + beta u . tau evaluated from the exact solution."""
        def g(x, n, t):
            gu = self.velocity_gradient(x)
            D = gu + np.swapaxes(gu, -1, -2)
            return (params.nu * np.einsum("...i,...ij,...j->...", n, D, t)
                    + params.beta * np.einsum("...i,...i->...", self.velocity(x), t))
        return g

    def problem_data(self, params: PhysicalParams):
        """Keyword arguments for the steady solvers."""
        return dict(f=self.forcing(params.nu), dirichlet_data=self.velocity,
                    g_normal=self.normal_data, g_tangent=self.tangential_data(params))


# lid-driven cavity -----------------------------------------------------------

def cavity_tagger(mid):
    """Dirichlet on the lid x2 = 1, Navier on the other three sides."""
    return BoundaryTag.DIRICHLET if abs(mid[1] - 1.0) < TOL else BoundaryTag.NAVIER


def lid_velocity(x):
    """Regularized lid profile, zero velocity off the lid."""
    x1, x2 = x[..., 0], x[..., 1]
    speed = np.clip(np.minimum(10 * x1, 10 - 10 * x1), 0.0, 1.0)
    speed = np.where(np.abs(x2 - 1.0) < TOL, speed, 0.0)
    return np.stack([speed, np.zeros_like(speed)], axis=-1)


def cavity_mesh(n):
    return generate_structured_square(n, (0.0, 0.0), (1.0, 1.0), cavity_tagger)


def cavity_params(re, beta=1.0, gamma=10.0):
    """Unit lid speed and unit cavity, so nu = 1 / Re."""
    if not re > 0:
        raise ValueError(f"Reynolds number must be positive, got {re}")
    return PhysicalParams(nu=1.0 / re, beta=beta, gamma=gamma)


class TaylorGreen:
    """Decaying vortex on the unit square with free slip on every side.

    u = e^{-2 nu pi^2 t} (sin(pi x) cos(pi y), -cos(pi x) sin(pi y)).
    Exact for the unsteady Stokes equations with zero pressure and f = 0,
    and for Navier-Stokes with p = -e^{-4 nu pi^2 t}(cos 2 pi x + cos 2 pi y)/4.
    """

    def __init__(self, nu):
        self.nu = nu

    def decay(self, t):
        return np.exp(-2 * self.nu * np.pi ** 2 * t)

    def velocity(self, t):
        def u(x):
            X, Y = np.pi * x[..., 0], np.pi * x[..., 1]
            return self.decay(t) * np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)],
                                            axis=-1)
        return u

    @staticmethod
    def tagger(mid):
        return BoundaryTag.NAVIER

    def mesh(self, n):
        return generate_structured_square(n, (0.0, 0.0), (1.0, 1.0), self.tagger)
